"""Command-line front end.

    bvpwalk solve    --example 1ball --bcs absorbing --h 0.0032 --eps 0.02 --seed 7
    bvpwalk study    --example 1 --h-list 0.0128,0.0064,0.0032,0.0016 --eps-list ...
    bvpwalk eikonal  --example 3 --grid-spacing 0.008 --out grid.eiko
    bvpwalk validate --example 2 --D 5 --bcs mixed

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 tolerance not met
(or, for ``validate``, a violated requirement).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .estimator import ConvergenceRow, convergence_study, estimate_adaptive
from .geometry import GridField, boundary_classes_present, read_grid, write_grid
from .integrators import Method, StepParams
from .presets import BCS, PRESET_IDS, Preset, load_preset
from .problem import validate_problem

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_TOLERANCE = 0, 1, 2, 3
COMMANDS = ("solve", "study", "eikonal", "validate")
CSV_HEADER = "h,rel_error,estimate,stderr,n_used,wall_time_s"

DEFAULT_H_LISTS = {
    "1": [0.0128, 0.0064, 0.0032, 0.0016],
    "2": [0.0064, 0.0032, 0.0016, 0.0008],
    "3": [0.0064, 0.0032, 0.0016, 0.0008],
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    example: str = "1"
    method: str = "mm"
    bcs: str = "absorbing"
    h: Optional[float] = None
    h_list: Optional[list[float]] = None
    # relative to |u_exact| unless abs_eps is given
    eps: float = 0.01
    eps_list: Optional[list[float]] = None
    abs_eps: Optional[float] = None
    x0: Optional[list[float]] = None
    T: Optional[float] = None
    seed: int = 0
    workers: int = 1
    R: float = 2.1
    D: int = 5
    grid_spacing: float = 0.008
    psi: Optional[str] = None
    out: Optional[str] = None
    max_n: int = 10_000_000
    timing: bool = False
    samples: int = 1000
    # resolved, not user-settable
    psi_field: Optional[GridField] = field(default=None, repr=False)

    @property
    def elliptic(self) -> bool:
        return self.T is None

    @property
    def family(self) -> str:
        return {"1": "1", "1ball": "1", "1box": "1", "example1": "1", "2": "2", "example2": "2",
                "3": "3", "example3": "3"}[self.example]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bvpwalk", description="Monte Carlo pointwise solver for linear BVPs with mixed boundaries")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
        p.add_argument("--example", help=f"preset id ({', '.join(PRESET_IDS)}) or a JSON config path")
        p.add_argument("--bcs", choices=BCS)
        p.add_argument("--D", type=int)
        p.add_argument("--R", type=float)
        p.add_argument("--T", type=float, help="finite horizon; omit for an elliptic problem")
        p.add_argument("--out")
        if name in ("solve", "study"):
            p.add_argument("--method", choices=[m.value for m in Method])
            p.add_argument("--psi", help="EIKO v1 arrival-time grid for mmplus")
            p.add_argument("--grid-spacing", dest="grid_spacing", type=float)
            p.add_argument("--x0", type=_floats)
            p.add_argument("--seed", type=int)
            p.add_argument("--workers", type=int)
            p.add_argument("--max-n", dest="max_n", type=int)
            p.add_argument("--abs-eps", dest="abs_eps", type=float, help="absolute accuracy goal (overrides --eps)")
            p.add_argument("--timing", action="store_true", default=None,
                           help="write measured wall times (output is then not byte-reproducible)")
        if name == "solve":
            p.add_argument("--h", type=float)
            p.add_argument("--eps", type=float, help="accuracy goal relative to |u_exact|")
        if name == "study":
            p.add_argument("--h-list", dest="h_list", type=_floats)
            p.add_argument("--eps-list", dest="eps_list", type=_floats, help="relative accuracy goals, one per h")
            p.add_argument("--eps", type=float, help="one relative goal for every h")
        if name == "eikonal":
            p.add_argument("--grid-spacing", dest="grid_spacing", type=float)
        if name == "validate":
            p.add_argument("--samples", type=int)
    return parser


def _load_json(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    allowed = {f.name for f in fields(RunConfig)} - {"command", "psi_field"}
    unknown = set(data) - allowed
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Fully resolved configuration; raises UsageError on bad or contradictory input."""
    ns = build_parser().parse_args(list(argv))
    values: dict = {}
    if ns.config:
        values.update(_load_json(ns.config))
    example = ns.example
    if example is not None and example not in PRESET_IDS:
        if Path(example).suffix == ".json" or Path(example).is_file():
            values.update(_load_json(example))
            example = None
        else:
            raise UsageError(f"unknown preset {example!r}; choose from {', '.join(PRESET_IDS)}")
    for key, val in vars(ns).items():
        if key in ("config", "example", "command") or val is None:
            continue
        values[key] = val
    if example is not None:
        values["example"] = example
    cfg = RunConfig(command=ns.command, **values)
    _check(cfg)
    return cfg


def _check(cfg: RunConfig) -> None:
    if cfg.example not in PRESET_IDS:
        raise UsageError(f"unknown preset {cfg.example!r}")
    if cfg.bcs not in BCS:
        raise UsageError(f"bcs must be one of {', '.join(BCS)}")
    try:
        Method(cfg.method)
    except ValueError:
        raise UsageError(f"unknown method {cfg.method!r}") from None
    if cfg.bcs == "reflecting" and cfg.elliptic:
        raise UsageError("purely reflecting boundaries need a finite horizon --T "
                         "(an elliptic problem needs a nonempty absorbing boundary)")
    if cfg.T is not None and not cfg.T > 0:
        raise UsageError("--T must be positive")
    if cfg.family == "3" and cfg.bcs != "absorbing":
        raise UsageError("example 3 has absorbing boundaries only")
    if cfg.family == "3" and not cfg.elliptic:
        raise UsageError("example 3 is elliptic; drop --T")
    if cfg.family == "3" and not cfg.R > 2:
        raise UsageError("example 3 needs R > 2")
    if cfg.workers < 1:
        raise UsageError("--workers must be >= 1")
    if cfg.command == "solve":
        if cfg.h is None:
            raise UsageError("solve needs --h")
        if not cfg.h > 0:
            raise UsageError("--h must be positive")
    if cfg.eps is not None and not cfg.eps > 0:
        raise UsageError("--eps must be positive")
    if cfg.abs_eps is not None and not cfg.abs_eps > 0:
        raise UsageError("--abs-eps must be positive")
    if cfg.command == "study":
        if cfg.h_list is None:
            cfg.h_list = list(DEFAULT_H_LISTS[cfg.family])
        if len(cfg.h_list) < 3 or len(set(cfg.h_list)) != len(cfg.h_list) or min(cfg.h_list) <= 0:
            raise UsageError("--h-list needs at least three distinct positive values")
        if cfg.eps_list is None:
            cfg.eps_list = [cfg.eps] * len(cfg.h_list)
        if len(cfg.eps_list) != len(cfg.h_list):
            raise UsageError("--eps-list must have one entry per timestep")
        if min(cfg.eps_list) <= 0:
            raise UsageError("--eps-list entries must be positive")
    if cfg.command in ("solve", "study") and cfg.method == "mmplus" and cfg.psi is not None:
        try:
            cfg.psi_field = read_grid(cfg.psi)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read arrival-time grid {cfg.psi}: {exc}") from exc
    if not cfg.grid_spacing > 0:
        raise UsageError("--grid-spacing must be positive")


def _preset(cfg: RunConfig) -> Preset:
    try:
        preset = load_preset(cfg.example, cfg.bcs, cfg.D, cfg.R, cfg.T)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg.bcs == "mixed" and not all(boundary_classes_present(preset.oracle)):
        raise UsageError("mixed bcs need both absorbing and reflecting boundary under the preset split")
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0, dtype=float)
        if x0.shape != (preset.problem.dim,):
            raise UsageError(f"--x0 needs {preset.problem.dim} coordinates")
        if preset.oracle.distance(x0[None])[0] >= 0:
            raise UsageError("--x0 must lie strictly inside the domain")
        preset.x0 = x0
        preset.u_exact = float(preset.solution(x0[None])[0])
    return preset


def _psi_field(cfg: RunConfig, preset: Preset) -> Optional[GridField]:
    if cfg.method != "mmplus":
        return None
    if cfg.psi_field is not None:
        if cfg.psi_field.dim != preset.problem.dim:
            raise UsageError("arrival-time grid dimension does not match the problem")
        return cfg.psi_field
    if preset.psi_builder is None:
        raise UsageError("mmplus needs --psi or a preset with constant planar diffusion")
    return preset.psi_builder(cfg.grid_spacing)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def emit_csv(rows: Sequence[ConvergenceRow], out, delta: Optional[float] = None, timing: bool = False) -> str:
    """Write rows (and a trailing ``# delta=`` line for studies); returns the text.

    Wall times are written as ``nan`` unless ``timing`` is set, so repeated
    runs produce identical files.
    """
    if not rows:
        raise ValueError("no rows to write")
    lines = [CSV_HEADER]
    for r in rows:
        wall = r.wall_time if timing else math.nan
        lines.append(",".join([_fmt(r.h), _fmt(r.rel_error), _fmt(r.estimate), _fmt(r.stderr),
                               _fmt(r.n_used), _fmt(wall)]))
    if delta is not None:
        lines.append(f"# delta={_fmt(delta)}")
    text = "\n".join(lines) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return text


def read_csv(path) -> tuple[list[ConvergenceRow], Optional[float]]:
    rows, delta = [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("# delta="):
            delta = float(line.split("=", 1)[1])
        elif line and line != CSV_HEADER and not line.startswith("#"):
            h, rel, est, se, n, wall = line.split(",")
            rows.append(ConvergenceRow(float(h), float(est), float(rel), int(n), float(se), float(wall)))
    return rows, delta


def run_solve(cfg: RunConfig) -> int:
    preset = _preset(cfg)
    psi = _psi_field(cfg, preset)
    eps = cfg.abs_eps if cfg.abs_eps is not None else cfg.eps * abs(preset.u_exact)
    if eps == 0:
        raise UsageError("exact value is zero at x0; give --abs-eps")
    params = StepParams(cfg.h, preset.problem.dim, Method(cfg.method), psi=psi)
    res = estimate_adaptive(preset.problem, preset.oracle, params, preset.x0, eps, cfg.seed, cfg.max_n, cfg.workers)
    rel = abs(1.0 - res.estimate / preset.u_exact) if preset.u_exact != 0 else math.nan
    emit_csv([ConvergenceRow(cfg.h, res.estimate, rel, res.n_used, res.stderr, res.wall_time, res.converged)],
             cfg.out, timing=cfg.timing)
    return EXIT_OK if res.converged else EXIT_TOLERANCE


def run_study(cfg: RunConfig) -> int:
    preset = _preset(cfg)
    psi = _psi_field(cfg, preset)
    eps_list = cfg.eps_list
    if cfg.abs_eps is not None:
        eps_list = [cfg.abs_eps / abs(preset.u_exact)] * len(cfg.h_list)
    study = convergence_study(preset.problem, preset.oracle, preset.x0, cfg.h_list, eps_list, preset.u_exact,
                              cfg.method, cfg.seed, cfg.workers, psi, cfg.max_n)
    emit_csv(study.rows, cfg.out, delta=study.delta, timing=cfg.timing)
    return EXIT_OK if study.converged else EXIT_TOLERANCE


def run_eikonal(cfg: RunConfig) -> int:
    preset = _preset(cfg)
    if preset.psi_builder is None:
        raise UsageError("the arrival-time field is available for constant planar diffusion presets only")
    grid = preset.psi_builder(cfg.grid_spacing)
    if cfg.out is None:
        raise UsageError("eikonal needs --out")
    write_grid(grid, cfg.out)
    return EXIT_OK


def run_validate(cfg: RunConfig) -> int:
    preset = _preset(cfg)
    report = validate_problem(preset.problem, preset.oracle, cfg.samples, cfg.seed)
    text = f"{preset.name}: {report}\n"
    if cfg.out:
        Path(cfg.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_TOLERANCE


RUNNERS = {"solve": run_solve, "study": run_study, "eikonal": run_eikonal, "validate": run_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        return RUNNERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
