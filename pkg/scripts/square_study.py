"""MM against MM+ on the anisotropic square, with the arrival-time field built once per run.

    python scripts/square_study.py --R 2.1 --eps 0.02
"""

import argparse
import sys

from bvpwalk.cli import emit_csv
from bvpwalk.estimator import convergence_study
from bvpwalk.presets import example3


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--R", type=float, default=2.1)
    ap.add_argument("--h", default="0.0064,0.0032,0.0016,0.0008")
    ap.add_argument("--eps", type=float, default=0.02, help="relative accuracy goal for every h")
    ap.add_argument("--grid-spacing", type=float, default=2.0 / 250)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    hs = [float(v) for v in args.h.split(",")]
    p = example3(args.R)
    psi = p.psi_builder(args.grid_spacing)
    for method in ("mm", "mmplus"):
        study = convergence_study(p.problem, p.oracle, p.x0, hs, [args.eps] * len(hs), p.u_exact, method,
                                  args.seed, args.workers, psi=psi if method == "mmplus" else None)
        print(f"# method={method}")
        emit_csv(study.rows, "-", delta=study.delta, timing=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
