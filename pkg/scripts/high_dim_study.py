"""Convergence of u = cos(x_1 + ... + x_D) in the unit ball with mixed boundaries, for several D.

    python scripts/high_dim_study.py --dims 4,5,6 --eps 0.05,0.026,0.013,0.0074
"""

import argparse
import sys

from bvpwalk.cli import emit_csv
from bvpwalk.estimator import convergence_study
from bvpwalk.presets import example2


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", default="5")
    ap.add_argument("--bcs", choices=["absorbing", "mixed"], default="mixed")
    ap.add_argument("--method", choices=["mm", "ref"], default="mm")
    ap.add_argument("--h", default="0.0064,0.0032,0.0016,0.0008")
    ap.add_argument("--eps", default="0.05,0.026,0.013,0.0074")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    hs = [float(v) for v in args.h.split(",")]
    eps = [float(v) for v in args.eps.split(",")]
    status = 0
    for dim in (int(v) for v in args.dims.split(",")):
        p = example2(dim, args.bcs)
        study = convergence_study(p.problem, p.oracle, p.x0, hs, eps, p.u_exact, args.method, args.seed,
                                  args.workers)
        print(f"# D={dim}")
        emit_csv(study.rows, "-", delta=study.delta, timing=True)
        status = status or (0 if study.converged else 3)
    return status


if __name__ == "__main__":
    sys.exit(main())
