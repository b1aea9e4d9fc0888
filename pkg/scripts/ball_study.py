"""Convergence of the three-dimensional u = xyz problem in the unit ball or the box.

    python scripts/ball_study.py --bcs mixed --method mm --eps 0.05,0.03,0.015,0.008
"""

import argparse
import sys

from bvpwalk.cli import emit_csv
from bvpwalk.estimator import convergence_study
from bvpwalk.presets import example1


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--domain", choices=["ball", "box"], default="ball")
    ap.add_argument("--bcs", choices=["absorbing", "mixed", "reflecting"], default="absorbing")
    ap.add_argument("--method", choices=["mm", "ref"], default="mm")
    ap.add_argument("--h", default="0.0128,0.0064,0.0032,0.0016")
    ap.add_argument("--eps", default="0.15,0.08,0.04,0.02", help="relative accuracy goals, one per h")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)
    hs = [float(v) for v in args.h.split(",")]
    eps = [float(v) for v in args.eps.split(",")]
    p = example1(args.domain, args.bcs)
    study = convergence_study(p.problem, p.oracle, p.x0, hs, eps, p.u_exact, args.method, args.seed, args.workers)
    emit_csv(study.rows, args.out, delta=study.delta, timing=True)
    return 0 if study.converged else 3


if __name__ == "__main__":
    sys.exit(main())
