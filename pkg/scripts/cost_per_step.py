"""Mean wall time per step of MM and REF on the reflecting high-dimensional problem.

    python scripts/cost_per_step.py --dims 3,4,5,6,7,8 --n 10000
"""

import argparse
import time

import numpy as np

from bvpwalk.integrators import StepParams, run_batch
from bvpwalk.presets import example2
from bvpwalk.sampling import CounterStreams


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", default="3,4,5,6,7,8")
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--h", type=float, default=0.001)
    ap.add_argument("--T", type=float, default=1.0)
    args = ap.parse_args(argv)
    print("D,method,total_s,steps,us_per_step")
    for dim in (int(v) for v in args.dims.split(",")):
        p = example2(dim, "reflecting", T=args.T)
        for method in ("mm", "ref"):
            t0 = time.perf_counter()
            res = run_batch(p.problem, p.oracle, StepParams(args.h, dim, method), p.x0, CounterStreams(0),
                            np.arange(args.n))
            wall = time.perf_counter() - t0
            steps = int(res.steps.sum())
            print(f"{dim},{method},{wall:.3f},{steps},{wall / steps * 1e6:.3f}")


if __name__ == "__main__":
    main()
