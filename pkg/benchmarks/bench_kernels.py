"""Compiled vs pure-Python rollout kernel.

    python benchmarks/bench_kernels.py [--rollouts N] [--family F] [--difficulty D]

Both kernels run the same rollouts; the script checks that their traces agree
bit for bit and reports the mean wall time per rollout and the speedup.
"""

import argparse
import time

import numpy as np

from planc.config import Config, SimConfig
from planc.sim import kernel_name, rollout
from planc.terrain import FAMILIES, generate_terrain


def time_kernel(kernel, seqs, cfg, record):
    traces = []
    t0 = time.perf_counter()
    for seq in seqs:
        traces.append(rollout(seq, cfg, kernel=kernel, record=record))
    return time.perf_counter() - t0, traces


def same(a, b):
    return (
        a.outcome == b.outcome
        and np.array_equal(a.rows, b.rows, equal_nan=True)
        and np.array_equal(a.events, b.events)
        and np.array_equal(a.impacts, b.impacts, equal_nan=True)
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--rollouts", type=int, default=50)
    ap.add_argument("--family", choices=FAMILIES, default="height_varying")
    ap.add_argument("--difficulty", type=float, default=0.5)
    ap.add_argument("--noise", action="store_true")
    ap.add_argument("--no-record", action="store_true", help="skip trace recording (eval mode)")
    args = ap.parse_args()

    if kernel_name() != "compiled":
        raise SystemExit("compiled kernel unavailable (not built, or PLANC_PURE_PYTHON is set)")
    cfg = Config(sim=SimConfig(noise=args.noise))
    seqs = [generate_terrain(args.family, args.difficulty, s) for s in range(args.rollouts)]
    record = not args.no_record
    rollout(seqs[0], cfg, kernel="compiled")  # warm-up

    t_py, tr_py = time_kernel("python", seqs, cfg, record)
    t_c, tr_c = time_kernel("compiled", seqs, cfg, record)
    agree = all(same(a, b) for a, b in zip(tr_py, tr_c))
    n = len(seqs)
    print(f"{n} rollouts, {args.family} d={args.difficulty}, record={record}")
    print(f"python    {1e3 * t_py / n:8.3f} ms/rollout")
    print(f"compiled  {1e3 * t_c / n:8.3f} ms/rollout")
    print(f"speedup   {t_py / t_c:8.1f}x")
    print(f"identical traces: {agree}")
    if not agree:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
