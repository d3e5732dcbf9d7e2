"""Time CG, EP and IS over several team sizes and write a JSON report.

    python3 scripts/bench_kernels.py --class S --threads 1,2,4 --reps 5 --out bench.json
"""

from __future__ import annotations

import argparse
import json
import os
from pathlib import Path

from zomp.bench import BenchConfig, run_bench
from zomp.kernels import KERNELS


def main() -> None:
    ap = argparse.ArgumentParser(description="kernel speedup table")
    ap.add_argument("--kernels", default=",".join(KERNELS))
    ap.add_argument("--class", dest="klass", default="S")
    ap.add_argument("--threads", default="1,2,4")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    threads = tuple(int(t) for t in args.threads.split(","))
    rows = []
    print(f"{os.cpu_count()} logical CPU(s)")
    for kernel in args.kernels.split(","):
        report = run_bench(BenchConfig(kernel, args.klass, threads, args.reps),
                           progress=lambda t, rep, r: print(f"  {r.kernel} T={t} rep {rep}: {r.seconds:.3f}s",
                                                            flush=True))
        print(report.table())
        rows += report.to_json()
    if args.out:
        args.out.write_text(json.dumps(rows, indent=2) + "\n")
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
