"""Print which thread ran each iteration of a small loop under every schedule.

A quick way to see the static block split, round-robin chunks and the
first-come order of dynamic and guided claims.
"""

from __future__ import annotations

import argparse
import os

from zomp.interp import Program
from zomp.parser import parse_source
from zomp.preprocess import preprocess

TEMPLATE = """fn main(n: i64, owner: []i64) void {
    //$omp parallel shared(owner)
    {
        var i: i64 = 0;
        //$omp while SCHEDULE
        while (i < n) : (i += 1) {
            owner[i] = omp.get_thread_num();
        }
    }
}
"""
SCHEDULES = ["schedule(static)", "schedule(static, 1)", "schedule(static, 7)", "schedule(dynamic, 1)",
             "schedule(dynamic, 5)", "schedule(guided, 1)", "schedule(guided, 4)", "schedule(runtime)"]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-n", type=int, default=24)
    ap.add_argument("-t", "--threads", type=int, default=4)
    ap.add_argument("--omp-schedule", default="dynamic,3", help="OMP_SCHEDULE used by schedule(runtime)")
    args = ap.parse_args()
    os.environ["OMP_SCHEDULE"] = args.omp_schedule
    for sched in SCHEDULES:
        prog = Program(parse_source(preprocess(TEMPLATE.replace("SCHEDULE", sched)), internal=True), "release")
        owner = [-1] * args.n
        prog.run("main", (args.n, owner), threads=args.threads)
        print(f"{sched:<22} {''.join(str(o) if o < 10 else '+' for o in owner)}")


if __name__ == "__main__":
    main()
