"""``zomp`` command line: preprocess, run, verify, bench."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import Located
from .interp import run_program
from .parser import parse_source
from .preprocess import preprocess

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _threads(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid thread count {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("thread count must be at least 1")
    return value


def _thread_list(text: str) -> tuple[int, ...]:
    return tuple(_threads(part) for part in text.split(",") if part.strip())


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zomp", description="OpenMP-style directives for a Zig-like kernel language")
    sub = p.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("preprocess", help="lower all directives and print the result")
    pre.add_argument("file")
    pre.add_argument("-o", "--output", help="write to this file instead of stdout")

    run = sub.add_parser("run", help="preprocess and interpret a program's main()")
    run.add_argument("file")
    run.add_argument("--threads", type=_threads, default=None)
    run.add_argument("--mode", choices=("debug", "release"), default="debug")

    ver = sub.add_parser("verify", help="check fixtures against goldens and serial oracles, then the kernels")
    ver.add_argument("--threads", type=_threads, default=4, help="team size for parallel checks")
    ver.add_argument("--no-kernels", action="store_true", help="skip the kernel oracle checks")

    bench = sub.add_parser("bench", help="time a kernel over several thread counts")
    bench.add_argument("--kernel", required=True, choices=("cg", "ep", "is"))
    bench.add_argument("--class", dest="klass", default="S", choices=("S", "W"))
    bench.add_argument("--threads", type=_thread_list, default=(1, 2, 4))
    bench.add_argument("--reps", type=int, default=5)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--mode", choices=("debug", "release"), default="release")
    bench.add_argument("--json", help="also write the report rows as JSON")
    return p


def cmd_preprocess(args) -> int:
    out = preprocess(_read(args.file))
    if args.output:
        Path(args.output).write_bytes(out)
    else:
        sys.stdout.buffer.write(out)
        sys.stdout.flush()
    return EXIT_OK


def cmd_run(args) -> int:
    text = preprocess(_read(args.file))
    result = run_program(parse_source(text, internal=True), "main", (), mode=args.mode, threads=args.threads)
    sys.stdout.write(result.output)
    sys.stdout.flush()
    if result.error is not None:
        print(f"{args.file}:{result.error}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args) -> int:
    from .kernels import run_kernel
    from .verify import check_fixture, fixture_paths

    failures = 0
    for path in fixture_paths():
        check = check_fixture(path, args.threads)
        flags = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in
                         (("golden", check.golden), ("fixpoint", check.fixpoint),
                          ("serial", check.serial_equal), (f"T={args.threads}", check.team_ok)))
        print(f"{'PASS' if check.ok else 'FAIL'} fixture {check.name}: {flags} {check.detail}".rstrip())
        failures += not check.ok
    if not args.no_kernels:
        for kernel in ("cg", "ep", "is"):
            for t in sorted({1, args.threads}):
                result = run_kernel(kernel, "S", t)
                print(f"{'PASS' if result.verified else 'FAIL'} kernel {kernel} S T={t}: {result.detail[:120]}")
                failures += not result.verified
    print(f"{failures} failure(s)")
    return EXIT_OK if failures == 0 else EXIT_FAIL


def cmd_bench(args) -> int:
    from .bench import BenchConfig, run_bench
    from .kernels import DEFAULT_SEED

    try:
        config = BenchConfig(args.kernel, args.klass, args.threads, args.reps,
                             DEFAULT_SEED if args.seed is None else args.seed, args.mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = run_bench(config)
    print(report.table())
    if args.json:
        Path(args.json).write_text(report.dumps() + "\n")
    return EXIT_OK


COMMANDS = {"preprocess": cmd_preprocess, "run": cmd_run, "verify": cmd_verify, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"zomp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Located as exc:
        where = getattr(args, "file", None)
        print(f"{where}:{exc}" if where else str(exc), file=sys.stderr)
        return EXIT_FAIL
    except RuntimeError as exc:  # verification failures and similar pipeline errors
        print(f"zomp: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
