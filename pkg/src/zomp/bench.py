"""Timing harness: mean of repeated kernel runs per thread count."""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field

from .kernels import CLASSES, DEFAULT_SEED, KERNELS, KernelResult, VerificationError, run_kernel


@dataclass(frozen=True)
class BenchConfig:
    kernel: str
    klass: str = "S"
    threads: tuple[int, ...] = (1, 2, 4)
    reps: int = 5
    seed: int = DEFAULT_SEED
    mode: str = "release"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r} (choose from {', '.join(KERNELS)})")
        if self.klass not in CLASSES:
            raise ValueError(f"unknown problem class {self.klass!r} (choose from {', '.join(CLASSES)})")
        if self.reps < 1:
            raise ValueError("repetitions must be at least 1")
        if not self.threads or any(t < 1 for t in self.threads):
            raise ValueError("thread counts must be positive")


@dataclass
class BenchRow:
    kernel: str
    klass: str
    threads: int
    reps: int
    mean_s: float
    min_s: float
    max_s: float
    speedup: float
    verified: bool
    samples: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        row = asdict(self)
        row["class"] = row.pop("klass")
        row.pop("samples")
        order = ("kernel", "class", "threads", "reps", "mean_s", "min_s", "max_s", "speedup", "verified")
        return {k: row[k] for k in order}


@dataclass
class BenchReport:
    config: BenchConfig
    rows: list[BenchRow]

    def row(self, threads: int) -> BenchRow:
        return next(r for r in self.rows if r.threads == threads)

    def to_json(self) -> list[dict]:
        return [r.to_json() for r in self.rows]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def table(self) -> str:
        head = f"{'kernel':<6} {'class':<5} {'threads':>7} {'reps':>4} {'mean_s':>9} {'min_s':>9} " \
               f"{'max_s':>9} {'speedup':>7} verified"
        lines = [head]
        for r in self.rows:
            lines.append(f"{r.kernel:<6} {r.klass:<5} {r.threads:>7} {r.reps:>4} {r.mean_s:>9.4f} "
                         f"{r.min_s:>9.4f} {r.max_s:>9.4f} {r.speedup:>7.2f} {'yes' if r.verified else 'no'}")
        return "\n".join(lines)


def measure(config: BenchConfig, threads: int, progress=None) -> list[float]:
    """Kernel-section times of ``config.reps`` verified runs."""
    samples = []
    for rep in range(config.reps):
        result: KernelResult = run_kernel(config.kernel, config.klass, threads, seed=config.seed, mode=config.mode)
        if not result.verified:
            raise VerificationError(
                f"{config.kernel} class {config.klass} at {threads} thread(s) failed verification: {result.detail}")
        samples.append(result.seconds)
        if progress:
            progress(threads, rep, result)
    return samples


def run_bench(config: BenchConfig, progress=None) -> BenchReport:
    """Time every thread count; speedups are relative to the 1-thread mean.

    A 1-thread baseline is measured even when 1 is not among the requested
    counts. Any failed verification aborts the report.
    """
    samples = {t: measure(config, t, progress) for t in dict.fromkeys(config.threads)}
    base = samples[1] if 1 in samples else measure(config, 1, progress)
    base_mean = statistics.fmean(base)
    rows = []
    for t, s in samples.items():
        mean = statistics.fmean(s)
        rows.append(BenchRow(config.kernel, config.klass, t, config.reps, mean, min(s), max(s),
                             1.0 if t == 1 else base_mean / mean, True, s))
    return BenchReport(config, rows)
