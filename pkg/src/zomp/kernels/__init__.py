"""Desk-scale NPB-style kernels (CG, EP, IS) written in the kernel language.

Each driver builds the problem input in Python, runs the preprocessed kernel
on a team of the requested size and verifies the result against a serial
oracle: the same kernel source run with its directives stripped.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from ..interp import Program
from ..parser import parse_source
from ..preprocess import preprocess

KERNEL_DIR = Path(__file__).parent
KERNELS = ("cg", "ep", "is")
CLASSES = ("S", "W")
DEFAULT_SEED = 314159265

CG_CLASSES = {  # n, off-diagonal partners per row (each adds two nonzeros), outer iterations, shift
    "S": (1400, 4, 15, 10.0),
    "W": (7000, 4, 15, 12.0),
}
EP_CLASSES = {"S": 20, "W": 23}  # log2 of the number of pairs
EP_BATCH_LOG = 16
IS_CLASSES = {"S": (16, 11), "W": (20, 16)}  # log2 keys, log2 key range
CG_RTOL = 1e-10


class VerificationError(RuntimeError):
    """A kernel result disagrees with its serial oracle."""


@dataclass(frozen=True)
class KernelResult:
    kernel: str
    klass: str
    threads: int
    value: object
    seconds: float
    verified: bool
    detail: str = ""


def kernel_source(name: str) -> str:
    if name not in KERNELS:
        raise ValueError(f"unknown kernel {name!r} (choose from {', '.join(KERNELS)})")
    return (KERNEL_DIR / f"{name}.kz").read_text()


@lru_cache(maxsize=None)
def program(name: str, *, openmp: bool = True, mode: str = "release") -> Program:
    """Compiled kernel; ``openmp=False`` gives the directive-stripped serial oracle."""
    src = kernel_source(name)
    if openmp:
        return Program(parse_source(preprocess(src), internal=True), mode)
    return Program(parse_source(src, openmp=False), mode)


def _run(name: str, args: tuple, threads: int, openmp: bool, mode: str) -> None:
    result = program(name, openmp=openmp, mode=mode).run("main", args, threads=threads)
    if result.error is not None:
        raise result.error


# -- CG ------------------------------------------------------------------------

@lru_cache(maxsize=4)
def cg_problem(klass: str, seed: int = DEFAULT_SEED):
    """Seeded sparse SPD matrix in CSR form: symmetric, strictly diagonally dominant."""
    n, partners, niter, shift = CG_CLASSES[klass]
    rng = random.Random(seed)
    rows: list[dict[int, float]] = [{} for _ in range(n)]
    for i in range(n):
        for _ in range(partners):
            j = rng.randrange(n)
            if j == i:
                continue
            v = rng.random()
            rows[i][j] = rows[i].get(j, 0.0) + v
            rows[j][i] = rows[j].get(i, 0.0) + v
    rowstr, colidx, values = [0], [], []
    for i, row in enumerate(rows):
        row[i] = sum(row.values()) + 1.0 + rng.random()
        for j in sorted(row):
            colidx.append(j)
            values.append(row[j])
        rowstr.append(len(colidx))
    return n, rowstr, colidx, values, niter, shift


def _cg(klass: str, threads: int, seed: int, openmp: bool, mode: str) -> tuple[float, float, float]:
    n, rowstr, colidx, values, niter, shift = cg_problem(klass, seed)
    out = [0.0, 0.0, 0.0]
    _run("cg", (n, rowstr, colidx, values, niter, shift, out), threads, openmp, mode)
    return out[0], out[1], out[2]


@lru_cache(maxsize=8)
def cg_oracle(klass: str, seed: int = DEFAULT_SEED) -> float:
    return _cg(klass, 1, seed, False, "release")[0]


def kernel_cg(klass: str = "S", threads: int = 1, *, seed: int = DEFAULT_SEED,
              mode: str = "release") -> KernelResult:
    zeta, rnorm, seconds = _cg(klass, threads, seed, True, mode)
    expected = cg_oracle(klass, seed)
    err = abs(zeta - expected) / abs(expected)
    ok = err <= CG_RTOL
    detail = f"zeta={zeta!r} oracle={expected!r} rel_err={err:.3e} rnorm={rnorm:.3e}"
    return KernelResult("cg", klass, threads, zeta, seconds, ok, detail)


# -- EP ------------------------------------------------------------------------

def _ep(klass: str, threads: int, openmp: bool, mode: str, m_log: int | None = None):
    q = [0] * 10
    out = [0.0, 0.0, 0.0, 0.0]
    m = EP_CLASSES[klass] if m_log is None else m_log
    _run("ep", (m, min(EP_BATCH_LOG, m), q, out), threads, openmp, mode)
    return tuple(q), out[0], out[1], out[2], int(out[3])


@lru_cache(maxsize=8)
def ep_oracle(klass: str, m_log: int | None = None):
    return _ep(klass, 1, False, "release", m_log)[:3]


def kernel_ep(klass: str = "S", threads: int = 1, *, seed: int = DEFAULT_SEED,
              mode: str = "release", m_log: int | None = None) -> KernelResult:
    """``seed`` is accepted for a uniform interface; EP uses the fixed NPB seed.

    Verification is exact: counts and both sums must match the serial oracle bit for bit.
    """
    counts, sx, sy, seconds, accepted = _ep(klass, threads, True, mode, m_log)
    q0, sx0, sy0 = ep_oracle(klass, m_log)
    ok = counts == q0 and sx == sx0 and sy == sy0 and sum(counts) == accepted
    detail = f"counts={list(counts)} sx={sx!r} sy={sy!r}"
    if not ok:
        detail += f" oracle=({list(q0)}, {sx0!r}, {sy0!r}) accepted={accepted}"
    return KernelResult("ep", klass, threads, (counts, sx, sy), seconds, ok, detail)


# -- IS ------------------------------------------------------------------------

def npb_uniforms(count: int, seed: int):
    """The NPB generator x <- 5^13 x mod 2^46, scaled to (0, 1)."""
    a, mask = 5 ** 13, (1 << 46) - 1
    x = seed & mask
    for _ in range(count):
        x = (a * x) & mask
        yield x / (1 << 46)


@lru_cache(maxsize=4)
def is_keys(klass: str, seed: int = DEFAULT_SEED) -> tuple[tuple[int, ...], int]:
    """NPB-style keys: the average of four uniforms scaled to the key range."""
    log_n, log_k = IS_CLASSES[klass]
    n, maxkey = 1 << log_n, 1 << log_k
    u = npb_uniforms(4 * n, seed)
    keys = tuple(int(maxkey / 4 * (next(u) + next(u) + next(u) + next(u))) for _ in range(n))
    return keys, maxkey


def _is(keys, maxkey, threads, openmp, mode):
    rank = [0] * len(keys)
    out = [0.0]
    _run("is", (list(keys), maxkey, rank, out), threads, openmp, mode)
    return rank, out[0]


def ranking_is_sorting(keys, rank) -> bool:
    n = len(keys)
    if sorted(rank) != list(range(n)):
        return False
    placed = [0] * n
    for key, r in zip(keys, rank):
        placed[r] = key
    return all(placed[i] <= placed[i + 1] for i in range(n - 1))


@lru_cache(maxsize=4)
def _is_oracle(keys: tuple, maxkey: int) -> tuple[int, ...]:
    return tuple(_is(keys, maxkey, 1, False, "release")[0])


def kernel_is(klass: str = "S", threads: int = 1, *, seed: int = DEFAULT_SEED,
              mode: str = "release", keys=None, maxkey: int | None = None) -> KernelResult:
    if keys is None:
        keys, maxkey = is_keys(klass, seed)
    else:
        keys = tuple(keys)
        maxkey = maxkey or (max(keys, default=0) + 1)
    rank, seconds = _is(keys, maxkey, threads, True, mode)
    expected = _is_oracle(keys, maxkey)
    ok = ranking_is_sorting(keys, rank) and tuple(rank) == expected
    return KernelResult("is", klass, threads, rank, seconds, ok, f"n={len(keys)} maxkey={maxkey}")


RUNNERS = {"cg": kernel_cg, "ep": kernel_ep, "is": kernel_is}


def run_kernel(name: str, klass: str, threads: int, *, seed: int = DEFAULT_SEED,
               mode: str = "release") -> KernelResult:
    if klass not in CLASSES:
        raise ValueError(f"unknown problem class {klass!r} (choose from {', '.join(CLASSES)})")
    kernel_source(name)
    return RUNNERS[name](klass, threads, seed=seed, mode=mode)
