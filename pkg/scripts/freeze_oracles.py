"""Compute kernel reference values without the interpreter and freeze them.

EP is re-implemented in plain Python, CG in numpy/scipy and IS as a stable
sort. Only the problem inputs come from ``zomp.kernels``. The results are
written to tests/oracles.json, which the test suite treats as ground truth.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from zomp.kernels import CG_CLASSES, EP_BATCH_LOG, EP_CLASSES, cg_problem, is_keys

OUT = Path(__file__).resolve().parent.parent / "tests" / "oracles.json"

EP_A = 5 ** 13
EP_SEED = 271828183
MASK = (1 << 46) - 1


def ep_reference(m_log: int, nk_log: int = EP_BATCH_LOG) -> dict:
    nk_log = min(nk_log, m_log)
    nk, batches = 1 << nk_log, 1 << (m_log - nk_log)
    an = pow(EP_A, 2 * nk, 1 << 46)
    r46 = 2.0 ** -46
    q = [0] * 10
    sx = sy = 0.0
    for b in range(batches):
        seed = EP_SEED * pow(an, b, 1 << 46) & MASK
        bx = by = 0.0
        for _ in range(nk):
            seed = seed * EP_A & MASK
            x1 = 2.0 * float(seed) * r46 - 1.0
            seed = seed * EP_A & MASK
            x2 = 2.0 * float(seed) * r46 - 1.0
            t = x1 * x1 + x2 * x2
            if t <= 1.0:
                f = math.sqrt(-2.0 * math.log(t) / t)
                g1, g2 = x1 * f, x2 * f
                q[int(max(abs(g1), abs(g2)))] += 1
                bx += g1
                by += g2
        sx += bx
        sy += by
    return {"counts": q, "sx": sx, "sy": sy}


def cg_reference(klass: str) -> dict:
    n, rowstr, colidx, values, niter, shift = cg_problem(klass)
    a = sp.csr_matrix((np.array(values), np.array(colidx), np.array(rowstr)), shape=(n, n))
    x = np.ones(n)
    zeta = 0.0
    for _ in range(niter):
        z = np.zeros(n)
        r = x.copy()
        p = r.copy()
        rho = r @ r
        for _ in range(25):
            q = a @ p
            alpha = rho / (p @ q)
            z += alpha * p
            r -= alpha * q
            rho, rho0 = r @ r, rho
            p = r + (rho / rho0) * p
        zeta = shift + 1.0 / (x @ z)
        x = z / np.linalg.norm(z)
    return {"zeta": float(zeta), "n": n, "nnz": len(values)}


def is_reference(klass: str) -> dict:
    keys, maxkey = is_keys(klass)
    order = sorted(range(len(keys)), key=keys.__getitem__)  # stable
    rank = [0] * len(keys)
    for pos, i in enumerate(order):
        rank[i] = pos
    digest = hashlib.sha256(np.asarray(rank, dtype="<i8").tobytes()).hexdigest()
    return {"n": len(keys), "maxkey": maxkey, "rank_sha256": digest, "first_ranks": rank[:8]}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--classes", default="S,W")
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    frozen = json.loads(args.out.read_text()) if args.out.exists() else {}
    for klass in args.classes.split(","):
        print(f"class {klass}: EP", flush=True)
        frozen.setdefault("ep", {})[klass] = ep_reference(EP_CLASSES[klass])
        print(f"class {klass}: CG", flush=True)
        frozen.setdefault("cg", {})[klass] = cg_reference(klass)
        print(f"class {klass}: IS", flush=True)
        frozen.setdefault("is", {})[klass] = is_reference(klass)
    frozen["ep_small"] = {str(m): ep_reference(m) for m in (10, 14)}
    frozen["cg_params"] = {k: list(v) for k, v in CG_CLASSES.items()}
    args.out.write_text(json.dumps(frozen, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
