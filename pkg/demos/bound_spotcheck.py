#!/usr/bin/env python3
"""Spot-check a few contraction bounds on random instances.

Each registered bound kind pairs a concrete forward computation (lhs) with a
closed-form certificate (rhs); slack = rhs - lhs must be nonnegative.
"""

from divkit import BOUND_KINDS, check_inequality, sample_instance

dims = {"N": 12, "d": 16, "H": 4, "depth": 3, "p": 2, "q": 2, "T": 2, "r": 4}

print(f"{'kind':<28} {'lhs':>12} {'rhs':>12} {'rel slack':>10}")
for kind in BOUND_KINDS:
    inst = sample_instance(kind, dims, seed=7)
    chk = check_inequality(kind, inst)
    rel = chk.slack / max(1.0, abs(chk.rhs))
    flag = "ok" if chk.passed else "FAIL"
    print(f"{kind:<28} {chk.lhs:12.4e} {chk.rhs:12.4e} {rel:10.2e}  {flag}")
