"""Reference implementations written independently of the package solvers."""

import itertools
from fractions import Fraction
from math import lcm

import numpy as np

from mev_arena.domain import TxStatus, apply_tx, delta_balance


def kev_bruteforce(items, gas_limit):
    """Best revenue over all 2^n subsets, vectorized with integer scaling."""
    n = len(items)
    if n == 0:
        return Fraction(0)
    den = lcm(*(Fraction(m).denominator for _, m in items))
    gas = np.array([g for g, _ in items], dtype=np.int64)
    val = np.array([int(Fraction(m) * g * den) for g, m in items], dtype=np.int64)
    masks = np.arange(2**n, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(n)) & 1
    feasible = bits @ gas <= gas_limit
    best = int((bits @ val)[feasible].max())
    return Fraction(best, den)


def local_mev_bruteforce(state, cap):
    """Breadth-first product enumeration from the longest length down."""
    items = [("mem", tx) for tx in reversed(cap.mempool)]
    items += [("own", t, m) for t in reversed(cap.templates) for m in reversed(cap.gas_price_grid)]
    best = Fraction(0)
    for length in range(cap.max_bundle_len, 0, -1):
        for combo in itertools.product(range(len(items)), repeat=length):
            mem_idx = [i for i in combo if items[i][0] == "mem"]
            if len(mem_idx) != len(set(mem_idx)):
                continue
            cur, ok, spent = state, True, Fraction(0)
            for i in combo:
                it = items[i]
                tx = it[1] if it[0] == "mem" else it[1].instantiate(it[2], cur.nonce(it[1].sender))
                if it[0] == "own":
                    spent += tx.fee
                cur, status, _ = apply_tx(cur, tx)
                if status is not TxStatus.EXECUTED:
                    ok = False
                    break
            if ok and (cap.budget is None or spent <= cap.budget):
                best = max(best, delta_balance(cap.player, state, cur))
    return best
