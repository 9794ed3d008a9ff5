"""Pure numpy versions of the hot loops (used when the compiled module is absent).

Shapes follow the compiled module: ``masks``/``W`` are ``[P, m, L]`` (pattern,
arrival unit, preference slot), orders are ``[K, m]`` unit positions.
"""

from __future__ import annotations

import numpy as np


def pref_choice(masks, order):
    """Chosen slot per pattern and unit when units arrive in ``order`` (-1 = nothing).

    A unit takes its first slot whose resource mask is nonzero and disjoint
    from the resources already used.
    """
    masks = np.ascontiguousarray(masks, dtype=np.uint64)
    P, m, L = masks.shape
    used = np.zeros(P, dtype=np.uint64)
    choice = np.full((P, m), -1, dtype=np.int64)
    zero = np.uint64(0)
    for e in order:
        done = np.zeros(P, dtype=bool)
        for slot in range(L):
            mk = masks[:, e, slot]
            ok = ~done & (mk != zero) & ((mk & used) == zero)
            if ok.any():
                choice[ok, e] = slot
                used[ok] |= mk[ok]
                done |= ok
    return choice


def pref_totals(masks, W, orders):
    """``sum_p sum_e W[p, e, choice]`` for every order."""
    W = np.ascontiguousarray(W, dtype=np.float64)
    P, m, L = W.shape
    out = np.zeros(len(orders), dtype=np.float64)
    rows = np.arange(P)
    for k, order in enumerate(np.asarray(orders, dtype=np.int64)):
        ch = pref_choice(masks, order)
        total = 0.0
        for e in order:
            sel = ch[:, e] >= 0
            if sel.any():
                total += float(W[rows[sel], e, ch[sel, e]].sum())
        out[k] = total
    return out


def budget_collect(val, item, budgets, order):
    """Per-pattern collected welfare of the budget-additive extraction phase.

    ``val``/``item`` are ``[P, nb, L]``: each buyer's E' rewards in
    decreasing order with their item index (-1 pads).  A reward is taken when
    its item is free and it fits the buyer's remaining budget.
    """
    val = np.ascontiguousarray(val, dtype=np.float64)
    item = np.ascontiguousarray(item, dtype=np.int64)
    P, nb, L = val.shape
    assigned = np.zeros(P, dtype=np.uint64)
    total = np.zeros(P, dtype=np.float64)
    one = np.uint64(1)
    zero = np.uint64(0)
    for b in order:
        cap = float(budgets[b])
        load = np.zeros(P, dtype=np.float64)
        for slot in range(L):
            it = item[:, b, slot]
            v = val[:, b, slot]
            bit = np.where(it >= 0, one << np.maximum(it, 0).astype(np.uint64), zero)
            ok = (it >= 0) & ((assigned & bit) == zero) & (v + load <= cap)
            load = np.where(ok, load + v, load)
            assigned |= np.where(ok, bit, zero)
        total = total + load
    return total


def budget_totals(val, item, budgets, weight, orders):
    weight = np.asarray(weight, dtype=np.float64)
    return np.array([float(np.dot(weight, budget_collect(val, item, budgets, o)))
                     for o in np.asarray(orders, dtype=np.int64)], dtype=np.float64)
