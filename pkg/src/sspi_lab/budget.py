"""Budget-additive combinatorial auctions with one sample per buyer-item pair."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import ZERO_KEY, Instance, Realization
from .errors import InputError
from .oracles import Assignment, greedy_budget_assignment


@dataclass(frozen=True)
class BudgetRunTrace:
    """One run of the budget-additive policy.

    ``e_prime`` holds ``(edge_id, buyer, item, reward_key)`` records;
    ``tau`` maps items to threshold keys; ``c_r`` holds the final loads of M.
    """

    M: Assignment
    G_S: Assignment
    e_prime: tuple
    tau: dict
    c_r: dict
    budgets: dict
    events: tuple = field(default=(), compare=False)

    def same_sets(self, other: "BudgetRunTrace") -> bool:
        return (set(self.e_prime) == set(other.e_prime)
                and self.G_S.pairs() == other.G_S.pairs()
                and self.M.pairs() == other.M.pairs()
                and self.G_S.blocked_at.keys() == other.G_S.blocked_at.keys())


def _require_budget(instance: Instance):
    if instance.kind != "budget-additive":
        raise InputError(f"budget-additive policy needs a budget-additive instance, got {instance.kind}")


def _check_buyers(instance: Instance, order) -> list:
    order = list(order)
    if len(order) != len(instance.buyers) or set(order) != set(instance.buyers):
        raise InputError("arrival order must be a permutation of the buyers")
    return order


def sample_greedy(instance: Instance, realization: Realization) -> Assignment:
    recs = [(e.u, e.v, realization.s_key(e.id)) for e in instance.edges]
    return greedy_budget_assignment(recs, instance.budget_map)


def capacity_prefix(history: Assignment, buyer, a, budget: float) -> float:
    """Sample weight given to ``buyer`` among values strictly above ``a``.

    Returns ``budget`` instead when the buyer was already blocked by then.
    ``a`` may be a plain value or a key.
    """
    key = a if isinstance(a, tuple) else (float(a), math.inf)
    blocked = history.blocked_at.get(buyer)
    if blocked is not None and blocked > key:
        return float(budget)
    total = 0.0
    for _, k in history.bundles.get(buyer, ()):
        if k > key:
            total = total + k[0]
    return total


def _is_blocked(history: Assignment, buyer, key) -> bool:
    blocked = history.blocked_at.get(buyer)
    return blocked is not None and blocked > key


def _thresholds(instance: Instance, g_s: Assignment) -> dict:
    tau = {i: ZERO_KEY for i in instance.items}
    for _, bundle in g_s.bundles.items():
        for i, k in bundle:
            tau[i] = k
    return tau


def _edges_by_buyer(instance: Instance) -> dict:
    out: dict = {b: [] for b in instance.buyers}
    for e in instance.edges:
        out[e.u].append(e)
    return out


def run_budget_additive(instance: Instance, realization: Realization, buyer_order) -> BudgetRunTrace:
    """Item thresholds from the greedy sample assignment; each buyer scans its rewards from the top.

    A reward enters E' when it beats the item threshold and fits the budget
    next to the sample weight the buyer held above it; it is collected when
    it also fits the buyer's realized load and the item is still free.  A
    buyer blocked in the sample greedy above the reward takes nothing.
    """
    _require_budget(instance)
    order = _check_buyers(instance, buyer_order)
    budgets = instance.budget_map
    g_s = sample_greedy(instance, realization)
    tau = _thresholds(instance, g_s)
    adj = _edges_by_buyer(instance)
    c_r = {b: 0.0 for b in instance.buyers}
    assigned: set = set()
    e_prime, bundles, events = [], {}, []
    for b in order:
        cap = budgets[b]
        for e in sorted(adj[b], key=lambda e: realization.r_key(e.id), reverse=True):
            r = realization.r_key(e.id)
            cs = capacity_prefix(g_s, b, r, cap)
            ev = {"buyer": b, "edge": e.id, "reward": r[0], "tau": tau[e.v][0], "c_s": cs}
            if r > tau[e.v] and not _is_blocked(g_s, b, r) and r[0] + cs <= cap:
                e_prime.append((e.id, b, e.v, r))
                if r[0] + c_r[b] <= cap and e.v not in assigned:
                    c_r[b] = c_r[b] + r[0]
                    assigned.add(e.v)
                    bundles.setdefault(b, []).append((e.v, r))
                    ev.update(decision="accept", reason="fits realized load")
                else:
                    ev.update(decision="reject", reason="item taken or realized budget exceeded")
            else:
                ev.update(decision="reject", reason="below threshold or sample budget exceeded")
            events.append(ev)
    m = Assignment({b: tuple(x) for b, x in bundles.items()})
    return BudgetRunTrace(m, g_s, tuple(e_prime), tau, c_r, budgets, tuple(events))


def run_budget_additive_offline_sim(instance: Instance, realization: Realization, buyer_order) -> BudgetRunTrace:
    """Walk all draws in decreasing order building G_S and E' together, then extract M."""
    _require_budget(instance)
    order = _check_buyers(instance, buyer_order)
    budgets = instance.budget_map
    edges = instance.edges
    free = set(instance.items)
    c_s = {b: 0.0 for b in instance.buyers}
    blocked: dict = {}
    status: dict = {}
    e_prime: dict = {}
    g_bundles: dict = {}

    def offer_sample(e, key):
        b = e.u
        if e.v not in free or b in blocked:
            return
        if key[0] + c_s[b] <= budgets[b]:
            c_s[b] = c_s[b] + key[0]
            g_bundles.setdefault(b, []).append((e.v, key))
            free.discard(e.v)
        else:
            blocked[b] = key

    for key, pos, is_reward in realization.ordered_draws():
        e = edges[pos]
        if e.id not in status:
            status[e.id] = "R" if is_reward else "S"
            if is_reward:
                if e.u not in blocked and key[0] + c_s[e.u] <= budgets[e.u] and e.v in free:
                    e_prime[e.id] = (e.id, e.u, e.v, key)
            else:
                offer_sample(e, key)
        elif status[e.id] == "R":
            offer_sample(e, key)
    g_s = Assignment({b: tuple(x) for b, x in g_bundles.items()}, blocked)
    adj = _edges_by_buyer(instance)
    c_r = {b: 0.0 for b in instance.buyers}
    assigned: set = set()
    bundles: dict = {}
    ordered = []
    for b in order:
        for e in sorted(adj[b], key=lambda e: realization.r_key(e.id), reverse=True):
            rec = e_prime.get(e.id)
            if rec is None:
                continue
            ordered.append(rec)
            a = rec[3][0]
            if a + c_r[b] <= budgets[b] and e.v not in assigned:
                c_r[b] = c_r[b] + a
                assigned.add(e.v)
                bundles.setdefault(b, []).append((e.v, rec[3]))
    m = Assignment({b: tuple(x) for b, x in bundles.items()})
    return BudgetRunTrace(m, g_s, tuple(ordered), _thresholds(instance, g_s), c_r, budgets)


def diagnostics_budget(trace: BudgetRunTrace):
    """Return ``(e_plus, e_safe)``.

    ``e_plus`` maps each buyer to its E' records that fit the budget together
    with every larger E' reward of the same buyer; ``e_safe`` lists the E'
    records with no smaller E' reward on the same item.
    """
    by_buyer: dict = {}
    by_item: dict = {}
    for rec in trace.e_prime:
        by_buyer.setdefault(rec[1], []).append(rec)
        by_item.setdefault(rec[2], []).append(rec)
    e_plus = {}
    for b, recs in by_buyer.items():
        recs = sorted(recs, key=lambda r: r[3], reverse=True)
        kept, above = [], 0.0
        for rec in recs:
            if rec[3][0] + above <= trace.budgets[b]:
                kept.append(rec)
            above = above + rec[3][0]
        e_plus[b] = tuple(kept)
    e_safe = tuple(rec for rec in trace.e_prime
                   if all(other[3] >= rec[3] for other in by_item[rec[2]]))
    return e_plus, e_safe


def safe_plus_weight(trace: BudgetRunTrace) -> float:
    """``w(E_safe ∩ E+)``."""
    e_plus, e_safe = diagnostics_budget(trace)
    plus = {rec for recs in e_plus.values() for rec in recs}
    return float(sum(rec[3][0] for rec in e_safe if rec in plus))


def budget_welfare(assignment: Assignment, budgets) -> float:
    budgets = dict(budgets)
    return float(sum(min(assignment.load(b), budgets[b]) for b in assignment.bundles))
