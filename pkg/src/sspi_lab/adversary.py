"""Arrival orders: named heuristics, exhaustive static search and the
realization-aware adaptive adversary."""

from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass

from .core import ZERO_KEY, Instance, RandomSource, Realization
from .errors import SizeError

STATIC_CAP = 7
ADAPTIVE_CAP = 6

FIXED_ORDER_NAMES = ("identity", "reverse", "random", "ascending-reward", "descending-reward",
                     "ascending-threshold-margin")


def arrival_units(instance: Instance, policy=None) -> tuple:
    if policy is not None:
        return policy.units(instance)
    if instance.kind in ("bipartite", "transversal", "budget-additive"):
        return tuple(instance.buyers)
    return tuple(e.id for e in instance.edges)


def unit_rewards(instance: Instance, realization: Realization, units) -> dict:
    """Reward key per unit; a buyer's reward is its largest edge reward."""
    if instance.kind == "transversal" or set(units) <= set(realization.element_ids):
        return {u: realization.r_key(u) for u in units}
    best = {u: ZERO_KEY for u in units}
    for e in instance.edges:
        if e.u in best:
            best[e.u] = max(best[e.u], realization.r_key(e.id))
    return best


def threshold_margins(instance: Instance, realization: Realization, units, policy_name=None) -> dict:
    """Reward minus the price the unit has to beat (best over a buyer's edges)."""
    from .bipartite import sample_prices as bp_prices, transversal_prices
    from .budget import _thresholds, sample_greedy
    from .matching import sample_prices as edge_prices

    kind = instance.kind
    if policy_name in ("single-choice",) or kind in ("single-choice", "partition-matroid"):
        tau = max(realization.samples, default=ZERO_KEY)
        return {u: realization.r(u) - tau[0] for u in units}
    if kind == "transversal":
        _, prices = transversal_prices(instance, realization)
        out = {}
        for b in units:
            ps = [max(prices[b], prices[e.v])[0] for e in instance.edges if e.u == b]
            out[b] = realization.r(b) - min(ps, default=0.0)
        return out
    if kind == "budget-additive":
        tau = _thresholds(instance, sample_greedy(instance, realization))
        out = {b: -math.inf for b in units}
        for e in instance.edges:
            out[e.u] = max(out[e.u], realization.r(e.id) - tau[e.v][0])
        return out
    if set(units) <= set(realization.element_ids):
        _, prices = edge_prices(instance, realization) if kind == "general-graph" else bp_prices(instance, realization)
        edges = {e.id: e for e in instance.edges}
        return {u: realization.r(u) - max(prices[edges[u].u], prices[edges[u].v])[0] for u in units}
    _, prices = bp_prices(instance, realization)
    out = {b: -math.inf for b in units}
    for e in instance.edges:
        out[e.u] = max(out[e.u], realization.r(e.id) - max(prices[e.u], prices[e.v])[0])
    return out


def fixed_orders(instance: Instance, realization: Realization | None = None, rng: RandomSource | None = None,
                 policy=None) -> dict:
    """Named heuristic orders; reward-based ones need a realization.

    Ties in the sorted orders keep the identity order.
    """
    units = arrival_units(instance, policy)
    rng = rng if rng is not None else RandomSource(0)
    out = {
        "identity": tuple(units),
        "reverse": tuple(reversed(units)),
        "random": tuple(units[k] for k in rng.fork("random-order").generator.permutation(len(units))) if units else (),
    }
    if realization is not None:
        rew = unit_rewards(instance, realization, units)
        asc = sorted(units, key=lambda u: rew[u])
        out["ascending-reward"] = tuple(asc)
        out["descending-reward"] = tuple(sorted(units, key=lambda u: rew[u], reverse=True))
        margin = threshold_margins(instance, realization, units, getattr(policy, "name", None))
        out["ascending-threshold-margin"] = tuple(sorted(units, key=lambda u: margin[u]))
    return out


@dataclass(frozen=True)
class WorstOrder:
    order: tuple
    value: float
    searched: int
    kind: str  # "exhaustive", "adaptive" or "heuristic"


def ensemble_value(instance, ensemble, policy, order, rng: RandomSource | None = None) -> float:
    """Probability-weighted policy value of a static order over ``[(realization, weight), ...]``."""
    return math.fsum(w * policy.run(instance, real, order, rng)[0] for real, w in ensemble)


def worst_order_exhaustive(instance: Instance, ensemble, policy, rng: RandomSource | None = None,
                           cap: int = STATIC_CAP, evaluator=None) -> WorstOrder:
    """Static order minimizing the ensemble mean; lexicographically first on ties.

    ``evaluator`` may supply a vectorized ``totals(orders) -> values``
    function over unit-position permutations; otherwise every order is
    simulated realization by realization.
    """
    units = arrival_units(instance, policy)
    if len(units) > cap:
        raise SizeError(f"{len(units)} arriving units exceed the permutation cap {cap}", instance=instance)
    perms = list(itertools.permutations(range(len(units))))
    if evaluator is not None:
        values = list(evaluator(perms))
    else:
        values = [ensemble_value(instance, ensemble, policy, [units[k] for k in p], rng) for p in perms]
    best = min(range(len(perms)), key=lambda j: (values[j], j))
    return WorstOrder(tuple(units[k] for k in perms[best]), float(values[best]), len(perms), "exhaustive")


@dataclass(frozen=True)
class AdaptiveTrace:
    order: tuple
    value: float
    nodes: int


def worst_order_adaptive(instance: Instance, realization: Realization, policy, rng: RandomSource | None = None,
                         cap: int = ADAPTIVE_CAP) -> AdaptiveTrace:
    """Adaptive adversary that sees the whole realization.

    The policy is deterministic given the realization, so the game tree is a
    pure minimization over the next arriving unit; the search carries the
    policy state down the tree instead of re-running prefixes.
    """
    units = list(arrival_units(instance, policy))
    if len(units) > cap:
        raise SizeError(f"{len(units)} arriving units exceed the adaptive cap {cap}", instance=instance)
    if policy.adapter is None or policy.inner is not None:
        best = None
        nodes = 0
        for perm in itertools.permutations(units):
            nodes += 1
            v = policy.run(instance, realization, list(perm), rng)[0]
            if best is None or v < best[1]:
                best = (perm, v)
        return AdaptiveTrace(tuple(best[0]) if best else (), float(best[1]) if best else 0.0, nodes)
    from .reductions import unit_samples

    adapter = policy.adapter(instance, rng)
    samples, rewards = unit_samples(adapter, realization)
    root = adapter.initialize(samples)
    counter = [0]

    def search(state, remaining, acc):
        counter[0] += 1
        if not remaining:
            return acc, ()
        best = None
        for u in remaining:
            child = copy.deepcopy(state)
            gain = math.fsum(v for _, v in adapter.on_arrival(child, u, rewards[u]))
            rest = [x for x in remaining if x != u]
            val, tail = search(child, rest, acc + gain)
            if best is None or val < best[0]:
                best = (val, (u,) + tail)
        return best

    value, order = search(root, units, 0.0)
    return AdaptiveTrace(order, float(value), counter[0])
