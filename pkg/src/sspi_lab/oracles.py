"""Offline baselines: greedy and exact optima.

Weights may be plain floats or ``(value, priority)`` keys; keys fix the scan
order of the greedy routines, floats are ordered by value with earlier
positions winning ties.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import SizeError

BRUTE_FORCE_EDGE_CAP = 20
BUDGET_ITEM_CAP = 10
BUDGET_BUYER_CAP = 5
FOREST_EDGE_CAP = 20


def _value(w) -> float:
    return float(w[0]) if isinstance(w, tuple) else float(w)


def _keyed(weighted):
    """Attach a strict sort key to each record (last field is the weight)."""
    n = len(weighted)
    out = []
    for pos, rec in enumerate(weighted):
        w = rec[-1]
        key = w if isinstance(w, tuple) else (float(w), n - pos)
        out.append((key, rec))
    return out


@dataclass(frozen=True)
class Matching:
    """Selected edges as ``(edge_id, u, v, weight)`` records."""

    edges: tuple = ()

    @property
    def weight(self) -> float:
        return float(sum(w for _, _, _, w in self.edges))

    @property
    def ids(self) -> frozenset:
        return frozenset(e for e, _, _, _ in self.edges)

    def mate(self) -> dict:
        out = {}
        for e, u, v, w in self.edges:
            out[u] = (e, v, w)
            out[v] = (e, u, w)
        return out

    def is_matching(self) -> bool:
        seen = set()
        for _, u, v, _ in self.edges:
            if u in seen or v in seen or u == v:
                return False
            seen.update((u, v))
        return True

    def __len__(self):
        return len(self.edges)


def greedy_matching(weighted_edges) -> Matching:
    """Scan ``(edge_id, u, v, weight)`` by decreasing weight, keep an edge iff both ends are free."""
    used = set()
    picked = []
    for key, (e, u, v, _w) in sorted(_keyed(weighted_edges), key=lambda t: t[0], reverse=True):
        if u == v or u in used or v in used:
            continue
        used.update((u, v))
        picked.append((e, u, v, key[0]))
    return Matching(tuple(picked))


def all_matchings(edges) -> list:
    """Every matching of ``[(edge_id, u, v), ...]`` as a tuple of edge positions."""
    out: list = []
    edges = list(edges)

    def rec(pos, used, chosen):
        if pos == len(edges):
            out.append(tuple(chosen))
            return
        rec(pos + 1, used, chosen)
        _, u, v = edges[pos][:3]
        if u != v and u not in used and v not in used:
            chosen.append(pos)
            rec(pos + 1, used | {u, v}, chosen)
            chosen.pop()

    rec(0, frozenset(), [])
    return out


def is_bipartite(edges) -> bool:
    colour: dict = {}
    adj: dict = {}
    for _, u, v in ((r[0], r[1], r[2]) for r in edges):
        if u == v:
            return False
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    for start in adj:
        if start in colour:
            continue
        colour[start] = 0
        stack = [start]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in colour:
                    colour[y] = 1 - colour[x]
                    stack.append(y)
                elif colour[y] == colour[x]:
                    return False
    return True


def _bipartite_sides(edges):
    colour: dict = {}
    adj: dict = {}
    for _, u, v, _w in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    for start in adj:
        if start in colour:
            continue
        colour[start] = 0
        stack = [start]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in colour:
                    colour[y] = 1 - colour[x]
                    stack.append(y)
    left = [x for x in adj if colour[x] == 0]
    right = [x for x in adj if colour[x] == 1]
    return left, right, colour


def optimal_matching(weighted_edges, *, cap: int = BRUTE_FORCE_EDGE_CAP, bipartite: bool | None = None) -> Matching:
    """Maximum-weight matching.

    Bipartite graphs go through an exact assignment solver and have no size
    limit; anything else is brute-forced up to ``cap`` edges.
    """
    recs = [(e, u, v, _value(w)) for e, u, v, w in weighted_edges]
    if not recs:
        return Matching()
    if bipartite is None:
        bipartite = is_bipartite(recs)
    if bipartite:
        return _assignment_matching(recs)
    if len(recs) > cap:
        raise SizeError(f"{len(recs)} edges exceed the brute-force cap {cap} for non-bipartite graphs")
    best, best_w = (), -1.0
    for m in all_matchings(recs):
        w = sum(recs[k][3] for k in m)
        if w > best_w:
            best, best_w = m, w
    return Matching(tuple(recs[k] for k in best))


def _assignment_matching(recs) -> Matching:
    left, right, colour = _bipartite_sides(recs)
    li = {x: k for k, x in enumerate(left)}
    ri = {x: k for k, x in enumerate(right)}
    weight = np.zeros((len(left), len(right)))
    best_edge: dict = {}
    for rec in recs:
        _, u, v, w = rec
        a, b = (li[u], ri[v]) if colour[u] == 0 else (li[v], ri[u])
        if (a, b) not in best_edge or w > weight[a, b]:
            weight[a, b] = w
            best_edge[(a, b)] = rec
    rows, cols = linear_sum_assignment(weight, maximize=True)
    picked = [best_edge[(a, b)] for a, b in zip(rows, cols)
              if (a, b) in best_edge and weight[a, b] > 0]
    return Matching(tuple(picked))


@dataclass(frozen=True)
class Assignment:
    """Items assigned to buyers.

    ``bundles`` maps buyer -> tuple of ``(item, key)``; ``blocked_at`` maps a
    blocked buyer to the key of the value whose budget test failed.
    """

    bundles: dict = field(default_factory=dict)
    blocked_at: dict = field(default_factory=dict)

    def load(self, buyer) -> float:
        return float(sum(_value(k) for _, k in self.bundles.get(buyer, ())))

    @property
    def weight(self) -> float:
        return float(sum(self.load(b) for b in self.bundles))

    def items(self) -> dict:
        return {i: b for b, bundle in self.bundles.items() for i, _ in bundle}

    def pairs(self) -> frozenset:
        return frozenset((b, i) for b, bundle in self.bundles.items() for i, _ in bundle)


def greedy_budget_assignment(values, budgets) -> Assignment:
    """Greedy allocation with permanent blocking.

    ``values`` holds ``(buyer, item, weight)`` records, already truncated to
    the budgets.  A value is taken iff its item is free, its buyer is not
    blocked and the buyer's load stays within budget; the first budget
    overflow of an unblocked buyer on a free item blocks that buyer for good.
    """
    budgets = dict(budgets)
    taken: set = set()
    loads: dict = {}
    bundles: dict = {}
    blocked: dict = {}
    for key, (b, i, _w) in sorted(_keyed(values), key=lambda t: t[0], reverse=True):
        if i in taken or b in blocked:
            continue
        v = key[0]
        if loads.get(b, 0.0) + v <= budgets[b]:
            loads[b] = loads.get(b, 0.0) + v
            bundles.setdefault(b, []).append((i, key))
            taken.add(i)
        else:
            blocked[b] = key
    return Assignment({b: tuple(x) for b, x in bundles.items()}, blocked)


def budget_value(bundles: dict, budgets) -> float:
    budgets = dict(budgets)
    return float(sum(min(sum(_value(v) for _, v in bundle), budgets[b]) for b, bundle in bundles.items()))


def optimal_budget_assignment(values, budgets, *, item_cap: int = BUDGET_ITEM_CAP,
                              buyer_cap: int = BUDGET_BUYER_CAP) -> Assignment:
    """Integral optimum of ``sum_b min(sum of b's values, C_b)`` by exhaustive search."""
    budgets = dict(budgets)
    table: dict = {}
    for b, i, w in values:
        table[(b, i)] = _value(w)
    buyers = sorted({b for b, _ in table} , key=str)
    items = sorted({i for _, i in table}, key=str)
    if len(items) > item_cap or len(buyers) > buyer_cap:
        raise SizeError(f"{len(buyers)} buyers x {len(items)} items exceed the exhaustive cap")
    best = [-1.0, None]
    # optimistic bound: every remaining item at its best value
    tail_best = [0.0] * (len(items) + 1)
    for k in range(len(items) - 1, -1, -1):
        tail_best[k] = tail_best[k + 1] + max((table.get((b, items[k]), 0.0) for b in buyers), default=0.0)

    def rec(k, loads, choice):
        current = sum(min(loads[b], budgets[b]) for b in buyers)
        if current + tail_best[k] <= best[0]:
            return
        if k == len(items):
            best[0], best[1] = current, list(choice)
            return
        i = items[k]
        for b in buyers:
            if (b, i) in table:
                loads[b] += table[(b, i)]
                choice.append((b, i))
                rec(k + 1, loads, choice)
                choice.pop()
                loads[b] -= table[(b, i)]
        rec(k + 1, loads, choice)

    rec(0, {b: 0.0 for b in buyers}, [])
    bundles: dict = {}
    for b, i in best[1] or []:
        bundles.setdefault(b, []).append((i, table[(b, i)]))
    return Assignment({b: tuple(x) for b, x in bundles.items()})


def _has_matching(buyers, adj) -> dict | None:
    """Kuhn's augmenting paths; returns buyer -> item or None if some buyer stays unmatched."""
    owner: dict = {}

    def augment(b, seen):
        for i in adj.get(b, ()):
            if i in seen:
                continue
            seen.add(i)
            if i not in owner or augment(owner[i], seen):
                owner[i] = b
                return True
        return False

    for b in buyers:
        if not augment(b, set()):
            return None
    return {b: i for i, b in owner.items()}


def optimal_transversal_independent_set(instance, buyer_weights) -> Matching:
    """Max-weight set of simultaneously matchable buyers (matroid greedy)."""
    adj: dict = {}
    for e in instance.edges:
        adj.setdefault(e.u, []).append(e.v)
    recs = [(b, b, None, w) for b, w in buyer_weights.items()]
    chosen: list = []
    for key, (b, _, _, _) in sorted(_keyed(recs), key=lambda t: t[0], reverse=True):
        if _has_matching(chosen + [b], adj) is not None:
            chosen.append(b)
    match = _has_matching(chosen, adj) or {}
    by_pair = {(e.u, e.v): e.id for e in instance.edges}
    return Matching(tuple((by_pair[(b, match[b])], b, match[b], _value(buyer_weights[b])) for b in chosen))


def all_transversal_independent_sets(instance) -> list:
    """Every matchable buyer subset, as tuples of buyer positions."""
    adj: dict = {}
    for e in instance.edges:
        adj.setdefault(e.u, []).append(e.v)
    buyers = list(instance.buyers)
    out = []
    for r in range(len(buyers) + 1):
        for combo in itertools.combinations(range(len(buyers)), r):
            if _has_matching([buyers[k] for k in combo], adj) is not None:
                out.append(combo)
    return out


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def is_forest(edges) -> bool:
    uf = _UnionFind()
    return all(uf.union(u, v) for _, u, v, *_ in edges)


def max_forest(weighted_edges) -> Matching:
    """Kruskal on ``(edge_id, u, v, weight)``; returns the forest as a record set."""
    uf = _UnionFind()
    picked = []
    for key, (e, u, v, _w) in sorted(_keyed(weighted_edges), key=lambda t: t[0], reverse=True):
        if key[0] > 0 and uf.union(u, v):
            picked.append((e, u, v, key[0]))
    return Matching(tuple(picked))


def all_forests(edges, *, cap: int = FOREST_EDGE_CAP) -> list:
    """Every acyclic edge subset of ``[(edge_id, u, v), ...]`` as position tuples."""
    edges = list(edges)
    if len(edges) > cap:
        raise SizeError(f"{len(edges)} edges exceed the forest enumeration cap {cap}")
    out = []

    def rec(pos, uf_parent, chosen):
        if pos == len(edges):
            out.append(tuple(chosen))
            return
        rec(pos + 1, uf_parent, chosen)
        _, u, v = edges[pos][:3]
        uf = _UnionFind()
        uf.parent = dict(uf_parent)
        if uf.union(u, v):
            chosen.append(pos)
            rec(pos + 1, uf.parent, chosen)
            chosen.pop()

    rec(0, {}, [])
    return out


def max_forest_bruteforce(weighted_edges, *, cap: int = FOREST_EDGE_CAP) -> float:
    recs = [(e, u, v, _value(w)) for e, u, v, w in weighted_edges]
    return max((sum(recs[k][3] for k in f) for f in all_forests(recs, cap=cap)), default=0.0)
