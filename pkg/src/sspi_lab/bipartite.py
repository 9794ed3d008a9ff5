"""Vertex-arrival bipartite matching: the posted-price policy, its truthful
variant and the transversal-matroid version, each with an offline twin."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ZERO_KEY, Instance, Realization
from .errors import InputError
from .oracles import Matching, greedy_matching


@dataclass(frozen=True)
class BipartiteRunTrace:
    """One run of a vertex-arrival policy.

    ``e_plus`` holds ``(edge_id, buyer, item, reward_key)`` records, at most
    one per buyer.  ``b_s``, ``b_r`` and ``i_s`` are the final state sets of
    the offline simulation and stay empty for online runs.
    """

    M: Matching
    e_plus: tuple
    M_S: Matching
    prices: dict
    b_s: frozenset = frozenset()
    b_r: frozenset = frozenset()
    i_s: frozenset = frozenset()
    events: tuple = field(default=(), compare=False)

    def e_b(self) -> dict:
        return {b: rec for rec in self.e_plus for b in (rec[1],)}

    def same_sets(self, other: "BipartiteRunTrace") -> bool:
        return (set(self.e_plus) == set(other.e_plus)
                and set(self.M_S.edges) == set(other.M_S.edges)
                and set(self.M.edges) == set(other.M.edges))


@dataclass(frozen=True)
class TruthfulRunTrace:
    """One run of the truthful mechanism.

    ``feasible`` maps buyer -> tuple of edge ids offered at arrival,
    ``charged`` buyer -> price paid, ``utility`` buyer -> true utility.
    """

    M: Matching
    feasible: dict
    charged: dict
    utility: dict
    prices: dict
    events: tuple = field(default=(), compare=False)


def _check_buyers(instance: Instance, order) -> list:
    order = list(order)
    if len(order) != len(instance.buyers) or set(order) != set(instance.buyers):
        raise InputError("arrival order must be a permutation of the buyers")
    return order


def _require_bipartite(instance: Instance):
    if instance.kind != "bipartite":
        raise InputError(f"vertex-arrival matching needs a bipartite instance, got {instance.kind}")


def buyer_edges(instance: Instance) -> dict:
    out: dict = {b: [] for b in instance.buyers}
    for e in instance.edges:
        out[e.u].append(e)
    return out


def sample_prices(instance: Instance, realization: Realization):
    recs = [(e.id, e.u, e.v, realization.s_key(e.id)) for e in instance.edges]
    m_s = greedy_matching(recs)
    prices = {x: ZERO_KEY for x in tuple(instance.buyers) + tuple(instance.items)}
    for eid, b, i, _ in m_s.edges:
        prices[b] = prices[i] = realization.s_key(eid)
    return m_s, prices


def run_vertex_arrival(instance: Instance, realization: Realization, buyer_order) -> BipartiteRunTrace:
    """Each arriving buyer proposes its best price-feasible edge; it is collected if the item is free."""
    _require_bipartite(instance)
    order = _check_buyers(instance, buyer_order)
    adj = buyer_edges(instance)
    m_s, prices = sample_prices(instance, realization)
    e_plus, picked, events = [], [], []
    taken: set = set()
    for b in order:
        best = None
        for e in adj[b]:
            r = realization.r_key(e.id)
            if r >= max(prices[b], prices[e.v]) and (best is None or r > best[3]):
                best = (e.id, b, e.v, r)
        revealed = {e.id: realization.r(e.id) for e in adj[b]}
        if best is None:
            events.append({"buyer": b, "rewards": revealed, "decision": "reject", "reason": "no price-feasible edge"})
            continue
        e_plus.append(best)
        if best[2] not in taken:
            taken.add(best[2])
            picked.append((best[0], b, best[2], best[3][0]))
            events.append({"buyer": b, "rewards": revealed, "edge": best[0], "decision": "accept", "reason": "item free"})
        else:
            events.append({"buyer": b, "rewards": revealed, "edge": best[0], "decision": "reject", "reason": "item already matched"})
    return BipartiteRunTrace(Matching(tuple(picked)), tuple(e_plus), m_s, prices, events=tuple(events))


def _extract(e_plus: dict, order) -> Matching:
    taken: set = set()
    picked = []
    for b in order:
        rec = e_plus.get(b)
        if rec is not None and rec[2] not in taken:
            taken.add(rec[2])
            picked.append((rec[0], rec[1], rec[2], rec[3][0]))
    return Matching(tuple(picked))


def run_vertex_arrival_offline_sim(instance: Instance, realization: Realization, buyer_order) -> BipartiteRunTrace:
    """Greedy walk over all draws keeping the buyer/item state sets; coins come from the realization."""
    _require_bipartite(instance)
    order = _check_buyers(instance, buyer_order)
    edges = instance.edges
    b_s, b_r, i_s = set(instance.buyers), set(instance.buyers), set(instance.items)
    status: dict = {}
    e_plus: dict = {}
    m_s = []
    for key, pos, is_reward in realization.ordered_draws():
        e = edges[pos]
        b, i = e.u, e.v
        if e.id not in status:
            status[e.id] = "R" if is_reward else "S"
            if is_reward:
                if b in b_r and i in i_s:
                    e_plus[b] = (e.id, b, i, key)
                    b_r.discard(b)
            elif b in b_s and i in i_s:
                m_s.append((e.id, b, i, key[0]))
                b_s.discard(b)
                b_r.discard(b)
                i_s.discard(i)
        elif status[e.id] == "R" and b in b_s and i in i_s:
            m_s.append((e.id, b, i, key[0]))
            b_s.discard(b)
            i_s.discard(i)
    prices = {x: ZERO_KEY for x in tuple(instance.buyers) + tuple(instance.items)}
    for eid, b, i, _ in m_s:
        prices[b] = prices[i] = realization.s_key(eid)
    ordered = tuple(e_plus[b] for b in order if b in e_plus)
    return BipartiteRunTrace(_extract(e_plus, order), ordered, Matching(tuple(m_s)), prices,
                             frozenset(b_s), frozenset(b_r), frozenset(i_s))


def _report_keys(instance: Instance, realization: Realization, reports) -> dict:
    """Edge id -> report key.  A report keeps the tie priority of the true reward."""
    out = {e.id: realization.r_key(e.id) for e in instance.edges}
    if reports is None:
        return out
    adj = buyer_edges(instance)
    for b, vec in dict(reports).items():
        if b not in adj:
            raise InputError(f"report for unknown buyer {b!r}")
        vec = list(vec)
        if len(vec) != len(adj[b]):
            raise InputError(f"buyer {b!r} has {len(adj[b])} edges but reported {len(vec)} values")
        for e, x in zip(adj[b], vec):
            if x < 0:
                raise InputError("reported values must be nonnegative")
            out[e.id] = (float(x), out[e.id][1])
    return out


def run_truthful(instance: Instance, realization: Realization, buyer_order, reports=None) -> TruthfulRunTrace:
    """Posted prices ``max(p_b, p_i)``; each buyer takes its utility-maximizing free item.

    ``reports`` maps a buyer to the values it claims for its edges (in
    instance edge order).  Selection uses reports, welfare and utility use
    the true rewards.
    """
    _require_bipartite(instance)
    order = _check_buyers(instance, buyer_order)
    adj = buyer_edges(instance)
    rep = _report_keys(instance, realization, reports)
    _, prices = sample_prices(instance, realization)
    taken: set = set()
    picked, events = [], []
    feasible, charged, utility = {}, {}, {}
    for b in order:
        offer = []
        for e in adj[b]:
            price = max(prices[b], prices[e.v])
            if e.v not in taken and rep[e.id] >= price:
                offer.append((rep[e.id][0] - price[0], rep[e.id], e, price))
        feasible[b] = tuple(o[2].id for o in offer)
        if not offer:
            utility[b] = 0.0
            events.append({"buyer": b, "decision": "reject", "reason": "no feasible item"})
            continue
        _, _, e, price = max(offer, key=lambda o: (o[0], o[1]))
        taken.add(e.v)
        r_true = realization.r(e.id)
        picked.append((e.id, b, e.v, r_true))
        charged[b] = price[0]
        utility[b] = r_true - price[0]
        events.append({"buyer": b, "edge": e.id, "decision": "accept", "price": price[0], "reason": "utility maximizer"})
    return TruthfulRunTrace(Matching(tuple(picked)), feasible, charged, utility, prices, tuple(events))


def misreport_grid(instance: Instance, realization: Realization, buyer, min_points: int = 25,
                   max_points: int = 4096) -> list:
    """Report vectors for ``buyer`` built on utility breakpoints.

    Per edge: 0, every vertex price at the buyer and its items, the buyer's
    true rewards, midpoints between consecutive points and one point above
    the largest.  Uniform points are added until the product grid has at
    least ``min_points`` vectors.
    """
    adj = buyer_edges(instance)[buyer]
    if not adj:
        return [()]
    _, prices = sample_prices(instance, realization)
    base = {0.0, prices[buyer][0]}
    base.update(prices[e.v][0] for e in adj)
    base.update(realization.r(e.id) for e in adj)
    pts = sorted(base)
    pts = sorted(set(pts) | {(a + b) / 2 for a, b in zip(pts, pts[1:])} | {pts[-1] + 1.0})
    d = len(adj)
    need = math.ceil(min_points ** (1.0 / d) - 1e-9)
    k = need
    while len(pts) < need:
        extra = np.linspace(0.0, pts[-1], k + 2)[1:-1]
        pts = sorted(set(pts) | set(float(x) for x in extra))
        k += need
    while len(pts) ** d > max_points and len(pts) > 2:
        pts = pts[::2] if pts[-1] in pts[::2] else pts[::2] + [pts[-1]]
    return list(itertools.product(pts, repeat=d))


def enumerate_misreports(instance: Instance, realization: Realization, buyer, grid=None,
                         buyer_order=None) -> dict:
    """Compare the buyer's true utility under truthful play with every grid misreport.

    Returns ``{"truthful": u, "best_misreport": u', "max_violation": u' - u,
    "argmax": report, "grid_size": n}``; truthfulness means ``max_violation <= 0``.
    """
    order = list(buyer_order) if buyer_order is not None else list(instance.buyers)
    if grid is None:
        grid = misreport_grid(instance, realization, buyer)
    truthful = run_truthful(instance, realization, order).utility.get(buyer, 0.0)
    best, arg = -math.inf, None
    for vec in grid:
        u = run_truthful(instance, realization, order, {buyer: vec}).utility.get(buyer, 0.0)
        if u > best:
            best, arg = u, vec
    return {"truthful": truthful, "best_misreport": best, "max_violation": best - truthful,
            "argmax": arg, "grid_size": len(grid)}


def _transversal_adj(instance: Instance) -> dict:
    if instance.kind != "transversal":
        raise InputError(f"transversal policy needs a transversal instance, got {instance.kind}")
    rank = {i: k for k, i in enumerate(instance.items)}
    out: dict = {b: [] for b in instance.buyers}
    for e in instance.edges:
        out[e.u].append(e)
    for b in out:
        out[b].sort(key=lambda e: rank[e.v])
    return out


def transversal_prices(instance: Instance, realization: Realization):
    adj = _transversal_adj(instance)
    taken: set = set()
    m_s = []
    for b in sorted(instance.buyers, key=realization.s_key, reverse=True):
        for e in adj[b]:
            if e.v not in taken:
                taken.add(e.v)
                m_s.append((e.id, b, e.v, realization.s(b)))
                break
    prices = {x: ZERO_KEY for x in tuple(instance.buyers) + tuple(instance.items)}
    for _, b, i, _ in m_s:
        prices[b] = prices[i] = realization.s_key(b)
    return Matching(tuple(m_s)), prices


def run_transversal(instance: Instance, realization: Realization, buyer_order) -> BipartiteRunTrace:
    """Every edge of a buyer carries the buyer's weight; ties inside a buyer follow the item order."""
    adj = _transversal_adj(instance)
    order = _check_buyers(instance, buyer_order)
    m_s, prices = transversal_prices(instance, realization)
    e_plus, picked, events = [], [], []
    taken: set = set()
    for b in order:
        r = realization.r_key(b)
        hit = next((e for e in adj[b] if r >= max(prices[b], prices[e.v])), None)
        if hit is None:
            events.append({"buyer": b, "reward": r[0], "decision": "reject", "reason": "no price-feasible item"})
            continue
        e_plus.append((hit.id, b, hit.v, r))
        if hit.v not in taken:
            taken.add(hit.v)
            picked.append((hit.id, b, hit.v, r[0]))
            events.append({"buyer": b, "reward": r[0], "edge": hit.id, "decision": "accept", "reason": "item free"})
        else:
            events.append({"buyer": b, "reward": r[0], "edge": hit.id, "decision": "reject", "reason": "item already matched"})
    return BipartiteRunTrace(Matching(tuple(picked)), tuple(e_plus), m_s, prices, events=tuple(events))


def run_transversal_offline_sim(instance: Instance, realization: Realization, buyer_order) -> BipartiteRunTrace:
    """Offline twin walking the ``2|B|`` buyer draws in decreasing order."""
    adj = _transversal_adj(instance)
    order = _check_buyers(instance, buyer_order)
    buyers = instance.element_ids
    b_s, b_r, i_s = set(instance.buyers), set(instance.buyers), set(instance.items)
    status: dict = {}
    e_plus: dict = {}
    m_s = []
    for key, pos, is_reward in realization.ordered_draws():
        b = buyers[pos]
        first_free = next((e for e in adj[b] if e.v in i_s), None)
        if b not in status:
            status[b] = "R" if is_reward else "S"
            if is_reward:
                if b in b_r and first_free is not None:
                    e_plus[b] = (first_free.id, b, first_free.v, key)
                    b_r.discard(b)
            elif b in b_s and first_free is not None:
                m_s.append((first_free.id, b, first_free.v, key[0]))
                b_s.discard(b)
                b_r.discard(b)
                i_s.discard(first_free.v)
        elif status[b] == "R" and b in b_s and first_free is not None:
            m_s.append((first_free.id, b, first_free.v, key[0]))
            b_s.discard(b)
            i_s.discard(first_free.v)
    prices = {x: ZERO_KEY for x in tuple(instance.buyers) + tuple(instance.items)}
    for _, b, i, _ in m_s:
        prices[b] = prices[i] = realization.s_key(b)
    ordered = tuple(e_plus[b] for b in order if b in e_plus)
    return BipartiteRunTrace(_extract(e_plus, order), ordered, Matching(tuple(m_s)), prices,
                             frozenset(b_s), frozenset(b_r), frozenset(i_s))


def safe_edges_bipartite(trace: BipartiteRunTrace, buyers=None) -> dict:
    """Buyer -> its E-plus edge id when that edge is safe, else None.

    The edge ``{b, i}`` is safe for ``b`` when it is the only E-plus edge at
    ``b`` and no E-plus edge at ``i`` has a smaller reward.
    """
    by_buyer: dict = {}
    by_item: dict = {}
    for rec in trace.e_plus:
        by_buyer.setdefault(rec[1], []).append(rec)
        by_item.setdefault(rec[2], []).append(rec)
    if buyers is None:
        buyers = list(by_buyer)
    out = {}
    for b in buyers:
        recs = by_buyer.get(b, [])
        out[b] = None
        if len(recs) == 1:
            eid, _, i, key = recs[0]
            if all(r[3] >= key for r in by_item.get(i, [])):
                out[b] = eid
    return out


def safe_reward_sum_bipartite(trace: BipartiteRunTrace) -> float:
    best = trace.e_b()
    return float(sum(best[b][3][0] for b, e in safe_edges_bipartite(trace).items() if e is not None))
