"""Edge-arrival matching on general graphs with one sample per edge."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import ZERO_KEY, Instance, Realization
from .errors import InputError
from .oracles import Matching, greedy_matching


@dataclass(frozen=True)
class EdgeRunTrace:
    """Everything one run of the edge-arrival policy produced.

    ``e_prime`` holds ``(edge_id, u, v, reward_key)`` records of every
    price-feasible edge; ``prices`` maps each vertex to a key (``ZERO_KEY``
    when the vertex is unmatched on samples).
    """

    M: Matching
    e_prime: tuple
    M_S: Matching
    prices: dict
    r_used: frozenset
    s_used: frozenset
    events: tuple = field(default=(), compare=False)

    @property
    def e_prime_ids(self) -> frozenset:
        return frozenset(e for e, *_ in self.e_prime)

    def e_v(self) -> dict:
        """Vertex -> record of its max-reward E' edge (vertices without one are absent)."""
        best: dict = {}
        for rec in self.e_prime:
            _, u, v, key = rec
            for x in (u, v):
                if x not in best or key > best[x][3]:
                    best[x] = rec
        return best

    def same_sets(self, other: "EdgeRunTrace") -> bool:
        return (set(self.e_prime) == set(other.e_prime)
                and set(self.M_S.edges) == set(other.M_S.edges)
                and set(self.M.edges) == set(other.M.edges))


def _check_order(instance: Instance, order) -> list:
    order = list(order)
    ids = [e.id for e in instance.edges]
    if sorted(map(str, order)) != sorted(map(str, ids)) or len(set(order)) != len(order):
        raise InputError("arrival order must be a permutation of the edge set")
    return order


def sample_prices(instance: Instance, realization: Realization):
    """Greedy matching on samples and the vertex prices it induces."""
    recs = [(e.id, e.u, e.v, realization.s_key(e.id)) for e in instance.edges]
    m_s = greedy_matching(recs)
    prices = {x: ZERO_KEY for x in instance.vertices}
    for e, u, v, _ in m_s.edges:
        prices[u] = prices[v] = realization.s_key(e)
    return m_s, prices


def run_edge_arrival(instance: Instance, realization: Realization, order) -> EdgeRunTrace:
    """Online policy: collect an arriving edge iff its reward beats both endpoint prices and both ends are free."""
    order = _check_order(instance, order)
    edges = {e.id: e for e in instance.edges}
    m_s, prices = sample_prices(instance, realization)
    e_prime, picked, events = [], [], []
    matched: set = set()
    for eid in order:
        e = edges[eid]
        r = realization.r_key(eid)
        if e.u != e.v and r >= max(prices[e.u], prices[e.v]):
            e_prime.append((eid, e.u, e.v, r))
            if e.u not in matched and e.v not in matched:
                matched.update((e.u, e.v))
                picked.append((eid, e.u, e.v, r[0]))
                events.append({"edge": eid, "reward": r[0], "decision": "accept", "reason": "price-feasible, endpoints free"})
            else:
                events.append({"edge": eid, "reward": r[0], "decision": "reject", "reason": "endpoint already matched"})
        else:
            events.append({"edge": eid, "reward": r[0], "decision": "reject", "reason": "below price"})
    k = realization.index
    r_used = frozenset(e.id for e in instance.edges if realization.heads(k[e.id]))
    return EdgeRunTrace(Matching(tuple(picked)), tuple(e_prime), m_s, prices,
                        r_used, frozenset(edges) - r_used, tuple(events))


def extract_first_come(e_prime_in_order) -> Matching:
    matched: set = set()
    picked = []
    for eid, u, v, key in e_prime_in_order:
        if u not in matched and v not in matched:
            matched.update((u, v))
            picked.append((eid, u, v, key[0]))
    return Matching(tuple(picked))


def run_edge_arrival_offline_sim(instance: Instance, realization: Realization, order) -> EdgeRunTrace:
    """Greedy walk over all 2|E| draws, deciding sample/reward at first sight.

    The coin of an edge is read from the shared realization (heads iff its
    larger draw is the reward), so this run is coupled to
    :func:`run_edge_arrival` on the same realization.
    """
    order = _check_order(instance, order)
    edges = instance.edges
    free = set(instance.vertices)
    r_used: set = set()
    s_used: set = set()
    e_prime: dict = {}
    m_s = []
    for key, pos, is_reward in realization.ordered_draws():
        e = edges[pos]
        if e.id not in r_used and e.id not in s_used:
            if is_reward:
                r_used.add(e.id)
                if e.u != e.v and e.u in free and e.v in free:
                    e_prime[e.id] = (e.id, e.u, e.v, key)
            else:
                s_used.add(e.id)
                if e.u != e.v and e.u in free and e.v in free:
                    m_s.append((e.id, e.u, e.v, key[0]))
                    free -= {e.u, e.v}
        elif e.id in r_used and e.u != e.v and e.u in free and e.v in free:
            m_s.append((e.id, e.u, e.v, key[0]))
            free -= {e.u, e.v}
    prices = {x: ZERO_KEY for x in instance.vertices}
    for eid, u, v, _ in m_s:
        prices[u] = prices[v] = realization.s_key(eid)
    ordered = [e_prime[eid] for eid in order if eid in e_prime]
    return EdgeRunTrace(extract_first_come(ordered), tuple(ordered), Matching(tuple(m_s)),
                        prices, frozenset(r_used), frozenset(s_used))


def safe_edges(trace: EdgeRunTrace, vertices=None) -> dict:
    """Vertex -> edge id safe for it, or None.

    An E' edge ``{u, v}`` is safe for ``v`` when it is the only E' edge at
    ``v`` and no E' edge at ``u`` has a smaller reward.
    """
    at: dict = {}
    for rec in trace.e_prime:
        _, u, v, _ = rec
        at.setdefault(u, []).append(rec)
        if v != u:
            at.setdefault(v, []).append(rec)
    if vertices is None:
        vertices = list(trace.prices) or list(at)
    out = {}
    for x in vertices:
        recs = at.get(x, [])
        out[x] = None
        if len(recs) != 1:
            continue
        eid, u, v, key = recs[0]
        other = v if x == u else u
        if all(k2 >= key for _, _, _, k2 in at.get(other, [])):
            out[x] = eid
    return out


def safe_reward_sum(trace: EdgeRunTrace) -> float:
    """Sum over vertices of ``r_{e_v}`` for vertices whose ``e_v`` is safe."""
    safe = safe_edges(trace)
    best = trace.e_v()
    return float(sum(best[x][3][0] for x, e in safe.items() if e is not None and x in best))


def trace_log(trace: EdgeRunTrace) -> list:
    return list(trace.events)
