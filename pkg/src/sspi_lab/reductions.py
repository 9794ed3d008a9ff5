"""Rank-one and partition-matroid threshold policies, the graphic partition,
pointwise policy adapters and the wrapper turning them into order-oblivious
secretary algorithms.  Also hosts the policy registry used by the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .bipartite import buyer_edges, run_transversal, run_truthful, run_vertex_arrival
from .budget import _thresholds, budget_welfare, capacity_prefix, run_budget_additive
from .core import ZERO_KEY, Instance, RandomSource, Realization
from .errors import ConfigError, ContractViolation, InputError
from .matching import run_edge_arrival
from .oracles import (Matching, greedy_budget_assignment, greedy_matching, is_forest,
                      max_forest, optimal_budget_assignment, optimal_matching,
                      optimal_transversal_independent_set)


def _as_key(x):
    return x if isinstance(x, tuple) else (float(x), 0)


@dataclass(frozen=True)
class PartitionMatroid:
    """Disjoint groups; a set is independent iff it meets every group at most once."""

    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(g) for g in self.groups)
        flat = [x for g in groups for x in g]
        if len(set(flat)) != len(flat):
            raise InputError("partition groups overlap")
        object.__setattr__(self, "groups", groups)

    @property
    def ground(self) -> frozenset:
        return frozenset(x for g in self.groups for x in g)

    def group_of(self) -> dict:
        return {x: k for k, g in enumerate(self.groups) for x in g}

    def is_independent(self, elements) -> bool:
        where = self.group_of()
        seen = set()
        for x in elements:
            if x not in where or where[x] in seen:
                return False
            seen.add(where[x])
        return True


def single_choice_sspi(samples, rewards, order):
    """Accept the first arrival whose reward beats the largest sample.

    ``samples`` and ``rewards`` map elements to keys or plain values.
    Returns ``(element, value)`` or ``None``.
    """
    samples = {e: _as_key(v) for e, v in dict(samples).items()}
    rewards = {e: _as_key(v) for e, v in dict(rewards).items()}
    tau = max(samples.values(), default=ZERO_KEY)
    for e in order:
        if rewards[e] > tau:
            return (e, rewards[e][0])
    return None


def alpha_partition_sspi(partition, samples, rewards, order) -> list:
    """Per group, accept the first arrival beating the group's largest sample.

    Elements outside the partition's ground set are never accepted.
    """
    if not isinstance(partition, PartitionMatroid):
        partition = PartitionMatroid(tuple(partition))
    samples = {e: _as_key(v) for e, v in dict(samples).items()}
    rewards = {e: _as_key(v) for e, v in dict(rewards).items()}
    where = partition.group_of()
    tau = [max((samples[x] for x in g if x in samples), default=ZERO_KEY) for g in partition.groups]
    taken: set = set()
    out = []
    for e in order:
        k = where.get(e)
        if k is None or k in taken:
            continue
        if rewards[e] > tau[k]:
            taken.add(k)
            out.append((e, rewards[e][0]))
    return out


def graphic_matroid_partition(instance: Instance, samples=None, rng: RandomSource | None = None) -> PartitionMatroid:
    """Random-orientation partition of a graph's edges.

    Vertices are put in uniformly random order and every edge is handed to
    its later endpoint; the group of ``v`` holds the edges handed to ``v``.
    Picking at most one edge per group always yields a forest, since the
    earliest vertex of any cycle would need an edge handed to it.  Samples
    are accepted for interface symmetry and ignored: the partition never
    looks at weights.  Self-loops belong to no group.
    """
    rng = rng if rng is not None else RandomSource(0)
    vertices = list(instance.vertices)
    perm = rng.generator.permutation(len(vertices))
    pos = {vertices[k]: int(p) for k, p in enumerate(perm)}
    groups: dict = {}
    for e in instance.edges:
        if e.u == e.v:
            continue
        head = e.u if pos[e.u] > pos[e.v] else e.v
        groups.setdefault(head, []).append(e.id)
    return PartitionMatroid(tuple(tuple(groups[v]) for v in vertices if v in groups))


# ---------------------------------------------------------------------------
# pointwise policy adapters


class PolicyAdapter:
    """A single-sample policy as an online state machine.

    ``initialize`` receives one sample per arrival unit, ``on_arrival``
    returns the records accepted for the arriving unit (empty tuple for a
    rejection) and ``is_feasible`` checks the accumulated records against
    the feasibility family.  Scalar units take keys; buyer units take a
    mapping ``edge_id -> key``.
    """

    name = "abstract"

    def __init__(self, instance: Instance, rng: RandomSource | None = None):
        self.instance = instance
        self.rng = rng if rng is not None else RandomSource(0)

    @property
    def units(self) -> tuple:
        return tuple(e.id for e in self.instance.edges)

    def zero_sample(self, unit):
        return ZERO_KEY

    def initialize(self, samples) -> dict:
        raise NotImplementedError

    def on_arrival(self, state: dict, unit, reward) -> tuple:
        raise NotImplementedError

    def is_feasible(self, records) -> bool:
        raise NotImplementedError

    def run(self, samples, rewards, order) -> list:
        state = self.initialize(samples)
        out: list = []
        for u in order:
            out.extend(self.on_arrival(state, u, rewards[u]))
        return out


class SingleChoiceAdapter(PolicyAdapter):
    name = "single-choice"

    @property
    def units(self):
        return self.instance.element_ids

    def initialize(self, samples):
        return {"tau": max(samples.values(), default=ZERO_KEY), "done": False}

    def on_arrival(self, state, unit, reward):
        if not state["done"] and reward > state["tau"]:
            state["done"] = True
            return ((unit, reward[0]),)
        return ()

    def is_feasible(self, records):
        return len(records) <= 1


class AlphaPartitionAdapter(PolicyAdapter):
    name = "alpha-partition"

    def __init__(self, instance, rng=None, partition: PartitionMatroid | None = None):
        super().__init__(instance, rng)
        self.partition = partition

    def _partition(self, samples):
        if self.partition is not None:
            return self.partition
        if self.instance.kind == "general-graph":
            return graphic_matroid_partition(self.instance, samples, self.rng.fork("partition"))
        if self.instance.groups:
            return PartitionMatroid(self.instance.groups)
        return PartitionMatroid((self.instance.element_ids,))

    def initialize(self, samples):
        part = self._partition(samples)
        tau = [max((samples[x] for x in g), default=ZERO_KEY) for g in part.groups]
        return {"part": part, "where": part.group_of(), "tau": tau, "taken": set()}

    def on_arrival(self, state, unit, reward):
        k = state["where"].get(unit)
        if k is None or k in state["taken"] or not reward > state["tau"][k]:
            return ()
        state["taken"].add(k)
        return ((unit, reward[0]),)

    def is_feasible(self, records):
        ids = [r[0] for r in records]
        if len(set(ids)) != len(ids):
            return False
        if self.instance.kind == "general-graph":
            edges = {e.id: e for e in self.instance.edges}
            return is_forest([(e, edges[e].u, edges[e].v) for e in ids])
        if self.partition is not None:
            return self.partition.is_independent(ids)
        if self.instance.groups:
            return PartitionMatroid(self.instance.groups).is_independent(ids)
        return len(ids) <= 1


class EdgeMatchingAdapter(PolicyAdapter):
    name = "edge-matching"

    def initialize(self, samples):
        recs = [(e.id, e.u, e.v, samples[e.id]) for e in self.instance.edges]
        m_s = greedy_matching(recs)
        prices = {x: ZERO_KEY for e in self.instance.edges for x in (e.u, e.v)}
        for eid, u, v, _ in m_s.edges:
            prices[u] = prices[v] = samples[eid]
        return {"prices": prices, "matched": set(), "edges": {e.id: e for e in self.instance.edges}}

    def on_arrival(self, state, unit, reward):
        e = state["edges"][unit]
        p = state["prices"]
        if e.u != e.v and reward >= max(p[e.u], p[e.v]) and e.u not in state["matched"] and e.v not in state["matched"]:
            state["matched"].update((e.u, e.v))
            return ((unit, reward[0]),)
        return ()

    def is_feasible(self, records):
        edges = {e.id: e for e in self.instance.edges}
        return Matching(tuple((r[0], edges[r[0]].u, edges[r[0]].v, r[1]) for r in records)).is_matching()


class _BuyerAdapter(PolicyAdapter):
    @property
    def units(self):
        return tuple(self.instance.buyers)

    def zero_sample(self, unit):
        return {e.id: ZERO_KEY for e in buyer_edges(self.instance)[unit]}

    def _flat(self, samples) -> dict:
        return {eid: k for b in samples for eid, k in samples[b].items()}

    def is_feasible(self, records):
        edges = {e.id: e for e in self.instance.edges}
        return Matching(tuple((r[0], edges[r[0]].u, edges[r[0]].v, r[1]) for r in records)).is_matching()


class BipartiteAdapter(_BuyerAdapter):
    name = "bipartite"

    def initialize(self, samples):
        flat = self._flat(samples)
        recs = [(e.id, e.u, e.v, flat[e.id]) for e in self.instance.edges]
        m_s = greedy_matching(recs)
        prices = {x: ZERO_KEY for x in tuple(self.instance.buyers) + tuple(self.instance.items)}
        for eid, b, i, _ in m_s.edges:
            prices[b] = prices[i] = flat[eid]
        return {"prices": prices, "taken": set(), "adj": buyer_edges(self.instance)}

    def on_arrival(self, state, unit, reward):
        p = state["prices"]
        best = None
        for e in state["adj"][unit]:
            r = reward[e.id]
            if r >= max(p[unit], p[e.v]) and (best is None or r > best[1]):
                best = (e, r)
        if best is None or best[0].v in state["taken"]:
            return ()
        state["taken"].add(best[0].v)
        return ((best[0].id, best[1][0]),)


class TruthfulAdapter(BipartiteAdapter):
    name = "truthful"

    def on_arrival(self, state, unit, reward):
        p = state["prices"]
        offer = []
        for e in state["adj"][unit]:
            price = max(p[unit], p[e.v])
            if e.v not in state["taken"] and reward[e.id] >= price:
                offer.append((reward[e.id][0] - price[0], reward[e.id], e))
        if not offer:
            return ()
        _, r, e = max(offer, key=lambda o: (o[0], o[1]))
        state["taken"].add(e.v)
        return ((e.id, r[0]),)


class TransversalAdapter(PolicyAdapter):
    name = "transversal"

    @property
    def units(self):
        return tuple(self.instance.buyers)

    def initialize(self, samples):
        rank = {i: k for k, i in enumerate(self.instance.items)}
        adj = buyer_edges(self.instance)
        for b in adj:
            adj[b].sort(key=lambda e: rank[e.v])
        taken: set = set()
        prices = {x: ZERO_KEY for x in tuple(self.instance.buyers) + tuple(self.instance.items)}
        for b in sorted(self.instance.buyers, key=lambda b: samples[b], reverse=True):
            for e in adj[b]:
                if e.v not in taken:
                    taken.add(e.v)
                    prices[b] = prices[e.v] = samples[b]
                    break
        return {"prices": prices, "taken": set(), "adj": adj}

    def on_arrival(self, state, unit, reward):
        p = state["prices"]
        hit = next((e for e in state["adj"][unit] if reward >= max(p[unit], p[e.v])), None)
        if hit is None or hit.v in state["taken"]:
            return ()
        state["taken"].add(hit.v)
        return ((hit.id, reward[0]),)

    def is_feasible(self, records):
        edges = {e.id: e for e in self.instance.edges}
        return Matching(tuple((r[0], edges[r[0]].u, edges[r[0]].v, r[1]) for r in records)).is_matching()


class BudgetAdditiveAdapter(_BuyerAdapter):
    name = "budget-additive"

    def initialize(self, samples):
        flat = self._flat(samples)
        recs = [(e.u, e.v, flat[e.id]) for e in self.instance.edges]
        g_s = greedy_budget_assignment(recs, self.instance.budget_map)
        return {"g_s": g_s, "tau": _thresholds(self.instance, g_s), "adj": buyer_edges(self.instance),
                "assigned": set(), "c_r": {b: 0.0 for b in self.instance.buyers}}

    def on_arrival(self, state, unit, reward):
        cap = self.instance.budget_map[unit]
        g_s = state["g_s"]
        out = []
        for e in sorted(state["adj"][unit], key=lambda e: reward[e.id], reverse=True):
            r = reward[e.id]
            blocked = g_s.blocked_at.get(unit)
            if blocked is not None and blocked > r:
                continue
            if r > state["tau"][e.v] and r[0] + capacity_prefix(g_s, unit, r, cap) <= cap:
                if r[0] + state["c_r"][unit] <= cap and e.v not in state["assigned"]:
                    state["c_r"][unit] = state["c_r"][unit] + r[0]
                    state["assigned"].add(e.v)
                    out.append((e.id, r[0]))
        return tuple(out)

    def is_feasible(self, records):
        edges = {e.id: e for e in self.instance.edges}
        items = [edges[r[0]].v for r in records]
        if len(set(items)) != len(items):
            return False
        loads: dict = {}
        for eid, v in records:
            b = edges[eid].u
            loads[b] = loads.get(b, 0.0) + v
        budgets = self.instance.budget_map
        return all(loads[b] <= budgets[b] + 1e-9 for b in loads)


ADAPTERS = {
    "single-choice": SingleChoiceAdapter,
    "alpha-partition": AlphaPartitionAdapter,
    "edge-matching": EdgeMatchingAdapter,
    "bipartite": BipartiteAdapter,
    "truthful": TruthfulAdapter,
    "transversal": TransversalAdapter,
    "budget-additive": BudgetAdditiveAdapter,
}


def unit_samples(adapter: PolicyAdapter, realization: Realization) -> tuple:
    """Per-unit samples and rewards of a realization in the adapter's format."""
    inst = adapter.instance
    if isinstance(adapter, _BuyerAdapter):
        adj = buyer_edges(inst)
        s = {b: {e.id: realization.s_key(e.id) for e in adj[b]} for b in inst.buyers}
        r = {b: {e.id: realization.r_key(e.id) for e in adj[b]} for b in inst.buyers}
        return s, r
    ids = adapter.units
    return ({x: realization.s_key(x) for x in ids}, {x: realization.r_key(x) for x in ids})


@dataclass(frozen=True)
class OOSResult:
    accepted: tuple
    observed: frozenset
    k: int
    phase2_order: tuple

    @property
    def value(self) -> float:
        return float(sum(v for _, v in self.accepted))


def psspi_to_oos(adapter: PolicyAdapter, weights, rng: RandomSource, phase2_order=None) -> OOSResult:
    """Run a pointwise policy as an order-oblivious secretary algorithm.

    ``k ~ Binomial(n, 1/2)`` units are observed in uniformly random order and
    handed to the policy as samples; the rest get zero samples and arrive in
    ``phase2_order`` (a static order over all units, filtered to the
    unobserved ones, or a callable on the remaining units).  Observed units
    are never collected.  A decision that is infeasible or touches an
    observed unit raises :class:`ContractViolation`.
    """
    units = list(adapter.units)
    weights = dict(weights)
    gen = rng.generator
    n = len(units)
    k = int(gen.binomial(n, 0.5)) if n else 0
    perm = [units[j] for j in gen.permutation(n)] if n else []
    observed = perm[:k]
    obs = set(observed)
    samples = {u: (weights[u] if u in obs else adapter.zero_sample(u)) for u in units}
    remaining = [u for u in units if u not in obs]
    if phase2_order is None:
        order = remaining
    elif callable(phase2_order):
        order = list(phase2_order(remaining))
    else:
        order = [u for u in phase2_order if u not in obs]
    if sorted(map(str, order)) != sorted(map(str, remaining)):
        raise InputError("phase-2 order must cover exactly the unobserved units")
    unit_of = _unit_lookup(adapter)
    state = adapter.initialize(samples)
    accepted: list = []
    for u in order:
        decision = tuple(adapter.on_arrival(state, u, weights[u]))
        for rec in decision:
            if unit_of(rec[0]) in obs or unit_of(rec[0]) != u:
                raise ContractViolation(f"policy collected {rec[0]!r} outside the arriving unit {u!r}")
        accepted.extend(decision)
        if not adapter.is_feasible(accepted):
            raise ContractViolation(f"policy decision at {u!r} breaks feasibility")
    return OOSResult(tuple(accepted), frozenset(obs), k, tuple(order))


def _unit_lookup(adapter: PolicyAdapter) -> Callable:
    if isinstance(adapter, (_BuyerAdapter, TransversalAdapter)):
        owner = {e.id: e.u for e in adapter.instance.edges}
        return lambda rec_id: owner.get(rec_id)
    return lambda rec_id: rec_id


# ---------------------------------------------------------------------------
# policy registry


@dataclass(frozen=True)
class PolicySpec:
    """How to run one named policy: arrival units, a run function and its benchmark."""

    name: str
    kinds: tuple
    unit_kind: str  # "edges" or "buyers"
    run: Callable  # (instance, realization, order, rng) -> (value, records)
    opt: Callable  # (instance, realization) -> float
    adapter: type | None = None
    inner: str | None = None
    notes: str = field(default="", compare=False)

    def units(self, instance: Instance) -> tuple:
        if self.unit_kind == "buyers":
            return tuple(instance.buyers)
        return tuple(e.id for e in instance.edges)

    def check(self, instance: Instance):
        if instance.kind not in self.kinds:
            raise InputError(f"policy {self.name} does not run on {instance.kind} instances")


def _matching_records(m: Matching) -> list:
    return [(e, w) for e, _, _, w in m.edges]


def _run_single(instance, real, order, rng=None):
    ids = instance.element_ids
    hit = single_choice_sspi({x: real.s_key(x) for x in ids}, {x: real.r_key(x) for x in ids}, order)
    return (hit[1], [hit]) if hit else (0.0, [])


def _partition_for(instance, rng):
    if instance.kind == "general-graph":
        return graphic_matroid_partition(instance, None, rng.fork("partition") if rng else None)
    if instance.groups:
        return PartitionMatroid(instance.groups)
    return PartitionMatroid((instance.element_ids,))


def _run_alpha(instance, real, order, rng=None):
    part = _partition_for(instance, rng)
    ids = instance.element_ids
    out = alpha_partition_sspi(part, {x: real.s_key(x) for x in ids}, {x: real.r_key(x) for x in ids}, order)
    return float(sum(v for _, v in out)), out


def _run_edges(instance, real, order, rng=None):
    t = run_edge_arrival(instance, real, order)
    return t.M.weight, _matching_records(t.M)


def _run_bipartite(instance, real, order, rng=None):
    t = run_vertex_arrival(instance, real, order)
    return t.M.weight, _matching_records(t.M)


def _run_truthful(instance, real, order, rng=None):
    t = run_truthful(instance, real, order)
    return t.M.weight, _matching_records(t.M)


def _run_transversal(instance, real, order, rng=None):
    t = run_transversal(instance, real, order)
    return t.M.weight, _matching_records(t.M)


def _run_budget(instance, real, order, rng=None):
    t = run_budget_additive(instance, real, order)
    recs = [(b, i, k[0]) for b, bundle in t.M.bundles.items() for i, k in bundle]
    return budget_welfare(t.M, instance.budget_map), recs


def opt_max_reward(instance, real):
    return max((real.r(x) for x in instance.element_ids), default=0.0)


def opt_partition(instance, real):
    groups = instance.groups or (instance.element_ids,)
    return float(sum(max(real.r(x) for x in g) for g in groups if g))


def opt_forest(instance, real):
    return max_forest([(e.id, e.u, e.v, real.r(e.id)) for e in instance.edges if e.u != e.v]).weight


def opt_matching(instance, real):
    return optimal_matching([(e.id, e.u, e.v, real.r(e.id)) for e in instance.edges],
                            bipartite=True if instance.kind == "bipartite" else None).weight


def opt_transversal(instance, real):
    return optimal_transversal_independent_set(instance, {b: real.r(b) for b in instance.buyers}).weight


def opt_budget(instance, real):
    vals = [(e.u, e.v, real.r(e.id)) for e in instance.edges]
    return budget_welfare(optimal_budget_assignment(vals, instance.budget_map), instance.budget_map)


def _opt_alpha(instance, real):
    return opt_forest(instance, real) if instance.kind == "general-graph" else opt_partition(instance, real)


_SCALAR_KINDS = ("single-choice", "partition-matroid", "general-graph", "bipartite")

POLICIES: dict = {
    "single-choice": PolicySpec("single-choice", _SCALAR_KINDS, "edges", _run_single, opt_max_reward, SingleChoiceAdapter),
    "alpha-partition": PolicySpec("alpha-partition", ("partition-matroid", "single-choice", "general-graph"), "edges",
                                  _run_alpha, _opt_alpha, AlphaPartitionAdapter),
    "edge-matching": PolicySpec("edge-matching", ("general-graph", "bipartite"), "edges", _run_edges, opt_matching,
                                EdgeMatchingAdapter),
    "bipartite": PolicySpec("bipartite", ("bipartite",), "buyers", _run_bipartite, opt_matching, BipartiteAdapter),
    "truthful": PolicySpec("truthful", ("bipartite",), "buyers", _run_truthful, opt_matching, TruthfulAdapter),
    "transversal": PolicySpec("transversal", ("transversal",), "buyers", _run_transversal, opt_transversal,
                              TransversalAdapter),
    "budget-additive": PolicySpec("budget-additive", ("budget-additive",), "buyers", _run_budget, opt_budget,
                                  BudgetAdditiveAdapter),
}


def get_policy(name: str) -> PolicySpec:
    """Look a policy up by name; ``oos-wrapped:<inner>`` wraps a registered adapter."""
    if name in POLICIES:
        return POLICIES[name]
    if name.startswith("oos-wrapped:"):
        inner = name.split(":", 1)[1]
        base = get_policy(inner)
        if base.adapter is None:
            raise ConfigError(f"policy {inner} has no pointwise adapter")

        def run(instance, real, order, rng=None):
            adapter = base.adapter(instance, rng)
            _, weights = unit_samples(adapter, real)
            res = psspi_to_oos(adapter, weights, (rng or RandomSource(0)).fork("oos"), order)
            return res.value, list(res.accepted)

        return PolicySpec(name, base.kinds, base.unit_kind, run, base.opt, base.adapter, inner=inner)
    raise ConfigError(f"unknown policy {name!r}; known: {sorted(POLICIES)} and oos-wrapped:<inner>")


def policy_names() -> list:
    return sorted(POLICIES) + [f"oos-wrapped:{p}" for p in sorted(POLICIES)]
