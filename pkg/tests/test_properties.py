"""Randomized invariants over small instances with adversarial ties."""

import itertools
import json
import math

from hypothesis import assume, given
from hypothesis import strategies as st

from sspi_lab.adversary import worst_order_adaptive
from sspi_lab.bipartite import (enumerate_misreports, run_transversal, run_transversal_offline_sim,
                                run_vertex_arrival, run_vertex_arrival_offline_sim, safe_edges_bipartite,
                                safe_reward_sum_bipartite)
from sspi_lab.budget import (capacity_prefix, diagnostics_budget, run_budget_additive,
                             run_budget_additive_offline_sim, safe_plus_weight)
from sspi_lab.core import DistributionSpec, Edge, Instance, RandomSource, Realization
from sspi_lab.matching import run_edge_arrival, run_edge_arrival_offline_sim, safe_edges, safe_reward_sum
from sspi_lab.oracles import (greedy_budget_assignment, greedy_matching, is_forest, optimal_budget_assignment,
                              optimal_matching)
from sspi_lab.reductions import (SingleChoiceAdapter, alpha_partition_sspi, get_policy, graphic_matroid_partition,
                                 psspi_to_oos, single_choice_sspi)

VALUES = st.sampled_from([0.0, 1.0, 2.0, 3.0, 5.0, 8.0])
PM = DistributionSpec.point_mass(1.0)


@st.composite
def realizations(draw, ids, cap=None):
    """Keys with values from a tiny set (so ties are common) and a uniformly random ranking."""
    m = len(ids)
    caps = cap or [math.inf] * m
    vals = [min(draw(VALUES), caps[k // 2]) for k in range(2 * m)]
    pri = draw(st.permutations(range(2 * m)))
    s = tuple((vals[2 * k], pri[2 * k]) for k in range(m))
    r = tuple((vals[2 * k + 1], pri[2 * k + 1]) for k in range(m))
    return Realization(tuple(ids), s, r)


@st.composite
def graphs(draw, max_vertices=5, max_edges=7):
    n = draw(st.integers(2, max_vertices))
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda t: t[0] != t[1]),
                          min_size=0, max_size=max_edges))
    inst = Instance("general-graph", edges=tuple(Edge(f"e{k}", u, v, PM) for k, (u, v) in enumerate(pairs)))
    real = draw(realizations(inst.element_ids))
    order = draw(st.permutations(inst.element_ids))
    return inst, real, list(order)


@st.composite
def bipartites(draw, kind="bipartite", max_side=3):
    nb, ni = draw(st.integers(1, max_side)), draw(st.integers(1, max_side))
    buyers = tuple(f"b{k}" for k in range(nb))
    items = tuple(f"i{k}" for k in range(ni))
    pairs = sorted(draw(st.sets(st.tuples(st.sampled_from(buyers), st.sampled_from(items)), max_size=nb * ni)))
    if kind == "transversal":
        inst = Instance("transversal", buyers=buyers, items=items, buyer_dists={b: PM for b in buyers},
                        edges=tuple(Edge(f"{b}{i}", b, i) for b, i in pairs))
        cap = None
    elif kind == "budget-additive":
        budgets = {b: float(draw(st.integers(2, 10))) for b in buyers}
        inst = Instance("budget-additive", buyers=buyers, items=items, budgets=budgets,
                        edges=tuple(Edge(f"{b}{i}", b, i, PM) for b, i in pairs))
        cap = [budgets[b] for b, _ in pairs]
    else:
        inst = Instance("bipartite", buyers=buyers, items=items, edges=tuple(Edge(f"{b}{i}", b, i, PM) for b, i in pairs))
        cap = None
    real = draw(realizations(inst.element_ids, cap))
    order = draw(st.permutations(buyers))
    return inst, real, list(order)


# ---------------------------------------------------------------------------
# coupling and feasibility


@given(graphs())
def test_edge_policy_couples_with_offline_walk(case):
    inst, real, order = case
    on = run_edge_arrival(inst, real, order)
    assert on.same_sets(run_edge_arrival_offline_sim(inst, real, order))
    assert on.M.is_matching() and on.M.ids <= on.e_prime_ids
    assert on.M_S == greedy_matching([(e.id, e.u, e.v, real.s_key(e.id)) for e in inst.edges])


@given(bipartites())
def test_vertex_policy_couples_with_offline_walk(case):
    inst, real, order = case
    on = run_vertex_arrival(inst, real, order)
    assert on.same_sets(run_vertex_arrival_offline_sim(inst, real, order))
    assert on.M.is_matching()
    assert len({rec[1] for rec in on.e_plus}) == len(on.e_plus)


@given(bipartites("transversal"))
def test_transversal_policy_couples_with_offline_walk(case):
    inst, real, order = case
    on = run_transversal(inst, real, order)
    assert on.same_sets(run_transversal_offline_sim(inst, real, order))
    assert on.M.is_matching()


@given(bipartites("budget-additive"))
def test_budget_policy_couples_with_offline_walk(case):
    inst, real, order = case
    on = run_budget_additive(inst, real, order)
    assert on.same_sets(run_budget_additive_offline_sim(inst, real, order))
    caps = inst.budget_map
    for b in inst.buyers:
        assert on.M.load(b) <= caps[b] + 1e-12
    assert on.M.pairs() <= {(b, i) for _, b, i, _ in on.e_prime}
    for _, b, i, key in on.e_prime:
        assert key > on.tau[i]
        assert key[0] + capacity_prefix(on.G_S, b, key, caps[b]) <= caps[b]


# ---------------------------------------------------------------------------
# per-trace collection inequalities


@given(graphs())
def test_matching_weight_covers_half_the_safe_rewards(case):
    inst, real, order = case
    tr = run_edge_arrival(inst, real, order)
    assert tr.M.weight >= 0.5 * safe_reward_sum(tr) - 1e-9
    # an edge safe for both endpoints has no competitor at either end
    safe = safe_edges(tr)
    for eid, u, v, _ in tr.e_prime:
        if safe.get(u) == eid and safe.get(v) == eid:
            assert eid in tr.M.ids


@given(bipartites())
def test_bipartite_weight_covers_the_safe_rewards(case):
    inst, real, order = case
    tr = run_vertex_arrival(inst, real, order)
    assert tr.M.weight >= safe_reward_sum_bipartite(tr) - 1e-9
    by_item: dict = {}
    for rec in tr.e_plus:
        by_item.setdefault(rec[2], []).append(rec)
    for b, eid in safe_edges_bipartite(tr).items():
        if eid is not None and len(by_item[tr.e_b()[b][2]]) == 1:
            assert eid in tr.M.ids


@given(bipartites("budget-additive"))
def test_budget_weight_covers_safe_plus_mass(case):
    inst, real, order = case
    tr = run_budget_additive(inst, real, order)
    e_plus, _ = diagnostics_budget(tr)
    assert tr.M.weight >= safe_plus_weight(tr) - 1e-9
    for b, recs in e_plus.items():
        assert sum(r[3][0] for r in recs) <= inst.budget_map[b] + 1e-9


# ---------------------------------------------------------------------------
# offline baselines


@given(graphs(max_vertices=6, max_edges=9))
def test_greedy_matching_is_half_optimal(case):
    inst, real, _ = case
    recs = [(e.id, e.u, e.v, real.r(e.id)) for e in inst.edges]
    g, opt = greedy_matching(recs), optimal_matching(recs)
    assert g.is_matching() and opt.is_matching()
    assert 2 * g.weight >= opt.weight - 1e-9 and g.weight <= opt.weight + 1e-9


@given(bipartites("budget-additive"))
def test_greedy_budget_is_third_optimal(case):
    inst, real, _ = case
    vals = [(e.u, e.v, real.r(e.id)) for e in inst.edges]
    caps = inst.budget_map
    g = greedy_budget_assignment(vals, caps)
    opt = optimal_budget_assignment(vals, caps)
    best = sum(min(opt.load(b), caps[b]) for b in opt.bundles)
    assert 3 * g.weight >= best - 1e-9


# ---------------------------------------------------------------------------
# symmetry, serialization, reductions


@given(graphs(), st.data())
def test_coin_flip_is_an_involution(case, data):
    inst, real, _ = case
    assume(len(real))
    eid = data.draw(st.sampled_from(inst.element_ids))
    flipped = real.with_coin_flipped(eid)
    assert flipped.with_coin_flipped(eid) == real
    assert [d[:2] for d in flipped.ordered_draws()] == [d[:2] for d in real.ordered_draws()]


@given(graphs())
def test_realization_json_round_trip(case):
    _, real, _ = case
    assert Realization.from_json(json.loads(json.dumps(real.to_json()))) == real


@given(st.lists(st.tuples(VALUES, VALUES), min_size=1, max_size=6), st.data())
def test_single_choice_takes_at_most_one_above_every_sample(pairs, data):
    ids = [f"x{k}" for k in range(len(pairs))]
    pri = data.draw(st.permutations(range(2 * len(pairs))))
    s = {x: (pairs[k][0], pri[2 * k]) for k, x in enumerate(ids)}
    r = {x: (pairs[k][1], pri[2 * k + 1]) for k, x in enumerate(ids)}
    order = data.draw(st.permutations(ids))
    hit = single_choice_sspi(s, r, order)
    if hit is not None:
        assert r[hit[0]] > max(s.values())
        assert all(not r[x] > max(s.values()) for x in order[:order.index(hit[0])])


@given(graphs(max_vertices=6, max_edges=9), st.integers(0, 10_000))
def test_graphic_partition_outputs_forests(case, seed):
    inst, real, order = case
    part = graphic_matroid_partition(inst, rng=RandomSource(seed))
    out = alpha_partition_sspi(part, {x: real.s_key(x) for x in inst.element_ids},
                               {x: real.r_key(x) for x in inst.element_ids}, order)
    edges = {e.id: e for e in inst.edges}
    assert is_forest([(x, edges[x].u, edges[x].v) for x, _ in out])
    for pick in itertools.islice(itertools.product(*part.groups), 200):
        assert is_forest([(x, edges[x].u, edges[x].v) for x in pick])


@given(graphs(), st.integers(0, 10_000))
def test_partition_does_not_depend_on_rewards(case, seed):
    inst, real, _ = case
    a = graphic_matroid_partition(inst, {x: real.s_key(x) for x in inst.element_ids}, RandomSource(seed))
    b = graphic_matroid_partition(inst, {x: real.r_key(x) for x in inst.element_ids}, RandomSource(seed))
    assert a == b


@given(st.lists(VALUES, min_size=1, max_size=7), st.integers(0, 10_000))
def test_oos_never_collects_observed_units(values, seed):
    inst = Instance("single-choice", edges=tuple(Edge(f"e{k}", f"x{k}", None, PM) for k in range(len(values))))
    weights = {f"e{k}": (v, k) for k, v in enumerate(values)}
    res = psspi_to_oos(SingleChoiceAdapter(inst), weights, RandomSource(seed))
    assert len(res.observed) == res.k
    assert not {e for e, _ in res.accepted} & res.observed
    assert len(res.accepted) <= 1


# ---------------------------------------------------------------------------
# adversary and truthfulness


@given(bipartites(max_side=3))
def test_adaptive_never_beats_the_best_static_order_from_below(case):
    inst, real, _ = case
    pol = get_policy("bipartite")
    static = min(pol.run(inst, real, list(p))[0] for p in itertools.permutations(inst.buyers))
    assert worst_order_adaptive(inst, real, pol).value <= static + 1e-9


@given(bipartites(max_side=2))
def test_no_buyer_gains_by_misreporting(case):
    inst, real, order = case
    for b in inst.buyers:
        res = enumerate_misreports(inst, real, b, buyer_order=order)
        assert res["max_violation"] <= 1e-9
