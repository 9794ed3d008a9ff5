import itertools

import pytest

from sspi_lab.core import ZERO_KEY, DistributionSpec, Edge, Instance, RandomSource, draw_realization, \
    realization_from_values
from sspi_lab.errors import InputError
from sspi_lab.matching import (EdgeRunTrace, run_edge_arrival, run_edge_arrival_offline_sim, safe_edges,
                               safe_reward_sum)
from sspi_lab.oracles import Matching, greedy_matching

pm = DistributionSpec.point_mass


def graph(*triples):
    return Instance("general-graph", edges=tuple(Edge(e, u, v, pm(1.0)) for e, u, v in triples))


@pytest.fixture
def tri(triangle):
    return triangle, realization_from_values(triangle, [5.0, 3.0, 1.0], [4.0, 6.0, 2.0])


def test_triangle_walkthrough(tri):
    inst, real = tri
    tr = run_edge_arrival(inst, real, ["e1", "e2", "e3"])
    assert tr.M_S.ids == {"e1"}
    assert tr.prices["u"][0] == tr.prices["v"][0] == 5.0 and tr.prices["w"] == ZERO_KEY
    assert tr.e_prime_ids == {"e2"}
    assert tr.M.edges == (("e2", "v", "w", 6.0),)
    assert [ev["decision"] for ev in tr.events] == ["reject", "accept", "reject"]


def test_triangle_offline_twin_agrees(tri):
    inst, real = tri
    for order in itertools.permutations(["e1", "e2", "e3"]):
        on = run_edge_arrival(inst, real, order)
        off = run_edge_arrival_offline_sim(inst, real, order)
        assert on.same_sets(off)
        assert on.r_used == off.r_used and on.s_used == off.s_used


def test_single_point_mass_edge_depends_on_tie_order():
    inst = graph(("e", "u", "v"))
    reward_first = realization_from_values(inst, [(1.0, 0)], [(1.0, 1)])
    sample_first = realization_from_values(inst, [(1.0, 1)], [(1.0, 0)])
    assert run_edge_arrival(inst, reward_first, ["e"]).M.ids == {"e"}
    # the sample wins the tie, is matched on samples, and prices the reward out
    assert run_edge_arrival(inst, sample_first, ["e"]).M.ids == frozenset()


def test_reward_equal_to_price_is_admitted():
    inst = graph(("a", 1, 2), ("b", 2, 3))
    real = realization_from_values(inst, [(4.0, 0), (0.0, 1)], [(1.0, 2), (4.0, 3)])
    tr = run_edge_arrival(inst, real, ["a", "b"])
    assert "b" in tr.e_prime_ids


def test_empty_graph():
    inst = Instance("general-graph")
    tr = run_edge_arrival(inst, draw_realization(inst, RandomSource(0)), [])
    assert tr.M.weight == 0.0 and not tr.e_prime


def test_self_loop_never_collected():
    inst = graph(("a", 1, 1))
    tr = run_edge_arrival(inst, realization_from_values(inst, [0.0], [5.0]), ["a"])
    assert not tr.M.edges and not tr.e_prime


def test_bad_orders_rejected(tri):
    inst, real = tri
    for order in (["e1", "e2"], ["e1", "e1", "e2"], ["e1", "e2", "zz"]):
        with pytest.raises(InputError):
            run_edge_arrival(inst, real, order)


def test_parallel_edges():
    inst = graph(("a", 1, 2), ("b", 1, 2))
    real = realization_from_values(inst, [1.0, 2.0], [5.0, 3.0])
    tr = run_edge_arrival(inst, real, ["b", "a"])
    assert tr.M_S.ids == {"b"} and tr.e_prime_ids == {"a", "b"} and tr.M.ids == {"b"}


def test_output_is_a_matching_inside_e_prime():
    inst = Instance("general-graph", edges=tuple(
        Edge(f"e{k}", u, v, DistributionSpec.discrete([(1.0, 0.5), (3.0, 0.5)]))
        for k, (u, v) in enumerate(itertools.combinations(range(4), 2))))
    root = RandomSource(9)
    for t in range(300):
        real = draw_realization(inst, root.fork(t))
        tr = run_edge_arrival(inst, real, [e.id for e in inst.edges])
        assert tr.M.is_matching() and tr.M.ids <= tr.e_prime_ids
        assert tr.M_S == greedy_matching([(e.id, e.u, e.v, real.s_key(e.id)) for e in inst.edges])
        for eid, u, v, key in tr.e_prime:
            assert key >= max(tr.prices[u], tr.prices[v])


def _trace(*recs):
    return EdgeRunTrace(Matching(), tuple(recs), Matching(), {}, frozenset(), frozenset())


def test_lone_edge_is_safe_for_both_ends():
    tr = _trace(("e", "u", "v", (5.0, 0)))
    assert safe_edges(tr, ["u", "v"]) == {"u": "e", "v": "e"}
    assert safe_reward_sum(tr) == 10.0


def test_safety_needs_the_far_end_to_be_dominated():
    tr = _trace(("e1", "u", "v", (6.0, 0)), ("e2", "u", "w", (4.0, 1)))
    safe = safe_edges(tr, ["u", "v", "w"])
    assert safe == {"u": None, "v": None, "w": "e2"}
    assert safe_reward_sum(tr) == 4.0
