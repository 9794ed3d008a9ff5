import itertools
import math

import pytest

from sspi_lab.adversary import STATIC_CAP, ensemble_value, fixed_orders, worst_order_adaptive, \
    worst_order_exhaustive
from sspi_lab.core import DistributionSpec, Edge, Instance, RandomSource, draw_realization, enumerate_realizations, \
    realization_from_values
from sspi_lab.errors import SizeError
from sspi_lab.harness import generate_instance
from sspi_lab.reductions import get_policy

pm = DistributionSpec.point_mass


def test_reward_sorted_orders(triangle):
    real = realization_from_values(triangle, [5.0, 3.0, 1.0], [4.0, 6.0, 2.0])
    orders = fixed_orders(triangle, real)
    assert orders["ascending-reward"] == ("e3", "e1", "e2")
    assert orders["descending-reward"] == ("e2", "e1", "e3")
    assert orders["reverse"] == ("e3", "e2", "e1")
    assert sorted(orders["random"]) == ["e1", "e2", "e3"]


def test_orders_without_realization_and_empty_instance(triangle):
    assert set(fixed_orders(triangle)) == {"identity", "reverse", "random"}
    empty = Instance("general-graph")
    assert all(o == () for o in fixed_orders(empty, draw_realization(empty, RandomSource(0))).values())


def test_ties_resolve_to_the_lexicographically_first_order():
    inst = Instance("single-choice", edges=tuple(Edge(f"e{k}", f"x{k}", None, pm(1.0)) for k in range(3)))
    res = worst_order_exhaustive(inst, [(draw_realization(inst, RandomSource(0)), 1.0)], get_policy("single-choice"))
    assert res.searched == 6 and res.kind == "exhaustive"
    values = [ensemble_value(inst, [(draw_realization(inst, RandomSource(0)), 1.0)], get_policy("single-choice"), p)
              for p in itertools.permutations(inst.element_ids)]
    first = min(range(6), key=lambda j: (values[j], j))
    assert res.order == list(itertools.permutations(inst.element_ids))[first]


def test_single_unit_has_one_order():
    inst = Instance("general-graph", edges=(Edge("e", 1, 2, pm(2.0)),))
    res = worst_order_exhaustive(inst, enumerate_realizations(inst), get_policy("edge-matching"))
    assert res.order == ("e",) and res.searched == 1 and res.value == pytest.approx(1.0)


def test_exhaustive_minimum_matches_resimulation(triangle):
    pol = get_policy("edge-matching")
    ens = enumerate_realizations(triangle)
    res = worst_order_exhaustive(triangle, ens, pol)
    sims = {p: math.fsum(w * pol.run(triangle, r, list(p))[0] for r, w in ens)
            for p in itertools.permutations(["e1", "e2", "e3"])}
    assert res.value == pytest.approx(min(sims.values()), abs=1e-12)
    assert sims[res.order] == pytest.approx(res.value, abs=1e-12)


def test_cap():
    inst = Instance("single-choice", edges=tuple(Edge(f"e{k}", f"x{k}", None, pm(1.0))
                                                  for k in range(STATIC_CAP + 1)))
    with pytest.raises(SizeError):
        worst_order_exhaustive(inst, [], get_policy("single-choice"))


@pytest.mark.parametrize("policy,family", [("edge-matching", "random-graph"), ("bipartite", "bipartite"),
                                           ("budget-additive", "budget-additive"), ("transversal", "transversal"),
                                           ("single-choice", "single-choice")])
def test_adaptive_is_at_most_static_is_at_most_fixed(policy, family):
    pol = get_policy(policy)
    root = RandomSource(23)
    for t in range(15):
        inst = generate_instance(family, root.fork(("i", t)), n=4, p=0.7, buyers=3, items=2)
        real = draw_realization(inst, root.fork(("r", t)))
        units = pol.units(inst)
        static = min(pol.run(inst, real, list(p))[0] for p in itertools.permutations(units))
        adaptive = worst_order_adaptive(inst, real, pol)
        assert adaptive.value <= static + 1e-9
        # with the realization fixed, the adaptive game is a search over orders
        assert adaptive.value == pytest.approx(static, abs=1e-9)
        assert pol.run(inst, real, list(adaptive.order))[0] == pytest.approx(adaptive.value, abs=1e-9)
        for order in fixed_orders(inst, real, policy=pol).values():
            assert static <= pol.run(inst, real, list(order))[0] + 1e-9


def test_adaptive_on_wrapped_policy_falls_back_to_orders():
    inst = generate_instance("single-choice", RandomSource(1), n=3)
    real = draw_realization(inst, RandomSource(2))
    tr = worst_order_adaptive(inst, real, get_policy("oos-wrapped:single-choice"), RandomSource(3))
    assert tr.nodes == 6 and sorted(tr.order) == sorted(inst.element_ids)
