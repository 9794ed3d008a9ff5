import itertools
import math

import numpy as np
import pytest

from sspi_lab.core import DistributionSpec, Edge, Instance, RandomSource, draw_realization, enumerate_realizations
from sspi_lab.errors import ConfigError, ContractViolation, InputError
from sspi_lab.oracles import is_forest, max_forest
from sspi_lab.reductions import (ADAPTERS, PartitionMatroid, SingleChoiceAdapter, alpha_partition_sspi, get_policy,
                                 graphic_matroid_partition, policy_names, psspi_to_oos, single_choice_sspi,
                                 unit_samples)

disc = DistributionSpec.discrete


def line(n, dist=None):
    dist = dist or DistributionSpec.uniform(0.0, 1.0)
    return Instance("single-choice", edges=tuple(Edge(f"e{k}", f"x{k}", None, dist) for k in range(n)))


def random_graph(seed, n=5, p=0.6):
    gen = np.random.default_rng(seed)
    edges = [Edge(f"e{k}", u, v, DistributionSpec.uniform(0, 1))
             for k, (u, v) in enumerate((u, v) for u, v in itertools.combinations(range(n), 2) if gen.random() < p)]
    return Instance("general-graph", edges=tuple(edges))


class TestSingleChoice:
    def test_first_reward_above_largest_sample(self):
        assert single_choice_sspi({"e1": 3, "e2": 5}, {"e1": 6, "e2": 2}, ["e1", "e2"]) == ("e1", 6.0)

    def test_nothing_above_threshold(self):
        assert single_choice_sspi({"e1": 3, "e2": 5}, {"e1": 4, "e2": 2}, ["e2", "e1"]) is None
        assert single_choice_sspi({}, {}, []) is None

    def test_threshold_is_strict(self):
        assert single_choice_sspi({"a": (5.0, 2)}, {"a": (5.0, 1)}, ["a"]) is None
        assert single_choice_sspi({"a": (5.0, 1)}, {"a": (5.0, 2)}, ["a"]) == ("a", 5.0)

    def test_half_of_prophet_exactly_on_three_elements(self):
        inst = line(3, disc([(1.0, 0.5), (4.0, 0.3), (9.0, 0.2)]))
        pats = enumerate_realizations(inst)
        ids = inst.element_ids
        opt = math.fsum(w * max(r.r(x) for x in ids) for r, w in pats)
        for order in itertools.permutations(ids):
            alg = math.fsum(w * (single_choice_sspi({x: r.s_key(x) for x in ids}, {x: r.r_key(x) for x in ids},
                                                    order) or (None, 0.0))[1] for r, w in pats)
            assert 2 * alg >= opt - 1e-12


class TestPartition:
    def test_two_groups(self):
        part = PartitionMatroid((("e1", "e2"), ("e3",)))
        out = alpha_partition_sspi(part, {"e1": 1, "e2": 4, "e3": 2}, {"e1": 5, "e2": 3, "e3": 6}, ["e3", "e1", "e2"])
        assert out == [("e3", 6.0), ("e1", 5.0)]

    def test_overlapping_groups(self):
        with pytest.raises(InputError):
            PartitionMatroid((("a", "b"), ("b", "c")))

    def test_element_outside_ground_set_is_ignored(self):
        out = alpha_partition_sspi([("a",)], {"a": 1, "z": 0}, {"a": 0.5, "z": 9}, ["z", "a"])
        assert out == []

    def test_independence(self):
        part = PartitionMatroid((("a", "b"), ("c",)))
        assert part.is_independent(["a", "c"]) and not part.is_independent(["a", "b"])
        assert not part.is_independent(["q"])


class TestGraphicPartition:
    def test_single_edge(self):
        inst = Instance("general-graph", edges=(Edge("e", 1, 2, DistributionSpec.point_mass(1)),))
        assert graphic_matroid_partition(inst, rng=RandomSource(0)).groups == (("e",),)

    def test_self_loops_dropped(self):
        inst = Instance("general-graph", edges=(Edge("a", 1, 1, DistributionSpec.point_mass(1)),
                                                Edge("b", 1, 2, DistributionSpec.point_mass(1))))
        assert graphic_matroid_partition(inst, rng=RandomSource(3)).ground == {"b"}

    @pytest.mark.parametrize("seed", range(12))
    def test_every_transversal_of_groups_is_a_forest(self, seed):
        inst = random_graph(seed)
        edges = {e.id: e for e in inst.edges}
        part = graphic_matroid_partition(inst, rng=RandomSource(seed))
        assert part.ground == set(edges)
        for pick in itertools.product(*part.groups):
            assert is_forest([(x, edges[x].u, edges[x].v) for x in pick])

    def test_partition_ignores_weights(self):
        inst = random_graph(1, n=6)
        rng = RandomSource(8)
        a = graphic_matroid_partition(inst, {e.id: 1.0 for e in inst.edges}, rng.fork("p"))
        b = graphic_matroid_partition(inst, {e.id: 7.0 for e in inst.edges}, rng.fork("p"))
        assert a == b

    def test_partition_optimum_is_half_the_max_forest(self):
        inst = random_graph(5, n=6, p=0.7)
        root = RandomSource(2)
        diffs = []
        for t in range(4000):
            real = draw_realization(inst, root.fork(t))
            part = graphic_matroid_partition(inst, rng=root.fork(("p", t)))
            per_group = sum(max(real.r(x) for x in g) for g in part.groups)
            forest = max_forest([(e.id, e.u, e.v, real.r(e.id)) for e in inst.edges]).weight
            diffs.append(per_group - 0.5 * forest)
        d = np.array(diffs)
        assert d.mean() + 2.576 * d.std(ddof=1) / math.sqrt(len(d)) >= 0


class TestOOS:
    def _k(self, n, want):
        for seed in range(200):
            probe = psspi_to_oos(SingleChoiceAdapter(line(n)), {f"e{k}": (1.0, k) for k in range(n)},
                                 RandomSource(seed))
            if probe.k == want:
                return seed
        raise AssertionError("no seed found")

    def test_unobserved_single_unit_is_taken(self):
        seed = self._k(1, 0)
        res = psspi_to_oos(SingleChoiceAdapter(line(1)), {"e0": (0.4, 0)}, RandomSource(seed))
        assert res.accepted == (("e0", 0.4),) and not res.observed

    def test_observed_single_unit_is_never_taken(self):
        seed = self._k(1, 1)
        res = psspi_to_oos(SingleChoiceAdapter(line(1)), {"e0": (0.4, 0)}, RandomSource(seed))
        assert res.accepted == () and res.observed == {"e0"}

    def test_phase_one_units_never_collected(self):
        inst = line(6)
        weights = {f"e{k}": (float(k), k) for k in range(6)}
        for seed in range(300):
            res = psspi_to_oos(SingleChoiceAdapter(inst), weights, RandomSource(seed))
            assert not {e for e, _ in res.accepted} & res.observed

    def test_static_phase_two_order_is_filtered(self):
        inst = line(4)
        weights = {f"e{k}": (float(k), k) for k in range(4)}
        res = psspi_to_oos(SingleChoiceAdapter(inst), weights, RandomSource(5), ["e3", "e2", "e1", "e0"])
        assert list(res.phase2_order) == [u for u in ["e3", "e2", "e1", "e0"] if u not in res.observed]

    def test_contract_violations(self):
        class Greedy(SingleChoiceAdapter):
            def on_arrival(self, state, unit, reward):
                return ((unit, reward[0]),)

        class Thief(SingleChoiceAdapter):
            def on_arrival(self, state, unit, reward):
                return (("e0", 1.0),) if unit != "e0" else ()

        weights = {f"e{k}": (1.0, k) for k in range(4)}
        seed = next(s for s in range(200) if psspi_to_oos(SingleChoiceAdapter(line(4)), weights,
                                                         RandomSource(s)).k == 0)
        with pytest.raises(ContractViolation):
            psspi_to_oos(Greedy(line(4)), weights, RandomSource(seed))
        with pytest.raises(ContractViolation):
            psspi_to_oos(Thief(line(4)), weights, RandomSource(seed))


class TestRegistry:
    def test_names(self):
        names = policy_names()
        assert "edge-matching" in names and "oos-wrapped:single-choice" in names
        with pytest.raises(ConfigError):
            get_policy("nope")

    def test_wrong_kind(self, triangle):
        with pytest.raises(InputError):
            get_policy("budget-additive").check(triangle)

    @pytest.mark.parametrize("name", sorted(set(ADAPTERS) - {"alpha-partition"}))
    def test_adapter_matches_policy_run(self, name):
        from sspi_lab.harness import generate_instance

        family = {"single-choice": "single-choice", "edge-matching": "random-graph", "bipartite": "bipartite",
                  "truthful": "bipartite", "transversal": "transversal", "budget-additive": "budget-additive"}[name]
        pol = get_policy(name)
        root = RandomSource(17)
        for t in range(40):
            inst = generate_instance(family, root.fork(("i", t)), n=4, p=0.8, buyers=3, items=3)
            real = draw_realization(inst, root.fork(("r", t)))
            units = list(pol.units(inst))
            order = [units[k] for k in root.fork(("o", t)).generator.permutation(len(units))]
            adapter = ADAPTERS[name](inst)
            s, r = unit_samples(adapter, real)
            got = adapter.run(s, r, order)
            assert adapter.is_feasible(got)
            assert math.isclose(sum(v for _, v in got), pol.run(inst, real, order)[0], abs_tol=1e-9)
