"""Experiment driver: competitive-ratio estimation (Monte Carlo and exact),
instance generators and the lemma-level property suites."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import batch as B
from .adversary import STATIC_CAP, FIXED_ORDER_NAMES, fixed_orders, worst_order_adaptive
from .bipartite import (enumerate_misreports, run_transversal, run_transversal_offline_sim, run_vertex_arrival,
                        run_vertex_arrival_offline_sim)
from .budget import run_budget_additive, run_budget_additive_offline_sim
from .core import (DistributionSpec, Edge, Instance, RandomSource, draw_realization, load_instance,
                   realization_from_values, save_instance)
from .errors import ConfigError, SizeError, UnsupportedModeError
from .matching import run_edge_arrival, run_edge_arrival_offline_sim
from .oracles import (greedy_budget_assignment, greedy_matching, optimal_budget_assignment, optimal_matching)
from .reductions import ADAPTERS, OOSResult, get_policy, psspi_to_oos, unit_samples

Z99 = 2.576
CHUNK = 25_000
CSV_COLUMNS = ("policy", "instance", "adversary", "trials", "e_alg", "e_opt", "ratio", "ci", "worst_order", "seed")

DEFAULT_BOUNDS = {
    "edge-matching": 16.0,
    "bipartite": 8.0,
    "truthful": 16.0,
    "transversal": 8.0,
    "budget-additive": 24.0,
    "single-choice": 2.0,
    "alpha-partition": 4.0,
    "oos-wrapped:single-choice": 4.0,
}


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SSPI_LAB_THREADS", "") or os.cpu_count() or 1))
    except ValueError:
        return 1


@dataclass
class ExperimentConfig:
    """What to run and how.

    ``instance`` is an :class:`Instance` or a path to an instance file.
    ``adversary`` is ``exhaustive``, ``adaptive``, ``random`` or
    ``fixed:<name>``; ``mode`` is ``monte-carlo`` or ``exact``.
    """

    policy: str
    instance: object
    trials: int = 100_000
    seed: int = 0
    adversary: str = "exhaustive"
    mode: str = "monte-carlo"
    bound: float | None = None
    out: str | None = None
    trace: str | None = None
    z: float = Z99
    enumeration_cap: int = 2_000_000
    name: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.mode not in ("monte-carlo", "exact"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        ok = self.adversary in ("exhaustive", "adaptive", "random") or (
            self.adversary.startswith("fixed:") and self.adversary[6:] in FIXED_ORDER_NAMES)
        if not ok:
            raise ConfigError(f"unknown adversary {self.adversary!r}")

    def load(self) -> Instance:
        if isinstance(self.instance, Instance):
            return self.instance
        if isinstance(self.instance, dict):
            return generate_instances({**self.instance, "count": 1})[0]
        if isinstance(self.instance, str) and not os.path.exists(self.instance) and ":" in self.instance:
            return generate_instances({**parse_generator_spec(self.instance), "count": 1})[0]
        return load_instance(self.instance)

    @property
    def instance_name(self) -> str:
        if self.name:
            return self.name
        if isinstance(self.instance, (str, os.PathLike)):
            return os.path.basename(str(self.instance))
        return "inline"


@dataclass
class CompetitiveReport:
    """Aggregated outcome of one experiment; ``ratio`` is ``E[OPT]/E[ALG]`` or None when ``E[ALG] = 0``."""

    policy: str
    instance: str
    adversary: str
    mode: str
    trials: int
    seed: int
    e_alg: float
    e_opt: float
    ratio: float | None
    ci_alg: float
    ci_opt: float
    worst_order: tuple
    order_kind: str
    degenerate: bool = False
    bound: float | None = None
    bound_margin: float | None = None
    bound_ok: bool | None = None
    orders_searched: int = 0
    wall_clock: float = field(default=0.0, compare=False)
    properties: dict = field(default_factory=dict)

    @property
    def ci(self) -> float:
        return self.ci_alg

    def csv_row(self) -> dict:
        return {
            "policy": self.policy, "instance": self.instance, "adversary": self.adversary, "trials": self.trials,
            "e_alg": repr(self.e_alg), "e_opt": repr(self.e_opt),
            "ratio": "" if self.ratio is None else repr(self.ratio), "ci": repr(self.ci_alg),
            "worst_order": " ".join(map(str, self.worst_order)), "seed": self.seed,
        }

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["worst_order"] = list(self.worst_order)
        doc.pop("wall_clock")
        return doc


def write_csv(reports, path_or_buffer) -> None:
    own = isinstance(path_or_buffer, (str, os.PathLike))
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerow(r.csv_row())
    finally:
        if own:
            fh.close()


def csv_text(reports) -> str:
    buf = io.StringIO()
    write_csv(reports, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# estimation


def _chunks(n: int):
    starts = list(range(0, n, CHUNK))
    return [(c, s, min(CHUNK, n - s)) for c, s in enumerate(starts)]


def _map(fn, items):
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _stats(values, weight, exact, z):
    mean = math.fsum(np.asarray(weight) * np.asarray(values))
    if exact or len(values) < 2:
        return mean, 0.0
    sd = float(np.std(values, ddof=1))
    return mean, z * sd / math.sqrt(len(values))


def _orders_for(units, adversary, rng, cap=STATIC_CAP):
    m = len(units)
    if adversary == "exhaustive":
        if m > cap:
            return None
        return np.array(list(itertools.permutations(range(m))), dtype=np.int64).reshape(-1, m)
    if adversary in ("random", "fixed:random"):
        return rng.fork("random-order").generator.permutation(m).reshape(1, m).astype(np.int64)
    if adversary == "fixed:identity":
        return np.arange(m, dtype=np.int64).reshape(1, m)
    if adversary == "fixed:reverse":
        return np.arange(m, dtype=np.int64)[::-1].reshape(1, m).copy()
    return None


def _evaluations(config: ExperimentConfig, inst: Instance, rng: RandomSource):
    policy = config.policy
    if config.mode == "exact":
        if not inst.enumerable:
            raise UnsupportedModeError("exact mode needs discrete finite supports")
        batch = B.enumerate_batch(inst, config.enumeration_cap)
        return [B.evaluate(policy, batch, rng.fork("policy"))], [batch]
    chunks = _chunks(config.trials)

    def build(chunk):
        c, _, size = chunk
        batch = B.draw_batch(inst, rng.fork(("draws", c)), size)
        batch.weight = np.full(size, 1.0 / config.trials)
        return B.evaluate(policy, batch, rng.fork(("policy", c))), batch

    built = _map(build, chunks)
    return [e for e, _ in built], [b for _, b in built]


def estimate_ratio(config: ExperimentConfig) -> CompetitiveReport:
    """Estimate ``E[ALG]`` and ``E[OPT]`` under the configured adversary.

    With the exhaustive adversary the static order minimizing the mean over
    the drawn (or enumerated) realizations is used; the lexicographically
    first order wins ties.  Bound checks use the paired difference
    ``bound * ALG - OPT`` and pass when its lower confidence limit is
    nonnegative.
    """
    t0 = time.perf_counter()
    inst = config.load()
    pol = get_policy(config.policy)
    pol.check(inst)
    rng = RandomSource(config.seed)
    units = pol.units(inst)
    exact = config.mode == "exact"
    bound = config.bound if config.bound is not None else DEFAULT_BOUNDS.get(config.policy)
    if config.policy in B.BATCH_POLICIES and config.adversary in ("exhaustive", "random") or (
            config.policy in B.BATCH_POLICIES and config.adversary in ("fixed:identity", "fixed:reverse", "fixed:random")):
        orders = _orders_for(units, config.adversary, rng)
        kind = "exhaustive" if config.adversary == "exhaustive" else "fixed"
        if orders is None:
            # beyond the permutation cap the named heuristics stand in for the search
            orders = np.array([np.arange(len(units)), np.arange(len(units))[::-1]], dtype=np.int64)
            kind = "heuristic"
        evals, _ = _evaluations(config, inst, rng)
        per_chunk = _map(lambda ev: ev.totals(orders), evals)
        totals = np.array([math.fsum(col) for col in zip(*per_chunk)]) if per_chunk else np.zeros(len(orders))
        j = int(min(range(len(orders)), key=lambda k: (totals[k], k)))
        order = orders[j]
        alg = np.concatenate([ev.per_trial(order) for ev in evals])
        opt = np.concatenate([ev.opt for ev in evals])
        weight = np.concatenate([ev.weight for ev in evals])
        worst = tuple(units[k] for k in order)
        searched = len(orders)
    else:
        alg, opt, weight, worst, kind, searched = _slow_path(config, inst, pol, rng, units)
    e_alg, ci_alg = _stats(alg, weight, exact, config.z)
    e_opt, ci_opt = _stats(opt, weight, exact, config.z)
    degenerate = e_alg == 0.0
    ratio = None if degenerate else e_opt / e_alg
    margin = ok = None
    if bound is not None:
        d = bound * np.asarray(alg) - np.asarray(opt)
        mean_d, hw = _stats(d, weight, exact, config.z)
        margin = mean_d - hw
        ok = bool(margin >= 0.0)
    return CompetitiveReport(
        policy=config.policy, instance=config.instance_name, adversary=config.adversary, mode=config.mode,
        trials=len(alg) if exact else config.trials, seed=config.seed, e_alg=e_alg, e_opt=e_opt, ratio=ratio,
        ci_alg=ci_alg, ci_opt=ci_opt, worst_order=worst, order_kind=kind, degenerate=degenerate, bound=bound,
        bound_margin=margin, bound_ok=ok, orders_searched=searched, wall_clock=time.perf_counter() - t0)


def _slow_path(config, inst, pol, rng, units):
    """Realization-by-realization evaluation for adversaries or policies without a vectorized form."""
    exact = config.mode == "exact"
    if exact:
        b = B.enumerate_batch(inst, config.enumeration_cap)
    else:
        b = B.draw_batch(inst, rng.fork(("draws", 0)), config.trials)
    reals = [b.realization(t) for t in range(len(b))]
    weight = b.weight
    prng = rng.fork("policy")
    opt = np.array([pol.opt(inst, r) for r in reals])
    adv = config.adversary
    if adv == "exhaustive":
        if len(units) > STATIC_CAP:
            raise SizeError(f"{len(units)} units exceed the permutation cap", instance=inst)
        perms = list(itertools.permutations(units))
        vals = np.array([[pol.run(inst, r, list(p), prng.fork(t))[0] for p in perms]
                         for t, r in enumerate(reals)])
        totals = [math.fsum(weight * vals[:, k]) for k in range(len(perms))]
        j = min(range(len(perms)), key=lambda k: (totals[k], k))
        return vals[:, j], opt, weight, tuple(perms[j]), "exhaustive", len(perms)
    if adv == "adaptive":
        alg = np.array([worst_order_adaptive(inst, r, pol, prng.fork(t)).value for t, r in enumerate(reals)])
        return alg, opt, weight, ("adaptive",), "adaptive", 0
    name = adv.split(":", 1)[1] if adv.startswith("fixed:") else "random"
    alg = []
    for t, r in enumerate(reals):
        order = fixed_orders(inst, r, rng, pol)[name]
        alg.append(pol.run(inst, r, list(order), prng.fork(t))[0])
    return np.array(alg), opt, weight, (name,), "fixed", 1


def exact_ratio(config: ExperimentConfig) -> CompetitiveReport:
    """Exact expectations over every realization pattern, worst static order."""
    cfg = ExperimentConfig(**{**asdict_shallow(config), "mode": "exact", "adversary": "exhaustive"})
    return estimate_ratio(cfg)


def asdict_shallow(cfg) -> dict:
    return {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}


# ---------------------------------------------------------------------------
# instance generation

GENERATOR_FAMILIES = ("random-graph", "bipartite", "transversal", "budget-additive", "single-choice")
DIST_FAMILIES = ("two-point", "shared", "uniform", "exponential", "point-mass")


class _ValuePool:
    """Draws element-distinct support values so enumeration never ties across elements."""

    def __init__(self, gen):
        self.gen = gen
        self.used: set = set()

    def fresh(self, lo, hi) -> float:
        while True:
            v = round(float(self.gen.uniform(lo, hi)), 4)
            if v not in self.used:
                self.used.add(v)
                return v


def make_distribution(family: str, gen, pool: _ValuePool, scale: float = 10.0) -> DistributionSpec:
    if family == "two-point":
        lo = pool.fresh(0.0, 0.3 * scale)
        hi = pool.fresh(0.3 * scale, scale)
        q = round(float(gen.uniform(0.3, 0.95)), 3)
        return DistributionSpec.discrete([(lo, q), (hi, 1.0 - q)])
    if family == "shared":
        return DistributionSpec.discrete([(1.0, 0.5), (2.0, 0.5)])
    if family == "uniform":
        return DistributionSpec.uniform(0.0, round(float(gen.uniform(0.2, 1.0)) * scale, 4))
    if family == "exponential":
        return DistributionSpec.exponential(round(float(gen.uniform(0.5, 3.0)) / scale, 4))
    if family == "point-mass":
        return DistributionSpec.point_mass(pool.fresh(0.0, scale))
    raise ConfigError(f"unknown distribution family {family!r}")


def generate_instance(family: str, rng: RandomSource, dist: str = "two-point", n: int = 4, p: float = 1.0,
                      buyers: int = 2, items: int = 2, budget_range=(5.0, 15.0), scale: float = 10.0) -> Instance:
    """One random instance; deterministic given ``rng``."""
    gen = rng.generator
    pool = _ValuePool(gen)
    if family == "random-graph":
        verts = tuple(f"v{k}" for k in range(n))
        edges = []
        for a, b in itertools.combinations(range(n), 2):
            if p >= 1.0 or gen.random() < p:
                edges.append(Edge(f"e{len(edges)}", verts[a], verts[b], make_distribution(dist, gen, pool, scale)))
        return Instance("general-graph", edges=tuple(edges), vertices=verts)
    if family in ("bipartite", "transversal", "budget-additive"):
        bs = tuple(f"b{k}" for k in range(buyers))
        its = tuple(f"i{k}" for k in range(items))
        pairs = [(b, i) for b in bs for i in its if p >= 1.0 or gen.random() < p]
        if family == "transversal":
            edges = tuple(Edge(f"e{k}", b, i) for k, (b, i) in enumerate(pairs))
            bd = {b: make_distribution(dist, gen, pool, scale) for b in bs}
            return Instance("transversal", edges=edges, buyers=bs, items=its, buyer_dists=tuple(bd.items()))
        edges = tuple(Edge(f"e{k}", b, i, make_distribution(dist, gen, pool, scale)) for k, (b, i) in enumerate(pairs))
        if family == "bipartite":
            return Instance("bipartite", edges=edges, buyers=bs, items=its)
        lo, hi = budget_range
        budgets = {b: round(float(gen.uniform(lo, hi)), 3) for b in bs}
        return Instance("budget-additive", edges=edges, buyers=bs, items=its, budgets=tuple(budgets.items()))
    if family == "single-choice":
        edges = tuple(Edge(f"e{k}", f"x{k}", None, make_distribution(dist, gen, pool, scale)) for k in range(n))
        return Instance("single-choice", edges=edges)
    raise ConfigError(f"unknown instance family {family!r}; expected one of {GENERATOR_FAMILIES}")


def parse_generator_spec(text: str) -> dict:
    """``"bipartite:buyers=2,items=2,p=1.0,seed=3"`` to a generator spec dict."""
    family, _, rest = text.partition(":")
    spec: dict = {"family": family.strip()}
    for part in filter(None, (x.strip() for x in rest.split(","))):
        key, eq, raw = part.partition("=")
        if not eq:
            raise ConfigError(f"bad generator field {part!r}; expected key=value")
        key = key.strip().replace("-", "_")
        if key == "budget_range":
            lo, hi = raw.split("..")
            spec[key] = (float(lo), float(hi))
            continue
        try:
            spec[key] = int(raw)
        except ValueError:
            try:
                spec[key] = float(raw)
            except ValueError:
                spec[key] = raw
    return spec


def generate_instances(spec: dict, out_dir: str | None = None) -> list:
    """Instances from ``{family, count, seed, dist, ...sizes}``; writes JSON files when ``out_dir`` is set."""
    spec = dict(spec)
    family = spec.pop("family", None)
    if family not in GENERATOR_FAMILIES:
        raise ConfigError(f"unknown instance family {family!r}; expected one of {GENERATOR_FAMILIES}")
    count = int(spec.pop("count", 1))
    seed = int(spec.pop("seed", 0))
    root = RandomSource(seed).fork(("gen", family))
    out = [generate_instance(family, root.fork(k), **spec) for k in range(count)]
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for k, inst in enumerate(out):
            save_instance(inst, os.path.join(out_dir, f"{family}-{k:03d}.json"))
    return out


# ---------------------------------------------------------------------------
# property suites


@dataclass
class PropertyResult:
    name: str
    passed: bool
    statistic: float | None = None
    detail: str = ""


@dataclass
class SuiteResult:
    suite: str
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list:
        return [f"{'PASS' if r.passed else 'FAIL'} {self.suite}/{r.name}: {r.detail}" for r in self.results]


SUITES = ("coupling", "safe-probability", "collection", "greedy-quality", "truthfulness", "reduction")


def coupling_mismatches(family: str, seeds: int, seed: int = 0) -> tuple:
    """Run the online policy and its offline twin on ``seeds`` random instances; return (mismatches, checked)."""
    root = RandomSource(seed).fork(("coupling", family))
    bad = 0
    for k in range(seeds):
        rng = root.fork(k)
        gen = rng.generator
        if family == "general":
            inst = generate_instance("random-graph", rng.fork("inst"), n=int(gen.integers(2, 9)),
                                     p=float(gen.uniform(0.3, 1.0)), dist=_coupling_dist(gen))
            units = [e.id for e in inst.edges]
            online, offline = run_edge_arrival, run_edge_arrival_offline_sim
        elif family in ("bipartite", "transversal"):
            inst = generate_instance(family, rng.fork("inst"), buyers=int(gen.integers(1, 6)),
                                     items=int(gen.integers(1, 6)), p=float(gen.uniform(0.3, 1.0)),
                                     dist=_coupling_dist(gen))
            units = list(inst.buyers)
            online, offline = ((run_vertex_arrival, run_vertex_arrival_offline_sim) if family == "bipartite"
                               else (run_transversal, run_transversal_offline_sim))
        elif family == "budget-additive":
            inst = generate_instance("budget-additive", rng.fork("inst"), buyers=int(gen.integers(1, 4)),
                                     items=int(gen.integers(1, 5)), p=float(gen.uniform(0.4, 1.0)),
                                     dist=_coupling_dist(gen), budget_range=(2.0, 14.0))
            units = list(inst.buyers)
            online, offline = run_budget_additive, run_budget_additive_offline_sim
        else:
            raise ConfigError(f"unknown coupling family {family!r}")
        real = draw_realization(inst, rng.fork("real"))
        order = [units[j] for j in gen.permutation(len(units))] if units else []
        if not online(inst, real, order).same_sets(offline(inst, real, order)):
            bad += 1
    return bad, seeds


def _coupling_dist(gen) -> str:
    return ("two-point", "shared", "uniform")[int(gen.integers(0, 3))]


def _cond_prob_checks(hits, safe, bound, z, min_hits=500):
    """Per-cell conditional frequencies against ``bound`` minus the CI half-width."""
    rows = []
    for key in sorted(hits, key=str):
        h = hits[key]
        if h < min_hits:
            continue
        p = safe[key] / h
        hw = z * math.sqrt(max(p * (1 - p), 0.0) / h)
        rows.append((key, p, hw, h, p >= bound - hw))
    return rows


def edge_lemma_stats(inst: Instance, trials: int, seed: int, orders=None, z: float = Z99) -> dict:
    """Safe-edge statistics for the edge-arrival policy on one instance."""
    batch = B.draw_batch(inst, RandomSource(seed).fork("lemma-edge"), trials)
    ev = B.edge_matching_eval(batch)
    elig, eu, ev_ = ev.extra["eligible"], ev.extra["eu"], ev.extra["ev"]
    r_rank, r_val = batch.r_rank, batch.r_val
    N, m = elig.shape
    nv = int(max(eu.max(initial=-1), ev_.max(initial=-1)) + 1)
    hits, safe = {}, {}
    safe_sum = np.zeros(N)
    ev_sum = np.zeros(N)
    big = np.iinfo(np.int64).max
    for x in range(nv):
        inc = np.flatnonzero(((eu == x) | (ev_ == x)) & (eu != ev_))
        if not len(inc):
            continue
        at = elig[:, inc]
        cnt = at.sum(axis=1)
        score = np.where(at, r_rank[:, inc], -1)
        j = np.argmax(score, axis=1)
        ex = inc[j]
        has = cnt > 0
        other = np.where(eu[ex] == x, ev_[ex], eu[ex])
        min_other = np.full(N, big)
        for y in range(nv):
            inc_y = np.flatnonzero(((eu == y) | (ev_ == y)) & (eu != ev_))
            if not len(inc_y):
                continue
            mn = np.where(elig[:, inc_y], r_rank[:, inc_y], big).min(axis=1)
            min_other = np.where(other == y, mn, min_other)
        is_safe = has & (cnt == 1) & (min_other >= r_rank[np.arange(N), ex])
        val = np.where(has, r_val[np.arange(N), ex], 0.0)
        ev_sum += val
        safe_sum += np.where(is_safe, val, 0.0)
        for e in inc:
            sel = has & (ex == e)
            hits[(x, int(e))] = int(sel.sum())
            safe[(x, int(e))] = int((sel & is_safe).sum())
    ms_weight = (batch.s_val * ev.extra["ms"]).sum(axis=1)
    if orders is None:
        orders = [np.arange(m), np.arange(m)[::-1]]
    violations = 0
    for od in orders:
        w_m = ev.per_trial(np.asarray(od))
        violations += int((w_m < 0.5 * safe_sum - 1e-9).sum())
    return {"cells": _cond_prob_checks(hits, safe, 0.25, z), "violations": violations,
            "ev_minus_ms": ev_sum - ms_weight, "safe_sum": safe_sum}


def bipartite_lemma_stats(inst: Instance, trials: int, seed: int, orders=None, z: float = Z99) -> dict:
    batch = B.draw_batch(inst, RandomSource(seed).fork("lemma-bip"), trials)
    ev = B.bipartite_eval(batch)
    chosen = ev.extra["e_plus"]
    N, nb = chosen.shape
    rows = np.arange(N)
    buyers, items, adj, ei = B._buyer_layout(inst)
    r_rank = batch.r_rank
    big = np.iinfo(np.int64).max
    item_of = np.where(chosen >= 0, ei[np.maximum(chosen, 0)], -1)
    rank_of = np.where(chosen >= 0, r_rank[rows[:, None], np.maximum(chosen, 0)], big)
    safe_sum = np.zeros(N)
    hits, safe = {}, {}
    for b in range(nb):
        has = chosen[:, b] >= 0
        same_item = (item_of == item_of[:, [b]]) & (item_of >= 0)
        min_at_item = np.where(same_item, rank_of, big).min(axis=1)
        is_safe = has & (min_at_item >= rank_of[:, b])
        val = np.where(has, batch.r_val[rows, np.maximum(chosen[:, b], 0)], 0.0)
        safe_sum += np.where(is_safe, val, 0.0)
        for e in adj[b]:
            sel = chosen[:, b] == e
            hits[(buyers[b], e)] = int(sel.sum())
            safe[(buyers[b], e)] = int((sel & is_safe).sum())
    if orders is None:
        orders = [np.arange(nb), np.arange(nb)[::-1]]
    violations = 0
    for od in orders:
        w_m = ev.per_trial(np.asarray(od))
        violations += int((w_m < safe_sum - 1e-9).sum())
    return {"cells": _cond_prob_checks(hits, safe, 0.5, z), "violations": violations, "safe_sum": safe_sum}


def budget_lemma_stats(inst: Instance, trials: int, seed: int, orders=None, z: float = Z99) -> dict:
    batch = B.draw_batch(inst, RandomSource(seed).fork("lemma-budget"), trials)
    ev = B.budget_eval(batch)
    st = ev.extra
    eprime, eb, ei, caps = st["eprime"], st["eb"], st["ei"], st["caps"]
    N, m = eprime.shape
    r_rank, r_val = batch.r_rank, batch.r_val
    big = np.iinfo(np.int64).max
    in_plus = np.zeros((N, m), dtype=bool)
    for b in range(len(caps)):
        es = np.flatnonzero(eb == b)
        if not len(es):
            continue
        srt = np.argsort(-r_rank[:, es], axis=1, kind="stable")
        above = np.zeros(N)
        for j in range(len(es)):
            e = es[srt[:, j]]
            a = r_val[np.arange(N), e]
            live = eprime[np.arange(N), e]
            keep = live & (a + above <= caps[b])
            in_plus[np.arange(N), e] = keep
            above = np.where(live, above + a, above)
    is_safe = np.zeros((N, m), dtype=bool)
    for i in np.unique(ei):
        es = np.flatnonzero(ei == i)
        mn = np.where(eprime[:, es], r_rank[:, es], big).min(axis=1)
        is_safe[:, es] = eprime[:, es] & (r_rank[:, es] <= mn[:, None])
    w_plus = (r_val * in_plus).sum(axis=1)
    w_safe_plus = (r_val * (in_plus & is_safe)).sum(axis=1)
    hits = {int(e): int(in_plus[:, e].sum()) for e in range(m)}
    safe = {int(e): int((in_plus[:, e] & is_safe[:, e]).sum()) for e in range(m)}
    nb = len(caps)
    if orders is None:
        orders = [np.arange(nb), np.arange(nb)[::-1]]
    violations = 0
    for od in orders:
        w_m = ev.per_trial(np.asarray(od))
        violations += int((w_m < w_safe_plus - 1e-9).sum())
    return {"cells": _cond_prob_checks(hits, safe, 0.5, z), "violations": violations, "w_plus": w_plus,
            "w_safe_plus": w_safe_plus, "w_gs": st["gs_weight"]}


def ucb(values, z: float = Z99) -> float:
    """Upper confidence limit of the mean."""
    v = np.asarray(values, dtype=float)
    return float(v.mean() + z * v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float(v.mean())


def lcb(values, z: float = Z99) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.mean() - z * v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float(v.mean())


def greedy_quality(samples: int, seed: int = 0) -> tuple:
    """Violations of greedy >= OPT/2 (matching) and greedy >= OPT/3 (budget) on random weight vectors."""
    root = RandomSource(seed).fork("greedy-quality")
    bad_m = bad_b = 0
    for k in range(samples):
        rng = root.fork(k)
        gen = rng.generator
        inst = generate_instance("random-graph", rng.fork("g"), n=int(gen.integers(2, 7)),
                                 p=float(gen.uniform(0.3, 1.0)), dist="uniform")
        w = gen.uniform(0, 10, size=len(inst.edges))
        recs = [(e.id, e.u, e.v, float(x)) for e, x in zip(inst.edges, w)]
        if greedy_matching(recs).weight < optimal_matching(recs).weight / 2 - 1e-9:
            bad_m += 1
        nb, ni = int(gen.integers(1, 4)), int(gen.integers(1, 5))
        budgets = {f"b{j}": float(gen.uniform(1, 10)) for j in range(nb)}
        vals = [(f"b{j}", f"i{i}", min(float(gen.uniform(0, 10)), budgets[f"b{j}"]))
                for j in range(nb) for i in range(ni) if gen.random() < 0.8]
        g = greedy_budget_assignment(vals, budgets).weight
        o = optimal_budget_assignment(vals, budgets)
        if g < sum(min(o.load(b), budgets[b]) for b in o.bundles) / 3 - 1e-9:
            bad_b += 1
    return bad_m, bad_b


def truthfulness_fixture() -> Instance:
    pm = DistributionSpec.point_mass
    return Instance("bipartite", buyers=("b", "c"), items=("i1", "i2"), edges=(
        Edge("e1", "b", "i1", DistributionSpec.discrete([(10.0, 0.5), (9.0, 0.5)])),
        Edge("e2", "b", "i2", DistributionSpec.discrete([(6.0, 0.5), (1.0, 0.5)])),
        Edge("e3", "c", "i1", DistributionSpec.discrete([(9.5, 0.5), (0.5, 0.5)])),
        Edge("e4", "c", "i2", pm(2.0)),
    ))


def truthfulness_violation(inst: Instance, realizations: int, seed: int = 0) -> tuple:
    """Largest utility gain from any grid misreport across random realizations, and the smallest grid size.

    A buyer without edges has a single (empty) report and utility 0 whatever
    happens; such buyers are still checked but do not count toward the grid
    size, which is the minimum over buyers with at least one edge.
    """
    root = RandomSource(seed).fork("truthful")
    has_edges = {e.u for e in inst.edges}
    worst, min_grid = -math.inf, math.inf
    for k in range(realizations):
        real = draw_realization(inst, root.fork(k))
        order = [inst.buyers[j] for j in root.fork(("order", k)).generator.permutation(len(inst.buyers))]
        for b in inst.buyers:
            res = enumerate_misreports(inst, real, b, buyer_order=order)
            worst = max(worst, res["max_violation"])
            if b in has_edges:
                min_grid = min(min_grid, res["grid_size"])
    return worst, min_grid


def oos_phase1_violations(trials: int, n: int = 5, seed: int = 0) -> int:
    """Run the wrapper around single-choice and count collected Phase-1 elements (must be 0)."""
    inst = generate_instance("single-choice", RandomSource(seed).fork("oos-inst"), n=n, dist="uniform")
    adapter = ADAPTERS["single-choice"](inst)
    root = RandomSource(seed).fork("oos-phase1")
    bad = 0
    for k in range(trials):
        rng = root.fork(k)
        w = {e.id: (float(x), int(p)) for e, x, p in zip(inst.edges, rng.generator.random(n), rng.priority(n))}
        order = list(reversed(adapter.units))
        res: OOSResult = psspi_to_oos(adapter, w, rng.fork("wrap"), order)
        bad += sum(1 for e, _ in res.accepted if e in res.observed)
    return bad


def partition_reward_independence(inst: Instance, trials: int, seed: int = 0) -> int:
    """Rebuild the graphic partition with the rewards permuted; count changes (must be 0).

    Both the online adapter and the vectorized engine are checked: each pair
    of realizations shares its samples and partition randomness and differs
    only in which element holds which reward.
    """
    changes = 0
    ids = inst.element_ids
    for k in range(trials):
        rng = RandomSource(seed).fork(("partition", k))
        real = draw_realization(inst, rng.fork("real"))
        perm = rng.fork("perm").generator.permutation(len(ids))
        swapped = realization_from_values(inst, [real.s_key(x) for x in ids],
                                          [real.r_key(ids[j]) for j in perm])
        parts = []
        for r in (real, swapped):
            adapter = ADAPTERS["alpha-partition"](inst, rng.fork("adapter"))
            samples, _ = unit_samples(adapter, r)
            parts.append(adapter.initialize(samples)["part"])
        if parts[0] != parts[1]:
            changes += 1
    base = B.draw_batch(inst, RandomSource(seed).fork("partition-batch"), trials)
    perm = RandomSource(seed).fork("partition-perm").generator.permutation(base.m)
    shuffled = B.RealizationBatch(inst, base.s_val, base.r_val[:, perm], base.s_pri, base.r_pri[:, perm],
                                  base.weight, base.exact)
    g0 = B.alpha_partition_eval(base, RandomSource(seed).fork("groups")).extra["groups"]
    g1 = B.alpha_partition_eval(shuffled, RandomSource(seed).fork("groups")).extra["groups"]
    changes += int((g0 != g1).any(axis=1).sum())
    return changes


def run_property_suite(name: str, config: ExperimentConfig | None = None, *, trials: int | None = None,
                       seed: int | None = None) -> SuiteResult:
    """Execute one named suite.

    The scale comes from ``trials`` or ``config.trials`` and otherwise from
    the per-suite defaults; ``seed`` likewise.
    """
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; expected one of {SUITES}")
    seed = seed if seed is not None else (config.seed if config else 0)
    trials = trials if trials is not None else (config.trials if config else None)
    z = config.z if config else Z99
    out = []
    if name == "coupling":
        n = trials or 10_000
        for fam in ("general", "bipartite", "transversal", "budget-additive"):
            bad, total = coupling_mismatches(fam, n, seed)
            out.append(PropertyResult(fam, bad == 0, bad, f"{bad} mismatches in {total} coupled runs"))
    elif name in ("safe-probability", "collection"):
        n = trials or 100_000
        fx = lemma_fixtures()
        e = edge_lemma_stats(fx["edge"], n, seed, z=z)
        b = bipartite_lemma_stats(fx["bipartite"], n, seed, z=z)
        g = budget_lemma_stats(fx["budget"], n, seed, z=z)
        if name == "safe-probability":
            for label, st, bound in (("edge", e, 0.25), ("bipartite", b, 0.5), ("budget", g, 0.5)):
                cells = st["cells"]
                ok = bool(cells) and all(c[4] for c in cells)
                low = min((c[1] + c[2] for c in cells), default=float("nan"))
                out.append(PropertyResult(label, ok, low, f"{len(cells)} cells, min p+hw {low:.4f} vs {bound}"))
            # expectation-level inequalities, accepted when the upper confidence limit of the gap is nonnegative
            gaps = (("edge-threshold-vs-greedy", e["ev_minus_ms"]),
                    ("budget-plus-vs-greedy", g["w_plus"] - 0.25 * g["w_gs"]),
                    ("budget-safe-plus-mass", g["w_safe_plus"] - 0.5 * g["w_plus"]))
            for label, gap in gaps:
                u = ucb(gap, z)
                out.append(PropertyResult(label, u >= 0.0, u, f"mean gap {gap.mean():.4f}, upper limit {u:.4f}"))
        else:
            for label, st in (("edge", e), ("bipartite", b), ("budget", g)):
                out.append(PropertyResult(label, st["violations"] == 0, st["violations"],
                                          f"{st['violations']} per-trace violations"))
    elif name == "greedy-quality":
        n = trials or 10_000
        bm, bb = greedy_quality(n, seed)
        out.append(PropertyResult("matching-half", bm == 0, bm, f"{bm} violations in {n}"))
        out.append(PropertyResult("budget-third", bb == 0, bb, f"{bb} violations in {n}"))
    elif name == "truthfulness":
        worst, grid = truthfulness_violation(truthfulness_fixture(), trials or 50, seed)
        out.append(PropertyResult("grid-misreports", worst <= 0.0, worst,
                                  f"max violation {worst:.3g} with >= {grid} reports per buyer"))
    elif name == "reduction":
        n = trials or 2_000
        bad = oos_phase1_violations(n, seed=seed)
        out.append(PropertyResult("oos-phase1", bad == 0, bad, f"{bad} Phase-1 collections"))
        g = generate_instance("random-graph", RandomSource(seed).fork("red"), n=6, p=0.6, dist="uniform")
        ch = partition_reward_independence(g, min(n, 500), seed)
        out.append(PropertyResult("partition-reward-independent", ch == 0, ch, f"{ch} partition changes"))
    return SuiteResult(name, out)


def lemma_fixtures() -> dict:
    """Small fixed instances used by the probabilistic lemma checks."""
    d = DistributionSpec.discrete
    edge = Instance("general-graph", edges=(
        Edge("a", "u", "v", d([(1.0, 0.5), (4.0, 0.5)])),
        Edge("b", "v", "w", d([(2.0, 0.6), (3.0, 0.4)])),
        Edge("c", "u", "w", DistributionSpec.uniform(0.0, 4.0)),
        Edge("d", "w", "x", DistributionSpec.exponential(0.5)),
        Edge("p", "u", "v", d([(0.5, 0.7), (5.0, 0.3)])),
    ))
    bip = Instance("bipartite", buyers=("b1", "b2", "b3"), items=("i1", "i2"), edges=(
        Edge("e11", "b1", "i1", d([(1.0, 0.5), (5.0, 0.5)])),
        Edge("e12", "b1", "i2", DistributionSpec.uniform(0.0, 4.0)),
        Edge("e21", "b2", "i1", d([(2.0, 0.7), (6.0, 0.3)])),
        Edge("e31", "b3", "i1", DistributionSpec.exponential(0.4)),
        Edge("e32", "b3", "i2", d([(0.5, 0.5), (3.0, 0.5)])),
    ))
    bud = Instance("budget-additive", buyers=("b1", "b2"), items=("i1", "i2", "i3"),
                   budgets=(("b1", 8.0), ("b2", 6.0)), edges=(
        Edge("x11", "b1", "i1", d([(2.0, 0.5), (6.0, 0.5)])),
        Edge("x12", "b1", "i2", DistributionSpec.uniform(0.0, 7.0)),
        Edge("x13", "b1", "i3", d([(1.0, 0.4), (4.0, 0.6)])),
        Edge("x21", "b2", "i1", DistributionSpec.exponential(0.3)),
        Edge("x22", "b2", "i2", d([(3.0, 0.5), (5.5, 0.5)])),
    ))
    return {"edge": edge, "bipartite": bip, "budget": bud}


def report_json(report: CompetitiveReport) -> str:
    return json.dumps(report.to_json(), sort_keys=True, indent=2)
