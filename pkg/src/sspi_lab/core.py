"""Instances, value distributions and the two-draw realization model.

Every drawn number carries a *key* ``(value, priority)``.  Keys are compared
lexicographically, so draws with equal value are ordered by an independent
random priority; this is the uniform tie-breaking permutation every algorithm
in the package relies on.  Prices and thresholds that do not come from a draw
("zero" prices of unmatched vertices) use :data:`ZERO_KEY`, which sits below
every draw, including draws of value 0.
"""

from __future__ import annotations

import itertools
import json
import math
import zlib
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from .errors import ConfigError, InputError, SizeError, UnsupportedModeError

Key = tuple  # (value: float, priority: int)

ZERO_KEY: Key = (0.0, -1)

PROB_TOL = 1e-12
DEFAULT_ENUMERATION_CAP = 2_000_000

DIST_KINDS = ("discrete", "uniform-interval", "exponential", "point-mass")
INSTANCE_KINDS = (
    "general-graph",
    "bipartite",
    "transversal",
    "budget-additive",
    "single-choice",
    "partition-matroid",
)
BUYER_ITEM_KINDS = ("bipartite", "transversal", "budget-additive")

_PRIORITY_BOUND = 2**63


@dataclass(frozen=True)
class DistributionSpec:
    """A nonnegative value distribution.

    ``support`` is used by the discrete kind, ``params`` by the continuous
    ones (``lower``/``upper`` for uniform-interval, ``rate`` for exponential,
    ``value`` for point-mass).  ``cap`` truncates continuous draws from above.
    """

    kind: str
    support: tuple = ()
    params: tuple = ()
    cap: float | None = None

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ConfigError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "discrete":
            if not self.support:
                raise ConfigError("discrete distribution needs a nonempty support")
            support = tuple((float(v), float(p)) for v, p in self.support)
            for v, p in support:
                if v < 0 or not math.isfinite(v):
                    raise ConfigError(f"support value {v} must be a finite nonnegative real")
                if not 0.0 <= p <= 1.0:
                    raise ConfigError(f"probability {p} outside [0, 1]")
            total = math.fsum(p for _, p in support)
            if abs(total - 1.0) > PROB_TOL:
                raise ConfigError(f"discrete probabilities sum to {total!r}, not 1")
            object.__setattr__(self, "support", support)
        params = dict(self.params)
        object.__setattr__(self, "params", tuple(sorted((k, float(v)) for k, v in params.items())))
        if self.kind == "uniform-interval":
            lo, hi = params.get("lower"), params.get("upper")
            if lo is None or hi is None or not 0 <= lo <= hi:
                raise ConfigError("uniform-interval needs 0 <= lower <= upper")
        elif self.kind == "exponential":
            if params.get("rate", 0) <= 0:
                raise ConfigError("exponential needs a positive rate")
        elif self.kind == "point-mass":
            if "value" not in params or params["value"] < 0:
                raise ConfigError("point-mass needs a nonnegative value")

    # constructors
    @classmethod
    def discrete(cls, support: Sequence[tuple[float, float]]) -> "DistributionSpec":
        return cls("discrete", support=tuple(support))

    @classmethod
    def uniform(cls, lower: float, upper: float) -> "DistributionSpec":
        return cls("uniform-interval", params=(("lower", lower), ("upper", upper)))

    @classmethod
    def exponential(cls, rate: float) -> "DistributionSpec":
        return cls("exponential", params=(("rate", rate),))

    @classmethod
    def point_mass(cls, value: float) -> "DistributionSpec":
        return cls("point-mass", params=(("value", value),))

    def param(self, name: str) -> float:
        return dict(self.params)[name]

    @property
    def enumerable(self) -> bool:
        return self.kind in ("discrete", "point-mass")

    def support_pairs(self) -> tuple:
        if self.kind == "discrete":
            return self.support
        if self.kind == "point-mass":
            return ((self.param("value"), 1.0),)
        raise UnsupportedModeError(f"{self.kind} distribution is not enumerable")

    def mean(self) -> float:
        if self.enumerable:
            return math.fsum(v * p for v, p in self.support_pairs())
        if self.kind == "uniform-interval":
            lo, hi = self.param("lower"), self.param("upper")
            if self.cap is None or self.cap >= hi:
                return (lo + hi) / 2
            c = max(self.cap, lo)
            if hi == lo:
                return c
            return ((c * c - lo * lo) / 2 + c * (hi - c)) / (hi - lo)
        rate = self.param("rate")
        if self.cap is None:
            return 1.0 / rate
        return (1.0 - math.exp(-rate * self.cap)) / rate

    def sample(self, gen: np.random.Generator, size=None):
        """Draw ``size`` i.i.d. values with ``gen``."""
        if self.kind == "discrete":
            values = np.array([v for v, _ in self.support])
            probs = np.array([p for _, p in self.support])
            out = values[gen.choice(len(values), size=size, p=probs / probs.sum())]
        elif self.kind == "point-mass":
            out = np.full(size if size is not None else (), self.param("value"))
        elif self.kind == "uniform-interval":
            out = gen.uniform(self.param("lower"), self.param("upper"), size=size)
        else:
            out = gen.exponential(1.0 / self.param("rate"), size=size)
        if self.cap is not None:
            out = np.minimum(out, self.cap)
        return out

    def truncated(self, cap: float) -> "DistributionSpec":
        """Return the distribution of ``min(X, cap)``."""
        if self.enumerable:
            merged: dict[float, float] = {}
            for v, p in self.support_pairs():
                merged[min(v, cap)] = merged.get(min(v, cap), 0.0) + p
            if self.kind == "point-mass":
                return DistributionSpec.point_mass(min(self.param("value"), cap))
            return DistributionSpec.discrete(sorted(merged.items()))
        new_cap = cap if self.cap is None else min(cap, self.cap)
        return DistributionSpec(self.kind, params=self.params, cap=new_cap)

    def to_json(self) -> dict:
        doc: dict[str, Any] = {"kind": self.kind}
        if self.kind == "discrete":
            doc["support"] = [[v, p] for v, p in self.support]
        else:
            doc.update(dict(self.params))
        if self.cap is not None:
            doc["cap"] = self.cap
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "DistributionSpec":
        doc = dict(doc)
        kind = doc.pop("kind", None)
        cap = doc.pop("cap", None)
        if kind == "discrete":
            return cls(kind, support=tuple(tuple(x) for x in doc.get("support", ())), cap=cap)
        return cls(kind, params=tuple(doc.items()), cap=cap)


@dataclass(frozen=True)
class Edge:
    id: str
    u: Any
    v: Any
    dist: DistributionSpec | None = None


@dataclass(frozen=True)
class Instance:
    """A problem instance.

    For every kind except ``transversal`` the elements carrying values are the
    edges.  Transversal instances put one distribution per buyer in
    ``buyer_dists`` and every edge of a buyer shares its weight.  ``groups``
    is only used by partition-matroid instances (lists of element ids).
    """

    kind: str
    edges: tuple = ()
    vertices: tuple = ()
    buyers: tuple = ()
    items: tuple = ()
    buyer_dists: tuple = ()
    budgets: tuple = ()
    groups: tuple = ()

    def __post_init__(self):
        if self.kind not in INSTANCE_KINDS:
            raise ConfigError(f"unknown instance kind {self.kind!r}")
        edges = tuple(self.edges)
        ids = [e.id for e in edges]
        if len(set(ids)) != len(ids):
            raise ConfigError("edge identifiers must be unique")
        object.__setattr__(self, "buyer_dists", tuple(dict(self.buyer_dists).items()))
        object.__setattr__(self, "budgets", tuple((b, float(c)) for b, c in dict(self.budgets).items()))
        if self.kind in BUYER_ITEM_KINDS:
            buyers, items = set(self.buyers), set(self.items)
            if buyers & items:
                raise ConfigError("buyer and item identifiers must be disjoint")
            for e in edges:
                if e.u not in buyers or e.v not in items:
                    raise ConfigError(f"edge {e.id} must connect a buyer to an item")
        if self.kind == "transversal":
            dists = dict(self.buyer_dists)
            missing = [b for b in self.buyers if b not in dists]
            if missing:
                raise ConfigError(f"transversal buyers without distribution: {missing}")
        else:
            for e in edges:
                if e.dist is None:
                    raise ConfigError(f"edge {e.id} has no distribution")
        if self.kind == "budget-additive":
            budgets = dict(self.budgets)
            for b in self.buyers:
                if b not in budgets or budgets[b] < 0:
                    raise ConfigError(f"buyer {b} needs a nonnegative budget")
            # values above the budget never matter, so supports are truncated up front
            edges = tuple(Edge(e.id, e.u, e.v, e.dist.truncated(budgets[e.u])) for e in edges)
        if self.kind == "general-graph" and not self.vertices:
            seen: list = []
            for e in edges:
                for x in (e.u, e.v):
                    if x not in seen:
                        seen.append(x)
            object.__setattr__(self, "vertices", tuple(seen))
        object.__setattr__(self, "edges", edges)
        if self.groups:
            groups = tuple(tuple(g) for g in self.groups)
            flat = [x for g in groups for x in g]
            if len(set(flat)) != len(flat):
                raise ConfigError("partition groups overlap")
            if not set(flat) <= set(ids):
                raise ConfigError("partition groups name unknown elements")
            object.__setattr__(self, "groups", groups)

    # element view shared by the realization machinery
    @property
    def element_ids(self) -> tuple:
        if self.kind == "transversal":
            return tuple(self.buyers)
        return tuple(e.id for e in self.edges)

    @property
    def element_dists(self) -> tuple:
        if self.kind == "transversal":
            dists = dict(self.buyer_dists)
            return tuple(dists[b] for b in self.buyers)
        return tuple(e.dist for e in self.edges)

    @property
    def budget_map(self) -> dict:
        return dict(self.budgets)

    def edge_index(self) -> dict:
        return {e.id: k for k, e in enumerate(self.edges)}

    @property
    def enumerable(self) -> bool:
        return all(d.enumerable for d in self.element_dists)

    # JSON document
    def to_json(self) -> dict:
        doc: dict[str, Any] = {"kind": self.kind}
        if self.vertices:
            doc["vertices"] = list(self.vertices)
        if self.buyers:
            doc["buyers"] = list(self.buyers)
        if self.items:
            doc["items"] = list(self.items)
        doc["edges"] = []
        for e in self.edges:
            rec: dict[str, Any] = {"id": e.id, "u": e.u, "v": e.v}
            if e.dist is not None:
                rec["dist"] = e.dist.to_json()
            doc["edges"].append(rec)
        if self.budgets:
            doc["budgets"] = dict(self.budgets)
        if self.buyer_dists:
            doc["buyer_dists"] = {str(b): d.to_json() for b, d in self.buyer_dists}
        if self.groups:
            doc["groups"] = [list(g) for g in self.groups]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Instance":
        try:
            edges = []
            for k, rec in enumerate(doc.get("edges", [])):
                dist = rec.get("dist")
                edges.append(Edge(
                    str(rec.get("id", f"e{k}")), rec.get("u"), rec.get("v"),
                    DistributionSpec.from_json(dist) if dist is not None else None,
                ))
            buyers = tuple(doc.get("buyers", ()))
            # JSON object keys are strings; map them back onto the buyer ids
            by_name = {str(b): b for b in buyers}
            budgets = {by_name.get(str(b), b): c for b, c in doc.get("budgets", {}).items()}
            buyer_dists = {by_name.get(str(b), b): DistributionSpec.from_json(d)
                           for b, d in doc.get("buyer_dists", {}).items()}
            return cls(
                kind=doc["kind"],
                edges=tuple(edges),
                vertices=tuple(doc.get("vertices", ())),
                buyers=buyers,
                items=tuple(doc.get("items", ())),
                buyer_dists=tuple(buyer_dists.items()),
                budgets=tuple(budgets.items()),
                groups=tuple(tuple(g) for g in doc.get("groups", ())),
            )
        except KeyError as exc:
            raise ConfigError(f"instance document is missing {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Instance":
        return cls.from_json(json.loads(text))


def load_instance(path) -> Instance:
    with open(path) as fh:
        return Instance.loads(fh.read())


def save_instance(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        fh.write(instance.dumps())
        fh.write("\n")


class RandomSource:
    """Seeded stream with labelled, independent children.

    The child for ``fork("a").fork("b")`` is derived from the seed and the
    CRC32 of each label, so identical seeds and labels give bit-identical
    draws on every platform.
    """

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed) & (2**64 - 1)
        self.path = tuple(path)
        spawn_key = tuple(zlib.crc32(str(label).encode()) for label in self.path)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def fork(self, label) -> "RandomSource":
        return RandomSource(self.seed, self.path + (label,))

    def priority(self, size=None):
        return self.generator.integers(0, _PRIORITY_BOUND, size=size, dtype=np.int64)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, path={self.path})"


@dataclass(frozen=True)
class Realization:
    """Sample and reward keys for every element of an instance.

    ``samples[k]`` and ``rewards[k]`` are the keys of element ``k`` (in
    ``instance.element_ids`` order).  The two-draw view is recovered through
    :meth:`a1`, :meth:`a2` and :meth:`heads`: ``a1`` is the larger of the two
    keys and the coin shows heads iff the reward is the larger draw.
    """

    element_ids: tuple
    samples: tuple
    rewards: tuple
    index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (len(self.element_ids) == len(self.samples) == len(self.rewards)):
            raise InputError("realization arrays disagree in length")
        object.__setattr__(self, "index", {x: k for k, x in enumerate(self.element_ids)})

    @classmethod
    def from_draws(cls, element_ids, a1, a2, heads) -> "Realization":
        samples, rewards = [], []
        for hi, lo, h in zip(a1, a2, heads):
            if hi < lo:
                hi, lo = lo, hi
            rewards.append(hi if h else lo)
            samples.append(lo if h else hi)
        return cls(tuple(element_ids), tuple(samples), tuple(rewards))

    def __len__(self):
        return len(self.element_ids)

    def s(self, element) -> float:
        return self.samples[self.index[element]][0]

    def r(self, element) -> float:
        return self.rewards[self.index[element]][0]

    def s_key(self, element) -> Key:
        return self.samples[self.index[element]]

    def r_key(self, element) -> Key:
        return self.rewards[self.index[element]]

    def a1(self, k: int) -> Key:
        return max(self.samples[k], self.rewards[k])

    def a2(self, k: int) -> Key:
        return min(self.samples[k], self.rewards[k])

    def heads(self, k: int) -> bool:
        return self.rewards[k] > self.samples[k]

    def with_coin_flipped(self, element) -> "Realization":
        k = self.index[element]
        s, r = list(self.samples), list(self.rewards)
        s[k], r[k] = r[k], s[k]
        return Realization(self.element_ids, tuple(s), tuple(r))

    def ordered_draws(self) -> list:
        """All ``2m`` draws as ``(key, element_position, is_reward)``, largest first."""
        draws = [(k, i, False) for i, k in enumerate(self.samples)]
        draws += [(k, i, True) for i, k in enumerate(self.rewards)]
        draws.sort(key=lambda d: d[0], reverse=True)
        return draws

    def to_json(self) -> dict:
        return {
            "elements": list(self.element_ids),
            "samples": [list(k) for k in self.samples],
            "rewards": [list(k) for k in self.rewards],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Realization":
        def keys(rows):
            return tuple((float(v), int(p)) for v, p in rows)

        return cls(tuple(doc["elements"]), keys(doc["samples"]), keys(doc["rewards"]))

    def assert_strict(self) -> None:
        keys = list(self.samples) + list(self.rewards)
        if len(set(keys)) != len(keys):
            raise InputError("realization keys are not pairwise distinct")


def realization_from_values(instance_or_ids, samples, rewards) -> Realization:
    """Build a realization from plain values.

    On equal values a sample outranks a reward, and a lower element position
    outranks a higher one.  Pass explicit ``(value, priority)`` tuples
    instead of floats to control ties.
    """
    ids = instance_or_ids.element_ids if isinstance(instance_or_ids, Instance) else tuple(instance_or_ids)
    m = len(ids)

    def key(x, prio):
        return (float(x[0]), int(x[1])) if isinstance(x, tuple) else (float(x), prio)

    s_keys = tuple(key(x, 2 * m - k) for k, x in enumerate(samples))
    r_keys = tuple(key(x, m - k) for k, x in enumerate(rewards))
    real = Realization(ids, s_keys, r_keys)
    real.assert_strict()
    return real


def draw_realization(instance: Instance, rng: RandomSource) -> Realization:
    """Draw two values per element, order them strictly and flip the coin."""
    gen = rng.generator
    a1, a2, heads = [], [], []
    for dist in instance.element_dists:
        v = dist.sample(gen, size=2)
        p = rng.priority(size=2)
        k1, k2 = (float(v[0]), int(p[0])), (float(v[1]), int(p[1]))
        a1.append(max(k1, k2))
        a2.append(min(k1, k2))
        heads.append(bool(gen.integers(0, 2)))
    return Realization.from_draws(instance.element_ids, a1, a2, heads)


def iter_realizations(instance: Instance, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[tuple]:
    """Yield ``(samples, rewards, probability)`` value/rank patterns.

    Samples and rewards are drawn independently, then every permutation of
    each group of equal values is produced with equal weight.  Keys carry the
    position within the tie group as priority.
    """
    dists = instance.element_dists
    for d in dists:
        if not d.enumerable:
            raise UnsupportedModeError(f"{d.kind} distribution cannot be enumerated")
    m = len(dists)
    pair_choices = [list(itertools.product(d.support_pairs(), repeat=2)) for d in dists]
    produced = 0
    for combo in itertools.product(*pair_choices):
        prob = 1.0
        values = [0.0] * (2 * m)
        for i, ((sv, sp), (rv, rp)) in enumerate(combo):
            prob *= sp * rp
            values[i], values[m + i] = sv, rv
        if prob == 0.0:
            continue
        groups: dict[float, list[int]] = {}
        for slot, v in enumerate(values):
            groups.setdefault(v, []).append(slot)
        tied = [g for g in groups.values() if len(g) > 1]
        n_perm = 1
        for g in tied:
            n_perm *= math.factorial(len(g))
        produced += n_perm
        if produced > cap:
            raise SizeError(f"enumeration exceeds cap of {cap} patterns", instance=instance)
        share = prob / n_perm
        prio = [0] * (2 * m)
        for perms in itertools.product(*(itertools.permutations(g) for g in tied)):
            for g in perms:
                for rank, slot in enumerate(g):
                    prio[slot] = rank
            keys = [(values[k], prio[k]) for k in range(2 * m)]
            yield tuple(keys[:m]), tuple(keys[m:]), share


def count_patterns(instance: Instance) -> int:
    """Number of patterns :func:`enumerate_realizations` would produce."""
    total = 0
    pair_choices = [list(itertools.product(d.support_pairs(), repeat=2)) for d in instance.element_dists]
    for combo in itertools.product(*pair_choices):
        if any(sp * rp == 0 for (_, sp), (_, rp) in combo):
            continue
        counts: dict[float, int] = {}
        for (sv, _), (rv, _) in combo:
            counts[sv] = counts.get(sv, 0) + 1
            counts[rv] = counts.get(rv, 0) + 1
        n = 1
        for c in counts.values():
            n *= math.factorial(c)
        total += n
    return total


def enumerate_realizations(instance: Instance, cap: int = DEFAULT_ENUMERATION_CAP) -> list:
    """Every realization pattern with its probability (sums to 1)."""
    ids = instance.element_ids
    return [(Realization(ids, s, r), p) for s, r, p in iter_realizations(instance, cap)]
