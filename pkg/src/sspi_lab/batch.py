"""Vectorized realizations and policy evaluation over many trials at once.

A :class:`RealizationBatch` stores sample/reward values and tie priorities
as ``[N, m]`` arrays together with strict per-trial ranks (rank ``-1`` plays
the role of the zero price).  The price-feasible sets of every policy do
not depend on the arrival order, so each policy is reduced to per-trial
preference lists over resource bitmasks; identical patterns are merged and
the compiled kernels evaluate any number of arrival orders on them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import DEFAULT_ENUMERATION_CAP, Instance, RandomSource, Realization, iter_realizations
from .errors import InputError, SizeError, UnsupportedModeError
from .oracles import all_matchings, all_transversal_independent_sets

MAX_RESOURCES = 64
OPT_CHUNK = 4096
BUDGET_MAP_CAP = 200_000


@dataclass
class RealizationBatch:
    """``N`` realizations of one instance; ``weight`` sums to 1."""

    instance: Instance
    s_val: np.ndarray
    r_val: np.ndarray
    s_pri: np.ndarray
    r_pri: np.ndarray
    weight: np.ndarray
    exact: bool = False
    _ranks: tuple | None = field(default=None, repr=False)

    def __len__(self):
        return self.s_val.shape[0]

    @property
    def m(self) -> int:
        return self.s_val.shape[1]

    def _compute_ranks(self):
        N, m = self.s_val.shape
        vals = np.concatenate([self.s_val, self.r_val], axis=1)
        pris = np.concatenate([self.s_pri, self.r_pri], axis=1)
        order = np.lexsort((pris, vals), axis=1)
        rank = np.empty_like(order)
        rows = np.arange(N)[:, None]
        rank[rows, order] = np.arange(2 * m)[None, :]
        self._ranks = (rank[:, :m].copy(), rank[:, m:].copy(), order[:, ::-1].copy())

    @property
    def s_rank(self) -> np.ndarray:
        if self._ranks is None:
            self._compute_ranks()
        return self._ranks[0]

    @property
    def r_rank(self) -> np.ndarray:
        if self._ranks is None:
            self._compute_ranks()
        return self._ranks[1]

    @property
    def draw_order(self) -> np.ndarray:
        """Slots ``0..2m-1`` (samples first, then rewards) in decreasing key order per trial."""
        if self._ranks is None:
            self._compute_ranks()
        return self._ranks[2]

    def realization(self, t: int) -> Realization:
        ids = self.instance.element_ids
        s = tuple((float(v), int(p)) for v, p in zip(self.s_val[t], self.s_pri[t]))
        r = tuple((float(v), int(p)) for v, p in zip(self.r_val[t], self.r_pri[t]))
        return Realization(ids, s, r)

    def subset(self, idx) -> "RealizationBatch":
        w = self.weight[idx]
        return RealizationBatch(self.instance, self.s_val[idx], self.r_val[idx], self.s_pri[idx],
                                self.r_pri[idx], w / w.sum(), self.exact)


def draw_batch(instance: Instance, rng: RandomSource, n: int) -> RealizationBatch:
    """``n`` Monte Carlo realizations: two draws per element, strict keys, fair coin.

    Every element draws from its own child stream, so the result does not
    depend on how trials are later split across workers.
    """
    dists = instance.element_dists
    m = len(dists)
    s_val = np.zeros((n, m))
    r_val = np.zeros((n, m))
    s_pri = np.zeros((n, m), dtype=np.int64)
    r_pri = np.zeros((n, m), dtype=np.int64)
    for k, d in enumerate(dists):
        child = rng.fork(("element", k))
        gen = child.generator
        v = np.asarray(d.sample(gen, size=(n, 2)), dtype=float)
        p = child.priority(size=(n, 2))
        heads = gen.integers(0, 2, size=n).astype(bool)
        first_big = (v[:, 0] > v[:, 1]) | ((v[:, 0] == v[:, 1]) & (p[:, 0] > p[:, 1]))
        hi_v = np.where(first_big, v[:, 0], v[:, 1])
        lo_v = np.where(first_big, v[:, 1], v[:, 0])
        hi_p = np.where(first_big, p[:, 0], p[:, 1])
        lo_p = np.where(first_big, p[:, 1], p[:, 0])
        r_val[:, k] = np.where(heads, hi_v, lo_v)
        s_val[:, k] = np.where(heads, lo_v, hi_v)
        r_pri[:, k] = np.where(heads, hi_p, lo_p)
        s_pri[:, k] = np.where(heads, lo_p, hi_p)
    return RealizationBatch(instance, s_val, r_val, s_pri, r_pri, np.full(n, 1.0 / max(n, 1)))


def _element_options(dist):
    """Per-element ``(s_val, s_pri, r_val, r_pri, prob)`` options with tie orders split."""
    out = []
    for (sv, sp), (rv, rp) in itertools.product(dist.support_pairs(), repeat=2):
        p = sp * rp
        if p == 0.0:
            continue
        if sv == rv:
            out.append((sv, 1, rv, 0, p / 2))
            out.append((sv, 0, rv, 1, p / 2))
        else:
            out.append((sv, 0, rv, 0, p))
    return out


def enumerate_batch(instance: Instance, cap: int = DEFAULT_ENUMERATION_CAP) -> RealizationBatch:
    """Every realization pattern with its probability as one batch."""
    dists = instance.element_dists
    for d in dists:
        if not d.enumerable:
            raise UnsupportedModeError(f"{d.kind} distribution cannot be enumerated")
    m = len(dists)
    supports = [set(v for v, _ in d.support_pairs()) for d in dists]
    shared = any(supports[a] & supports[b] for a in range(m) for b in range(a + 1, m))
    if shared:
        rows = list(iter_realizations(instance, cap))
        s_val = np.array([[k[0] for k in s] for s, _, _ in rows]).reshape(len(rows), m)
        s_pri = np.array([[k[1] for k in s] for s, _, _ in rows], dtype=np.int64).reshape(len(rows), m)
        r_val = np.array([[k[0] for k in r] for _, r, _ in rows]).reshape(len(rows), m)
        r_pri = np.array([[k[1] for k in r] for _, r, _ in rows], dtype=np.int64).reshape(len(rows), m)
        w = np.array([p for _, _, p in rows])
        return RealizationBatch(instance, s_val, r_val, s_pri, r_pri, w, exact=True)
    opts = [np.array(_element_options(d)) for d in dists]
    total = math.prod(len(o) for o in opts) if opts else 1
    if total > cap:
        raise SizeError(f"enumeration exceeds cap of {cap} patterns", instance=instance)
    if m == 0:
        z = np.zeros((1, 0))
        return RealizationBatch(instance, z, z.copy(), z.astype(np.int64), z.astype(np.int64), np.ones(1), True)
    grids = np.meshgrid(*[np.arange(len(o)) for o in opts], indexing="ij")
    idx = np.stack([g.reshape(-1) for g in grids], axis=1)
    cols = [opts[k][idx[:, k]] for k in range(m)]
    s_val = np.stack([c[:, 0] for c in cols], axis=1)
    s_pri = np.stack([c[:, 1] for c in cols], axis=1).astype(np.int64)
    r_val = np.stack([c[:, 2] for c in cols], axis=1)
    r_pri = np.stack([c[:, 3] for c in cols], axis=1).astype(np.int64)
    w = np.prod(np.stack([c[:, 4] for c in cols], axis=1), axis=1)
    return RealizationBatch(instance, s_val, r_val, s_pri, r_pri, w, exact=True)


def batch_from_realizations(instance: Instance, realizations, weights=None) -> RealizationBatch:
    reals = list(realizations)
    n, m = len(reals), len(instance.element_ids)
    s_val = np.array([[k[0] for k in r.samples] for r in reals], dtype=float).reshape(n, m)
    r_val = np.array([[k[0] for k in r.rewards] for r in reals], dtype=float).reshape(n, m)
    s_pri = np.array([[k[1] for k in r.samples] for r in reals], dtype=np.int64).reshape(n, m)
    r_pri = np.array([[k[1] for k in r.rewards] for r in reals], dtype=np.int64).reshape(n, m)
    w = np.full(n, 1.0 / max(n, 1)) if weights is None else np.asarray(weights, dtype=float)
    return RealizationBatch(instance, s_val, r_val, s_pri, r_pri, w, exact=weights is not None)


# ---------------------------------------------------------------------------
# evaluations


class PrefEvaluation:
    """Policies that give each arriving unit a preference list over resource bitmasks."""

    kind = "pref"

    def __init__(self, masks, vals, weight, opt, units, extra=None):
        masks = np.ascontiguousarray(masks, dtype=np.uint64)
        N, m, L = masks.shape
        self.masks, self.vals, self.weight, self.opt, self.units = masks, vals, weight, opt, tuple(units)
        self.extra = extra or {}
        if N:
            uniq, inv = np.unique(masks.reshape(N, m * L), axis=0, return_inverse=True)
            inv = np.asarray(inv).reshape(-1)
        else:
            uniq, inv = np.zeros((0, m * L), dtype=np.uint64), np.zeros(0, dtype=np.int64)
        self.inv = inv
        self.umasks = np.ascontiguousarray(uniq.reshape(-1, m, L))
        srt = np.argsort(inv, kind="stable")
        starts = np.flatnonzero(np.r_[True, np.diff(inv[srt]) != 0]) if N else np.zeros(0, dtype=np.int64)
        contrib = (weight[:, None] * vals.reshape(N, m * L))[srt]
        W = np.add.reduceat(contrib, starts, axis=0) if N else np.zeros((0, m * L))
        self.W = np.ascontiguousarray(W.reshape(-1, m, L))

    @property
    def patterns(self) -> int:
        return self.umasks.shape[0]

    def totals(self, orders) -> np.ndarray:
        orders = np.asarray(orders, dtype=np.int64).reshape(-1, len(self.units))
        return kernels.pref_totals(self.umasks, self.W, orders)

    def choice(self, order) -> np.ndarray:
        return kernels.pref_choice(self.umasks, np.asarray(order, dtype=np.int64))[self.inv]

    def per_trial(self, order) -> np.ndarray:
        ch = self.choice(order)
        N = ch.shape[0]
        rows = np.arange(N)
        total = np.zeros(N)
        for e in order:
            c = ch[:, e]
            total = total + np.where(c >= 0, self.vals[rows, e, np.maximum(c, 0)], 0.0)
        return total


class BudgetEvaluation:
    """Budget-additive extraction: E' rewards per buyer, scanned top-down against realized loads."""

    kind = "budget"

    def __init__(self, val, item, budgets, weight, opt, units, extra=None):
        self.val, self.item = np.ascontiguousarray(val), np.ascontiguousarray(item)
        self.budgets = np.asarray(budgets, dtype=float)
        self.weight, self.opt, self.units = weight, opt, tuple(units)
        self.extra = extra or {}

    @property
    def patterns(self) -> int:
        return self.val.shape[0]

    def totals(self, orders) -> np.ndarray:
        orders = np.asarray(orders, dtype=np.int64).reshape(-1, len(self.units))
        return kernels.budget_totals(self.val, self.item, self.budgets, self.weight, orders)

    def per_trial(self, order) -> np.ndarray:
        return kernels.budget_collect(self.val, self.item, self.budgets, np.asarray(order, dtype=np.int64))


def _bits(n: int) -> np.ndarray:
    if n > MAX_RESOURCES:
        raise SizeError(f"{n} resources exceed the batch limit {MAX_RESOURCES}")
    return np.array([1 << k for k in range(n)], dtype=np.uint64)


def _greedy_on_ranks(rank, eu, ev, n_vertices):
    """Greedy matching on one rank matrix; returns per-vertex price ranks and the matched mask."""
    N, m = rank.shape
    rows = np.arange(N)
    bits = _bits(n_vertices)
    used = np.zeros(N, dtype=np.uint64)
    price = np.full((N, n_vertices), -1, dtype=np.int64)
    matched = np.zeros((N, m), dtype=bool)
    order = np.argsort(-rank, axis=1, kind="stable")
    zero = np.uint64(0)
    for j in range(m):
        e = order[:, j]
        u, v = eu[e], ev[e]
        mk = bits[u] | bits[v]
        ok = (u != v) & ((used & mk) == zero)
        used = np.where(ok, used | mk, used)
        rk = rank[rows, e]
        price[rows, u] = np.where(ok, rk, price[rows, u])
        price[rows, v] = np.where(ok, rk, price[rows, v])
        matched[rows, e] |= ok
    return price, matched


def _edge_arrays(instance: Instance, ends=("u", "v")):
    if instance.kind in ("bipartite", "transversal", "budget-additive"):
        verts = tuple(instance.buyers) + tuple(instance.items)
    else:
        verts = tuple(instance.vertices)
    vidx = {x: k for k, x in enumerate(verts)}
    eu = np.array([vidx[e.u] for e in instance.edges], dtype=np.int64)
    ev = np.array([vidx[e.v] for e in instance.edges], dtype=np.int64)
    return verts, eu, ev


def _chunked_max(r_val, inc) -> np.ndarray:
    out = np.zeros(r_val.shape[0])
    if inc.shape[0] == 0:
        return out
    for a in range(0, r_val.shape[0], OPT_CHUNK):
        out[a:a + OPT_CHUNK] = (r_val[a:a + OPT_CHUNK] @ inc.T).max(axis=1)
    return out


def opt_matching_batch(instance: Instance, r_val) -> np.ndarray:
    edges = [(e.id, e.u, e.v) for e in instance.edges]
    ms = all_matchings(edges)
    inc = np.zeros((len(ms), len(edges)))
    for k, mt in enumerate(ms):
        inc[k, list(mt)] = 1.0
    return _chunked_max(r_val, inc)


def opt_transversal_batch(instance: Instance, r_val) -> np.ndarray:
    sets = all_transversal_independent_sets(instance)
    inc = np.zeros((len(sets), len(instance.buyers)))
    for k, s in enumerate(sets):
        inc[k, list(s)] = 1.0
    return _chunked_max(r_val, inc)


def opt_forest_batch(instance: Instance, r_val) -> np.ndarray:
    """Vectorized Kruskal on rewards (non-positive weights never help)."""
    verts, eu, ev = _edge_arrays(instance)
    N, m = r_val.shape
    rows = np.arange(N)
    label = np.tile(np.arange(len(verts)), (N, 1))
    total = np.zeros(N)
    order = np.argsort(-r_val, axis=1, kind="stable")
    for j in range(m):
        e = order[:, j]
        lu, lv = label[rows, eu[e]], label[rows, ev[e]]
        w = r_val[rows, e]
        ok = (lu != lv) & (w > 0)
        total = total + np.where(ok, w, 0.0)
        relabel = ok[:, None] & (label == lv[:, None])
        label = np.where(relabel, lu[:, None], label)
    return total


def opt_budget_batch(instance: Instance, r_val) -> np.ndarray:
    buyers, items = list(instance.buyers), list(instance.items)
    nb, ni = len(buyers), len(items)
    if (nb + 1) ** ni > BUDGET_MAP_CAP:
        raise SizeError(f"{nb} buyers x {ni} items exceed the batch budget optimum cap", instance=instance)
    bidx = {b: k for k, b in enumerate(buyers)}
    iidx = {i: k for k, i in enumerate(items)}
    eb = np.array([bidx[e.u] for e in instance.edges], dtype=np.int64)
    ei = np.array([iidx[e.v] for e in instance.edges], dtype=np.int64)
    maps = np.array(list(itertools.product(range(nb + 1), repeat=ni)), dtype=np.int64).reshape(-1, ni)
    caps = np.array([instance.budget_map[b] for b in buyers])
    out = np.zeros(r_val.shape[0])
    for a in range(0, r_val.shape[0], OPT_CHUNK):
        R = r_val[a:a + OPT_CHUNK]
        val = np.zeros((R.shape[0], maps.shape[0]))
        for b in range(nb):
            inc = (maps[:, ei] == b) & (eb == b)[None, :]
            val = val + np.minimum(R @ inc.T.astype(float), caps[b])
        out[a:a + OPT_CHUNK] = val.max(axis=1) if maps.shape[0] else 0.0
    return out


def edge_matching_eval(batch: RealizationBatch) -> PrefEvaluation:
    inst = batch.instance
    verts, eu, ev = _edge_arrays(inst)
    s_rank, r_rank = batch.s_rank, batch.r_rank
    price, ms = _greedy_on_ranks(s_rank, eu, ev, len(verts))
    bits = _bits(len(verts))
    thr = np.maximum(price[:, eu], price[:, ev])
    elig = (r_rank >= thr) & (eu != ev)[None, :]
    masks = np.where(elig, (bits[eu] | bits[ev])[None, :], np.uint64(0))[:, :, None]
    opt = opt_matching_batch(inst, batch.r_val)
    extra = {"eligible": elig, "ms": ms, "price": price, "eu": eu, "ev": ev}
    return PrefEvaluation(masks, batch.r_val[:, :, None], batch.weight, opt, [e.id for e in inst.edges], extra)


def _buyer_layout(instance: Instance):
    buyers, items = list(instance.buyers), list(instance.items)
    adj = [[k for k, e in enumerate(instance.edges) if e.u == b] for b in buyers]
    iidx = {i: k for k, i in enumerate(items)}
    ei = np.array([iidx[e.v] for e in instance.edges], dtype=np.int64)
    return buyers, items, adj, ei


def bipartite_eval(batch: RealizationBatch) -> PrefEvaluation:
    inst = batch.instance
    verts, eu, ev = _edge_arrays(inst)
    buyers, items, adj, ei = _buyer_layout(inst)
    price, ms = _greedy_on_ranks(batch.s_rank, eu, ev, len(verts))
    r_rank = batch.r_rank
    N = len(batch)
    rows = np.arange(N)
    feas = r_rank >= np.maximum(price[:, eu], price[:, ev])
    ibits = _bits(len(items))
    masks = np.zeros((N, len(buyers), 1), dtype=np.uint64)
    vals = np.zeros((N, len(buyers), 1))
    chosen = np.full((N, len(buyers)), -1, dtype=np.int64)
    for b, es in enumerate(adj):
        if not es:
            continue
        es = np.array(es)
        score = np.where(feas[:, es], r_rank[:, es], -2)
        j = np.argmax(score, axis=1)
        has = score[rows, j] >= 0
        e = es[j]
        chosen[:, b] = np.where(has, e, -1)
        masks[:, b, 0] = np.where(has, ibits[ei[e]], np.uint64(0))
        vals[:, b, 0] = np.where(has, batch.r_val[rows, e], 0.0)
    opt = opt_matching_batch(inst, batch.r_val)
    extra = {"e_plus": chosen, "ms": ms, "price": price}
    return PrefEvaluation(masks, vals, batch.weight, opt, buyers, extra)


def truthful_eval(batch: RealizationBatch) -> PrefEvaluation:
    inst = batch.instance
    verts, eu, ev = _edge_arrays(inst)
    buyers, items, adj, ei = _buyer_layout(inst)
    price, _ = _greedy_on_ranks(batch.s_rank, eu, ev, len(verts))
    r_rank, r_val, s_val = batch.r_rank, batch.r_val, batch.s_val
    N = len(batch)
    rows = np.arange(N)[:, None]
    thr_rank = np.maximum(price[:, eu], price[:, ev])
    # price value of a rank: the sample value holding that rank, 0 for the zero price
    s_by_rank = np.zeros((N, 2 * batch.m + 1))
    s_by_rank[rows, batch.s_rank + 1] = s_val
    thr_val = s_by_rank[rows, thr_rank + 1]
    feas = r_rank >= thr_rank
    util = r_val - thr_val
    L = max((len(es) for es in adj), default=0) or 1
    ibits = _bits(len(items))
    masks = np.zeros((N, len(buyers), L), dtype=np.uint64)
    vals = np.zeros((N, len(buyers), L))
    for b, es in enumerate(adj):
        if not es:
            continue
        es = np.array(es)
        u = np.where(feas[:, es], util[:, es], -np.inf)
        rr = np.where(feas[:, es], r_rank[:, es], -2)
        srt = np.lexsort((rr, u), axis=1)[:, ::-1]
        e = es[srt]
        ok = np.take_along_axis(feas[:, es], srt, axis=1)
        masks[:, b, :len(es)] = np.where(ok, ibits[ei[e]], np.uint64(0))
        vals[:, b, :len(es)] = np.where(ok, np.take_along_axis(r_val[:, es], srt, axis=1), 0.0)
    opt = opt_matching_batch(inst, batch.r_val)
    return PrefEvaluation(masks, vals, batch.weight, opt, buyers, {"price": price})


def transversal_eval(batch: RealizationBatch) -> PrefEvaluation:
    inst = batch.instance
    buyers, items = list(inst.buyers), list(inst.items)
    iidx = {i: k for k, i in enumerate(items)}
    ibits = _bits(len(items))
    adjmask = np.zeros(len(buyers), dtype=np.uint64)
    for e in inst.edges:
        b = buyers.index(e.u)
        adjmask[b] |= ibits[iidx[e.v]]
    s_rank, r_rank = batch.s_rank, batch.r_rank
    N, nb, ni = len(batch), len(buyers), len(items)
    rows = np.arange(N)
    used = np.zeros(N, dtype=np.uint64)
    p_b = np.full((N, nb), -1, dtype=np.int64)
    p_i = np.full((N, ni), -1, dtype=np.int64)
    zero = np.uint64(0)
    order = np.argsort(-s_rank, axis=1, kind="stable")
    for j in range(nb):
        b = order[:, j]
        free = adjmask[b] & ~used
        low = free & (~free + np.uint64(1))
        has = free != zero
        rk = s_rank[rows, b]
        p_b[rows, b] = np.where(has, rk, p_b[rows, b])
        for i in range(ni):
            p_i[:, i] = np.where(has & (low == ibits[i]), rk, p_i[:, i])
        used = used | low
    masks = np.zeros((N, nb, 1), dtype=np.uint64)
    vals = np.zeros((N, nb, 1))
    for b in range(nb):
        done = np.zeros(N, dtype=bool)
        for i in range(ni):
            if not (adjmask[b] & ibits[i]):
                continue
            ok = ~done & (r_rank[:, b] >= np.maximum(p_b[:, b], p_i[:, i]))
            masks[:, b, 0] = np.where(ok, ibits[i], masks[:, b, 0])
            vals[:, b, 0] = np.where(ok, batch.r_val[:, b], vals[:, b, 0])
            done |= ok
    opt = opt_transversal_batch(inst, batch.r_val)
    return PrefEvaluation(masks, vals, batch.weight, opt, buyers, {"p_b": p_b, "p_i": p_i})


def single_choice_eval(batch: RealizationBatch) -> PrefEvaluation:
    inst = batch.instance
    tau = batch.s_rank.max(axis=1, initial=-1)
    elig = batch.r_rank > tau[:, None]
    masks = np.where(elig, np.uint64(1), np.uint64(0))[:, :, None]
    opt = np.maximum(batch.r_val.max(axis=1, initial=0.0), 0.0)
    return PrefEvaluation(masks, batch.r_val[:, :, None], batch.weight, opt, list(inst.element_ids))


def graphic_groups(instance: Instance, rng: RandomSource, n: int) -> np.ndarray:
    """Per-trial group (head vertex index) of every edge under random vertex orders; -1 for self-loops."""
    verts, eu, ev = _edge_arrays(instance)
    pos = np.argsort(rng.generator.random((n, len(verts))), axis=1)
    # pos[t, j] is the vertex placed j-th; invert to get each vertex's position
    where = np.empty_like(pos)
    where[np.arange(n)[:, None], pos] = np.arange(len(verts))[None, :]
    head = np.where(where[:, eu] > where[:, ev], eu[None, :], ev[None, :])
    return np.where((eu != ev)[None, :], head, -1), where


def alpha_partition_eval(batch: RealizationBatch, rng: RandomSource | None = None) -> PrefEvaluation:
    inst = batch.instance
    N = len(batch)
    ids = list(inst.element_ids)
    if inst.kind == "general-graph":
        groups, where = graphic_groups(inst, (rng or RandomSource(0)).fork("partition"), N)
        n_groups = len(inst.vertices)
        opt = opt_forest_batch(inst, batch.r_val)
    else:
        part = inst.groups or (tuple(ids),)
        gmap = {x: k for k, g in enumerate(part) for x in g}
        groups = np.tile(np.array([gmap.get(x, -1) for x in ids], dtype=np.int64), (N, 1))
        n_groups, where = len(part), None
        opt = np.zeros(N)
        for g in part:
            cols = [ids.index(x) for x in g]
            if cols:
                opt = opt + batch.r_val[:, cols].max(axis=1)
    bits = _bits(max(n_groups, 1))
    tau = np.full((N, n_groups), -1, dtype=np.int64)
    for g in range(n_groups):
        tau[:, g] = np.where(groups == g, batch.s_rank, -1).max(axis=1, initial=-1)
    gsafe = np.maximum(groups, 0)
    elig = (groups >= 0) & (batch.r_rank > np.take_along_axis(tau, gsafe, axis=1))
    masks = np.where(elig, bits[gsafe], np.uint64(0))[:, :, None]
    return PrefEvaluation(masks, batch.r_val[:, :, None], batch.weight, opt, ids,
                          {"groups": groups, "vertex_pos": where})


def budget_state(batch: RealizationBatch):
    """Greedy sample assignment interleaved with the reward draws, all trials at once.

    Returns per-edge arrays: ``eprime`` membership, the sample-greedy
    thresholds and assignment, and the blocked flags.
    """
    inst = batch.instance
    buyers, items, adj, ei = _buyer_layout(inst)
    bidx = {b: k for k, b in enumerate(buyers)}
    eb = np.array([bidx[e.u] for e in inst.edges], dtype=np.int64)
    caps = np.array([inst.budget_map[b] for b in buyers])
    N, m = len(batch), batch.m
    rows = np.arange(N)
    nb, ni = len(buyers), len(items)
    loads = np.zeros((N, nb))
    blocked = np.zeros((N, nb), dtype=bool)
    tau = np.full((N, ni), -1, dtype=np.int64)
    item_free = np.ones((N, ni), dtype=bool)
    assigned = np.zeros((N, m), dtype=bool)
    cs = np.zeros((N, m))
    blocked_at_r = np.zeros((N, m), dtype=bool)
    free_at_r = np.zeros((N, m), dtype=bool)
    order = batch.draw_order
    for j in range(2 * m):
        slot = order[:, j]
        is_r = slot >= m
        e = slot % m
        b, i = eb[e], ei[e]
        # reward draw: snapshot the sample-side state
        cs[rows, e] = np.where(is_r, loads[rows, b], cs[rows, e])
        blocked_at_r[rows, e] = np.where(is_r, blocked[rows, b], blocked_at_r[rows, e])
        free_at_r[rows, e] = np.where(is_r, item_free[rows, i], free_at_r[rows, e])
        # sample draw: one greedy step
        v = batch.s_val[rows, e]
        live = ~is_r & item_free[rows, i] & ~blocked[rows, b]
        fits = v + loads[rows, b] <= caps[b]
        take = live & fits
        block = live & ~fits
        loads[rows, b] = np.where(take, v + loads[rows, b], loads[rows, b])
        item_free[rows, i] &= ~take
        tau[rows, i] = np.where(take, batch.s_rank[rows, e], tau[rows, i])
        assigned[rows, e] |= take
        blocked[rows, b] |= block
    eprime = free_at_r & ~blocked_at_r & (batch.r_val + cs <= caps[eb][None, :])
    return {"eprime": eprime, "tau": tau, "gs": assigned, "blocked": blocked, "cs": cs, "eb": eb, "ei": ei,
            "caps": caps, "gs_weight": (batch.s_val * assigned).sum(axis=1)}


def budget_eval(batch: RealizationBatch) -> BudgetEvaluation:
    inst = batch.instance
    buyers, items, adj, ei = _buyer_layout(inst)
    st = budget_state(batch)
    N = len(batch)
    L = max((len(es) for es in adj), default=0) or 1
    val = np.full((N, len(buyers), L), -1.0)
    item = np.full((N, len(buyers), L), -1, dtype=np.int64)
    for b, es in enumerate(adj):
        if not es:
            continue
        es = np.array(es)
        srt = np.argsort(-batch.r_rank[:, es], axis=1, kind="stable")
        e = es[srt]
        ok = np.take_along_axis(st["eprime"][:, es], srt, axis=1)
        val[:, b, :len(es)] = np.where(ok, np.take_along_axis(batch.r_val[:, es], srt, axis=1), -1.0)
        item[:, b, :len(es)] = np.where(ok, ei[e], -1)
    opt = opt_budget_batch(inst, batch.r_val)
    return BudgetEvaluation(val, item, st["caps"], batch.weight, opt, buyers, st)


def oos_single_choice_eval(batch: RealizationBatch, rng: RandomSource) -> PrefEvaluation:
    """Order-oblivious wrapper around the single-choice policy; rewards are the true weights.

    ``k ~ Binomial(n, 1/2)`` units are observed (a uniformly random subset),
    their weights become the samples and every other sample is zero.
    """
    N, m = len(batch), batch.m
    gen = rng.fork("oos").generator
    k = gen.binomial(m, 0.5, size=N)
    perm = np.argsort(gen.random((N, m)), axis=1)
    pos = np.empty_like(perm)
    pos[np.arange(N)[:, None], perm] = np.arange(m)[None, :]
    observed = pos < k[:, None]
    r_rank = batch.r_rank
    tau = np.where(observed, r_rank, -1).max(axis=1, initial=-1)
    elig = ~observed & (r_rank > tau[:, None])
    masks = np.where(elig, np.uint64(1), np.uint64(0))[:, :, None]
    opt = np.maximum(batch.r_val.max(axis=1, initial=0.0), 0.0)
    return PrefEvaluation(masks, batch.r_val[:, :, None], batch.weight, opt, list(batch.instance.element_ids),
                          {"observed": observed})


BATCH_POLICIES = ("single-choice", "edge-matching", "bipartite", "truthful", "transversal", "budget-additive",
                  "alpha-partition", "oos-wrapped:single-choice")


def evaluate(policy: str, batch: RealizationBatch, rng: RandomSource | None = None):
    """Vectorized evaluation object for a registered policy."""
    rng = rng if rng is not None else RandomSource(0)
    if policy == "single-choice":
        return single_choice_eval(batch)
    if policy == "edge-matching":
        return edge_matching_eval(batch)
    if policy == "bipartite":
        return bipartite_eval(batch)
    if policy == "truthful":
        return truthful_eval(batch)
    if policy == "transversal":
        return transversal_eval(batch)
    if policy == "budget-additive":
        return budget_eval(batch)
    if policy == "alpha-partition":
        return alpha_partition_eval(batch, rng)
    if policy == "oos-wrapped:single-choice":
        return oos_single_choice_eval(batch, rng)
    raise InputError(f"policy {policy!r} has no vectorized evaluation")
