"""Random-cluster (FK, q = 2) model with a ghost vertex.

Internal edges open with ``p = 1 - exp(-2 beta)``, the ghost edge of ``x``
with ``1 - exp(-2 beta h_x)``. Configurations are weighted by
``2^{k(omega)} prod_{open} p_e / (1 - p_e)``, where ``k`` counts clusters of
``V`` plus the ghost (wired groups count once).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import _kernels
from .errors import ContractError, ParameterError
from .events import Connected, ConfigSpace, EdgeOpen, Event, Law, And, Not, Or
from .lattice import BETA_C, Region, scaled_field
from .records import EstimateRecord, batch_stderr, stream_seed


@dataclass(frozen=True)
class FkParams:
    """Edge parameters and boundary condition.

    ``h`` is the unscaled field; the per-vertex ghost coupling uses
    ``h a^{15/8}`` with the graph's spacing, unless ``field`` gives the
    effective per-vertex values directly (e.g. a zeroed schedule).
    ``boundary`` is ``"free"``, ``"wired"`` (outer boundary identified) or
    ``"wired-subset"`` with the identified vertices in ``wired``.
    """

    h: float = 0.0
    beta: float = BETA_C
    boundary: str = "free"
    wired: tuple = ()
    field: tuple | None = None

    def __post_init__(self):
        if self.h < 0:
            raise ParameterError(f"h must be non-negative, got {self.h}")
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if self.boundary not in ("free", "wired", "wired-subset"):
            raise ParameterError(f"unknown boundary condition {self.boundary!r}")
        if self.field is not None:
            object.__setattr__(self, "field", tuple(float(x) for x in self.field))
            if min(self.field, default=0.0) < 0:
                raise ParameterError("fields must be non-negative")
        object.__setattr__(self, "wired", tuple(int(v) for v in self.wired))

    def vertex_field(self, graph) -> np.ndarray:
        if self.field is not None:
            f = np.asarray(self.field, dtype=float)
            if f.shape != (graph.n_vertices,):
                raise ContractError("field schedule must have one entry per vertex")
            return f
        return np.full(graph.n_vertices, scaled_field(self.h, getattr(graph, "a", 1)))

    def couplings(self, graph) -> np.ndarray:
        return graph.couplings(self.beta, self.vertex_field(graph))

    def edge_probs(self, graph) -> np.ndarray:
        p = -np.expm1(-2.0 * self.couplings(graph))
        if np.any(p >= 1.0):
            raise ParameterError("edge parameter reached 1")
        return p

    def wiring(self, graph) -> list[list[int]]:
        if self.boundary == "free":
            return []
        if self.boundary == "wired":
            return [list(graph.inner_boundary(range(graph.n_vertices)))]
        if len(self.wired) < 2:
            return []
        return [list(self.wired)]


@dataclass
class BondConfig:
    """Open/closed state per edge with lazily computed clusters."""

    graph: object
    open: np.ndarray
    wiring: list = field(default_factory=list)
    _labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.open = np.asarray(self.open, dtype=bool)
        if self.open.shape != (self.graph.n_edges,):
            raise ContractError(f"expected {self.graph.n_edges} edge states")

    @classmethod
    def from_mask(cls, graph, mask: int, wiring=()) -> "BondConfig":
        return cls(graph, [(int(mask) >> e) & 1 for e in range(graph.n_edges)], list(wiring))

    def mask(self) -> int:
        return sum(1 << int(e) for e in np.flatnonzero(self.open))

    def labels(self, via_ghost: bool = True, via_wiring: bool = True) -> np.ndarray:
        n = self.graph.n_total_vertices
        parent = np.arange(n)

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(x, y):
            rx, ry = find(x), find(y)
            if rx != ry:
                parent[max(rx, ry)] = min(rx, ry)

        if via_wiring:
            for group in self.wiring:
                for x, y in zip(group, group[1:]):
                    union(int(x), int(y))
        for e in np.flatnonzero(self.open):
            if not via_ghost and self.graph.is_ghost_edge(int(e)):
                continue
            u, v = self.graph.edges[e]
            union(int(u), int(v))
        return np.array([find(v) for v in range(n)])

    def n_clusters(self) -> int:
        return int(len(np.unique(self.labels())))

    def connected(self, A, B, via_ghost: bool = True) -> bool:
        lab = self.labels(via_ghost)
        return bool(set(lab[list(np.atleast_1d(A))]) & set(lab[list(np.atleast_1d(B))]))


def fk_weight(omega: BondConfig, params: FkParams) -> float:
    """``2^{k(omega)} prod_{open e} p_e / (1 - p_e)``."""
    p = params.edge_probs(omega.graph)
    if not omega.wiring:
        omega = BondConfig(omega.graph, omega.open, params.wiring(omega.graph))
    r = p[omega.open] / (1.0 - p[omega.open])
    return float(2.0 ** omega.n_clusters() * np.prod(r))


class FkLaw(Law):
    """Exact random-cluster law over all bond configurations."""

    def __init__(self, space: ConfigSpace, probs: np.ndarray, params: FkParams, log_z: float):
        super().__init__(space, probs)
        self.params = params
        self.log_z = log_z

    @property
    def graph(self):
        return self.space.graph


def enumerate_fk(graph, params: FkParams = FkParams(), space: ConfigSpace | None = None) -> FkLaw:
    """Normalized FK weights of all ``2^|E|`` configurations."""
    p = params.edge_probs(graph)
    space = space or ConfigSpace(graph, params.wiring(graph))
    logw = space.cluster_counts() * np.log(2.0)
    dead = np.zeros(space.size, dtype=bool)
    for e, pe in enumerate(p):
        v = logw.reshape(-1, 2, 1 << e)
        if pe > 0:
            v[:, 1, :] += np.log(pe) - np.log1p(-pe)
        else:
            dead.reshape(-1, 2, 1 << e)[:, 1, :] = True
    logw = np.where(dead, -np.inf, logw)
    top = logw.max()
    w = np.exp(logw - top)
    z = w.sum()
    return FkLaw(space, w / z, params, float(top + np.log(z)))


# -- Swendsen-Wang -------------------------------------------------------
def _sw_arrays(graph, params: FkParams):
    """Edge arrays for the kernel; wiring is appended as always-open edges."""
    p = params.edge_probs(graph)
    eu = list(graph.edges[:, 0])
    ev = list(graph.edges[:, 1])
    pp = list(p)
    for group in params.wiring(graph):
        for x, y in zip(group, group[1:]):
            eu.append(int(x))
            ev.append(int(y))
            pp.append(1.0)
    return (np.array(eu, dtype=np.int64), np.array(ev, dtype=np.int64),
            np.array(pp, dtype=float), graph.n_total_vertices)


def _query_mask(graph, n_kernel_edges: int, via_ghost: bool, via_wiring: bool) -> np.ndarray:
    mask = np.ones(n_kernel_edges, dtype=np.uint8)
    if not via_ghost:
        mask[graph.n_internal: graph.n_edges] = 0
    if not via_wiring:
        mask[graph.n_edges:] = 0
    return mask


def sw_configs(graph, params: FkParams, n_samples: int, seed: int, thin: int = 1,
               burn: int = 100) -> np.ndarray:
    """``n_samples`` bond configurations (rows of 0/1 over the graph's edges)."""
    eu, ev, p, n = _sw_arrays(graph, params)
    out = _kernels.sw_configs(eu, ev, p, n, np.ones(n, dtype=np.int64), burn, n_samples, thin,
                              int(seed))
    return out[:, : graph.n_edges]


def sw_sample(graph, params: FkParams, seed: int, sweeps: int = 100) -> BondConfig:
    """Configuration after ``sweeps`` Swendsen-Wang sweeps from the all-plus state."""
    if sweeps < 1:
        raise ParameterError("sweeps must be at least 1")
    out = sw_configs(graph, params, 1, seed, thin=1, burn=sweeps - 1)
    return BondConfig(graph, out[0].astype(bool), params.wiring(graph))


def _vertex_set(graph, region) -> np.ndarray:
    if isinstance(region, Region):
        vs = graph.vertices_in(region)
    else:
        vs = np.unique(np.atleast_1d(np.asarray(region, dtype=np.int64)))
    if vs.size == 0:
        raise ParameterError(f"region {region!r} contains no vertex of the graph")
    if vs.min() < 0 or vs.max() >= graph.n_total_vertices:
        raise ParameterError("region refers to vertices outside the graph")
    return vs


def sw_connection_series(graph, params: FkParams, queries, n_sweeps: int, seed: int,
                         burn: int = 200, via_ghost: bool = True,
                         via_wiring: bool = True) -> np.ndarray:
    """Per-sweep indicators (``n_sweeps x len(queries)``) of ``A <-> B`` events."""
    eu, ev, p, n = _sw_arrays(graph, params)
    sets, qa, qb = [], [], []
    for A, B in queries:
        qa.append(len(sets))
        sets.append(_vertex_set(graph, A))
        qb.append(len(sets))
        sets.append(_vertex_set(graph, B))
    ptr = np.zeros(len(sets) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(s) for s in sets])
    idx = np.concatenate(sets).astype(np.int64)
    mask = _query_mask(graph, len(eu), via_ghost, via_wiring)
    return _kernels.sw_connections(eu, ev, p, n, np.ones(n, dtype=np.int64), burn, n_sweeps,
                                   int(seed), mask, ptr, idx, np.array(qa, dtype=np.int64),
                                   np.array(qb, dtype=np.int64))


def connection_prob(graph, params: FkParams, A, B, via_ghost: bool = True,
                    n_samples: int = 10_000, seed: int = 0, burn: int = 200,
                    via_wiring: bool = True, observable: str = "connection") -> EstimateRecord:
    """Monte Carlo estimate of ``phi(A <-> B)`` with a batch-means error bar.

    ``via_ghost=False`` only counts paths of internal edges.
    """
    if n_samples < 1:
        raise ParameterError("n_samples must be at least 1")
    t0 = time.perf_counter()
    va, vb = _vertex_set(graph, A), _vertex_set(graph, B)
    if np.intersect1d(va, vb).size:
        return EstimateRecord(observable, _describe(graph, params), 1.0, 0.0, n_samples, seed,
                              time.perf_counter() - t0)
    s = stream_seed(seed, 0)
    x = sw_connection_series(graph, params, [(va, vb)], n_samples, s, burn, via_ghost,
                             via_wiring)[:, 0].astype(float)
    return EstimateRecord(observable, _describe(graph, params), float(x.mean()),
                          batch_stderr(x), n_samples, seed, time.perf_counter() - t0)


def _describe(graph, params: FkParams) -> dict:
    return {"a": getattr(graph, "a", 1), "h": params.h, "beta": params.beta,
            "boundary": params.boundary, "vertices": graph.n_vertices}


# -- lemma-level checks ----------------------------------------------------
@dataclass
class GhostLemmaReport:
    max_deviation: float
    marginal_deviation: float
    n_internal_configs: int
    mode: str

    @property
    def ok(self) -> bool:
        return self.max_deviation <= 1e-12


def ghost_lemma_check(graph, params: FkParams, law: FkLaw | None = None) -> GhostLemmaReport:
    """Exact check of the conditional ghost connections given the internal edges.

    For every internal configuration with clusters ``C_1..C_k``, the joint
    law of the events ``{C_i <-> g}`` must equal the product of
    ``tanh(beta * sum_{x in C_i} h_x)``. Reports the largest deviation over
    all joint patterns and, separately, over single-cluster marginals.
    """
    if params.boundary != "free":
        raise ContractError("the ghost lemma is stated for free boundary conditions")
    law = law or enumerate_fk(graph, params)
    ni = graph.n_internal
    nv = graph.n_vertices
    h = params.vertex_field(graph)
    probs = law.probs.reshape(1 << nv, 1 << ni)  # [ghost bits, internal bits]
    eu, ev = graph.edges[:ni, 0], graph.edges[:ni, 1]
    ghost_bits = np.arange(1 << nv)
    vbits = ((ghost_bits[:, None] >> np.arange(nv)) & 1).astype(bool)
    worst = worst_marg = 0.0
    for c in range(1 << ni):
        col = probs[:, c]
        tot = col.sum()
        if tot <= 0:
            continue
        parent = list(range(nv))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in range(ni):
            if (c >> e) & 1:
                a, b = find(int(eu[e])), find(int(ev[e]))
                if a != b:
                    parent[max(a, b)] = min(a, b)
        roots = np.array([find(v) for v in range(nv)])
        clusters = [np.flatnonzero(roots == r) for r in np.unique(roots)]
        hit = np.stack([vbits[:, cl].any(axis=1) for cl in clusters], axis=1)
        t = np.array([np.tanh(params.beta * h[cl].sum()) for cl in clusters])
        cond = col / tot
        patterns = hit @ (1 << np.arange(len(clusters)))
        got = np.bincount(patterns, weights=cond, minlength=1 << len(clusters))
        pat = np.arange(1 << len(clusters))
        pb = ((pat[:, None] >> np.arange(len(clusters))) & 1).astype(bool)
        want = np.prod(np.where(pb, t, 1.0 - t), axis=1)
        worst = max(worst, float(np.abs(got - want).max()))
        marg = cond @ hit
        worst_marg = max(worst_marg, float(np.abs(marg - t).max()))
    return GhostLemmaReport(worst, worst_marg, 1 << ni, "exact")


@dataclass
class FkgMonReport:
    prob_a: float
    prob_b: float
    prob_ab: float
    fkg_gap: float
    mon_gaps: list
    increasing: bool

    @property
    def ok(self) -> bool:
        return self.fkg_gap >= -1e-12 and all(g >= -1e-12 for g in self.mon_gaps)


def translate_event(event: Event, src, dst) -> Event:
    """Re-index an event from graph ``src`` to a graph ``dst`` containing it."""
    def vmap(v):
        v = int(v)
        if v == src.ghost:
            return dst.ghost
        return dst.vertex(src.coords[v])

    def emap(e):
        e = int(e)
        if src.is_ghost_edge(e):
            return int(dst.ghost_edge[vmap(src.edges[e][0])])
        return dst.edge_by_key(src.edge_key(e))

    if isinstance(event, Connected):
        return Connected([vmap(v) for v in event.A], [vmap(v) for v in event.B],
                         event.via_ghost, event.via_wiring)
    if isinstance(event, EdgeOpen):
        return EdgeOpen(emap(event.edge))
    if isinstance(event, Not):
        return Not(translate_event(event.inner, src, dst))
    if isinstance(event, (And, Or)):
        return type(event)(translate_event(event.left, src, dst),
                           translate_event(event.right, src, dst))
    raise ContractError(f"cannot translate event of type {type(event).__name__}")


def verify_fkg_mon(graph, params: FkParams, event_a: Event, event_b: Event,
                   nested: Iterable = ()) -> FkgMonReport:
    """Exact FKG and domain-monotonicity checks for two increasing events.

    ``nested`` lists larger graphs containing ``graph`` (same coordinates);
    for each, ``phi_graph(E) <= phi_larger(E)`` is checked for both events
    under free boundary conditions.
    """
    law = enumerate_fk(graph, params)
    ia, ib = event_a.indicator(law.space), event_b.indicator(law.space)
    for name, ind in (("first", ia), ("second", ib)):
        if not law.space.is_increasing(ind):
            raise ContractError(f"the {name} event is not increasing")
    pa, pb, pab = law.prob(ia), law.prob(ib), law.prob(ia & ib)
    gaps = []
    for big in nested:
        if params.boundary != "free":
            raise ContractError("domain monotonicity is checked for free boundary conditions")
        big_law = enumerate_fk(big, params)
        for ev, p_small in ((event_a, pa), (event_b, pb)):
            gaps.append(big_law.prob(translate_event(ev, graph, big)) - p_small)
    return FkgMonReport(pa, pb, pab, pab - pa * pb, gaps, True)
