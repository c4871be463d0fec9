"""Random currents: weights, sources, exact sourced laws and a worm sampler.

A current is tracked through its parity classes (zero, even-positive, odd).
Summing ``w(n) = prod beta_e^{n_e} / n_e!`` over all multiplicities with a
fixed class gives the per-edge factors ``1``, ``cosh(beta_e) - 1`` and
``sinh(beta_e)``; every quantity here is built from those factors.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable

import numpy as np

from . import _kernels
from .errors import ContractError, ParameterError, SizeError
from .events import ConfigSpace, Law, bernoulli_overlay, or_convolve
from .lattice import BETA_C

ZERO, EVEN, ODD = 0, 1, 2
CLASS_NAMES = ("zero", "even", "odd")


def class_of(count: int) -> int:
    if count < 0:
        raise ContractError(f"multiplicities must be non-negative, got {count}")
    if count == 0:
        return ZERO
    return ODD if count % 2 else EVEN


@dataclass
class Current:
    """Parity classes per edge, with optional consistent multiplicities."""

    graph: object
    labels: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.labels.shape != (self.graph.n_edges,):
            raise ContractError(f"expected {self.graph.n_edges} labels, got {self.labels.shape}")
        if np.any((self.labels < 0) | (self.labels > 2)):
            raise ContractError("labels must be 0 (zero), 1 (even) or 2 (odd)")
        if self.counts is not None:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            derived = np.array([class_of(int(c)) for c in self.counts], dtype=np.int8)
            if not np.array_equal(derived, self.labels):
                raise ContractError("multiplicities disagree with the parity labels")

    @classmethod
    def from_counts(cls, graph, counts) -> "Current":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(graph, [class_of(int(c)) for c in counts], counts)

    @classmethod
    def zero(cls, graph) -> "Current":
        return cls(graph, np.zeros(graph.n_edges, dtype=np.int8))

    def odd_mask(self) -> int:
        return _to_mask(np.flatnonzero(self.labels == ODD))

    def trace(self) -> np.ndarray:
        """Open/closed projection ``n_e > 0``."""
        return self.labels != ZERO

    def trace_mask(self) -> int:
        return _to_mask(np.flatnonzero(self.labels != ZERO))


def _to_mask(edges: Iterable[int]) -> int:
    m = 0
    for e in edges:
        m |= 1 << int(e)
    return m


def sources(n: Current) -> frozenset:
    """Vertices (the ghost included) with odd total incident multiplicity."""
    deg = np.zeros(n.graph.n_total_vertices, dtype=np.int64)
    odd = n.graph.edges[n.labels == ODD]
    np.add.at(deg, odd[:, 0], 1)
    np.add.at(deg, odd[:, 1], 1)
    return frozenset(int(v) for v in np.flatnonzero(deg % 2))


def mask_sources(graph, mask: int) -> frozenset:
    deg = np.zeros(graph.n_total_vertices, dtype=np.int64)
    for e in range(graph.n_edges):
        if (mask >> e) & 1:
            u, v = graph.edges[e]
            deg[u] += 1
            deg[v] += 1
    return frozenset(int(v) for v in np.flatnonzero(deg % 2))


@dataclass
class CurrentMeasureSpec:
    """Source set and per-edge couplings of a random-current measure.

    ``couplings[e]`` is ``beta`` on internal edges and ``beta h_x`` on the
    ghost edge of ``x``; a zero entry removes the edge from the measure.
    """

    graph: object
    sources: frozenset
    couplings: np.ndarray

    def __post_init__(self):
        self.sources = frozenset(int(v) for v in self.sources)
        self.couplings = np.asarray(self.couplings, dtype=float)
        if self.couplings.shape != (self.graph.n_edges,):
            raise ContractError("one coupling per edge is required")
        if np.any(self.couplings < 0) or not np.all(np.isfinite(self.couplings)):
            raise ParameterError("couplings must be finite and non-negative")
        bad = [v for v in self.sources if not 0 <= v < self.graph.n_total_vertices]
        if bad:
            raise ContractError(f"sources {bad} are not vertices of the graph")

    @classmethod
    def ising(cls, graph, A: Iterable[int] = (), beta: float = BETA_C, field=0.0,
              removed: Iterable[int] = ()) -> "CurrentMeasureSpec":
        """Couplings from ``beta`` and a per-vertex field; ``removed`` edges get 0."""
        c = graph.couplings(beta, field)
        c[list(removed)] = 0.0
        return cls(graph, frozenset(A), c)

    def with_sources(self, A: Iterable[int]) -> "CurrentMeasureSpec":
        return CurrentMeasureSpec(self.graph, frozenset(A), self.couplings.copy())

    def active_edges(self) -> np.ndarray:
        return np.flatnonzero(self.couplings > 0)

    def components(self) -> np.ndarray:
        """Component label of every vertex using edges with positive coupling."""
        parent = list(range(self.graph.n_total_vertices))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in self.active_edges():
            u, v = (int(x) for x in self.graph.edges[e])
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[max(ru, rv)] = min(ru, rv)
        return np.array([find(v) for v in range(len(parent))])

    def realizable(self) -> tuple[bool, str]:
        """Parity pre-check: each component must hold an even number of sources."""
        comp = self.components()
        counts: dict = {}
        for v in self.sources:
            counts[comp[v]] = counts.get(comp[v], 0) + 1
        odd = sorted(c for c, k in counts.items() if k % 2)
        if odd:
            members = sorted(v for v in self.sources if comp[v] in odd)
            return False, f"sources {members} sit alone in their component (odd count)"
        return True, ""


def current_weight(n: Current, spec: CurrentMeasureSpec) -> float:
    """``prod_e beta_e^{n_e} / n_e!`` (internal ``beta``, ghost ``beta h``)."""
    if n.counts is None:
        raise ContractError("current_weight needs integer multiplicities")
    w = 1.0
    for c, b in zip(n.counts, spec.couplings):
        c = int(c)
        if c:
            w *= b ** c / math.factorial(c)
    return w


def class_factors(couplings) -> np.ndarray:
    """Per-edge factors ``(1, cosh b - 1, sinh b)`` in class order."""
    b = np.asarray(couplings, dtype=float)
    return np.stack([np.ones_like(b), np.cosh(b) - 1.0, np.sinh(b)], axis=1)


@dataclass
class SourcedLaw:
    """Exact law of a sourced current, stored by odd-edge pattern.

    ``patterns[k]`` is a bitmask of odd edges with probability ``probs[k]``;
    each remaining edge is independently even-positive with probability
    ``even_prob[e]`` and zero otherwise.
    """

    spec: CurrentMeasureSpec
    patterns: np.ndarray
    probs: np.ndarray
    even_prob: np.ndarray
    tanh_sum: float
    empty: bool = False
    reason: str = ""
    _space: ConfigSpace | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.spec.graph.n_edges

    @property
    def log_partition(self) -> float:
        """``log sum_{dn = A} w(n)``; ``-inf`` for an empty measure."""
        if self.empty or self.tanh_sum <= 0:
            return -math.inf
        return float(np.log(np.cosh(self.spec.couplings)).sum() + math.log(self.tanh_sum))

    def pattern_prob(self, odd_mask: int) -> float:
        hit = np.flatnonzero(self.patterns == odd_mask)
        return float(self.probs[hit[0]]) if hit.size else 0.0

    def class_prob(self, labels) -> float:
        """Probability of a full class configuration."""
        labels = np.asarray(labels)
        p = self.pattern_prob(_to_mask(np.flatnonzero(labels == ODD)))
        if p == 0.0:
            return 0.0
        for e, lab in enumerate(labels):
            if lab == EVEN:
                p *= self.even_prob[e]
            elif lab == ZERO:
                p *= 1.0 - self.even_prob[e]
        return p

    def class_marginals(self) -> np.ndarray:
        """``[e, class]`` marginal probabilities."""
        out = np.zeros((self.m, 3))
        for e in range(self.m):
            podd = float(self.probs[((self.patterns >> e) & 1).astype(bool)].sum())
            out[e, ODD] = podd
            out[e, EVEN] = (1 - podd) * self.even_prob[e]
            out[e, ZERO] = (1 - podd) * (1 - self.even_prob[e])
        return out

    def iter_classes(self, limit: int = 3 ** 13):
        """Yield ``(labels, prob)`` over the support; for tiny graphs only."""
        free_count = max((self.m - bin(int(p)).count("1") for p in self.patterns), default=0)
        if len(self.patterns) * 2 ** free_count > limit:
            raise SizeError("class support too large to list")
        for pat, pp in zip(self.patterns, self.probs):
            odd = [(int(pat) >> e) & 1 for e in range(self.m)]
            free = [e for e in range(self.m) if not odd[e]]
            for choice in product((ZERO, EVEN), repeat=len(free)):
                lab = np.full(self.m, ODD, dtype=np.int8)
                p = float(pp)
                for e, c in zip(free, choice):
                    lab[e] = c
                    p *= self.even_prob[e] if c == EVEN else 1 - self.even_prob[e]
                if p > 0:
                    yield lab, p

    def space(self) -> ConfigSpace:
        if self._space is None:
            self._space = ConfigSpace(self.spec.graph)
        return self._space

    def trace_law(self, space: ConfigSpace | None = None) -> Law:
        """Law of the traced current ``1{n_e > 0}`` over all bond configurations."""
        space = space or self.space()
        vec = np.zeros(space.size)
        if not self.empty:
            np.add.at(vec, self.patterns, self.probs)
        return Law(space, bernoulli_overlay(vec, self.even_prob))


def _cycle_data(spec: CurrentMeasureSpec):
    """Particular odd set with boundary ``A`` plus a cycle-space basis."""
    g = spec.graph
    n = g.n_total_vertices
    adj = [[] for _ in range(n)]
    for e in spec.active_edges():
        u, v = (int(x) for x in g.edges[e])
        adj[u].append((e, v))
        adj[v].append((e, u))
    parent_edge = [-1] * n
    parent = [-1] * n
    depth = [0] * n
    seen = [False] * n
    tree = set()
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        stack = [root]
        while stack:
            x = stack.pop()
            for e, y in sorted(adj[x]):
                if not seen[y]:
                    seen[y] = True
                    parent[y], parent_edge[y], depth[y] = x, e, depth[x] + 1
                    tree.add(e)
                    stack.append(y)

    def path_mask(x, y):
        m = 0
        while x != y:
            if depth[x] >= depth[y]:
                m ^= 1 << parent_edge[x]
                x = parent[x]
            else:
                m ^= 1 << parent_edge[y]
                y = parent[y]
        return m

    basis = []
    for e in spec.active_edges():
        if int(e) in tree:
            continue
        u, v = (int(x) for x in g.edges[e])
        basis.append(path_mask(u, v) | (1 << int(e)))
    comp = spec.components()
    base = 0
    by_comp: dict = {}
    for v in sorted(spec.sources):
        by_comp.setdefault(comp[v], []).append(v)
    for vs in by_comp.values():
        for x, y in zip(vs[::2], vs[1::2]):
            base ^= path_mask(x, y)
    return base, basis


def enumerate_sourced(spec: CurrentMeasureSpec, max_edges: int = 22) -> SourcedLaw:
    """Exact law of the parity classes of a current with ``dn = A``.

    Unrealizable sources give an empty law rather than an error.
    """
    m = spec.graph.n_edges
    if m > max_edges:
        raise SizeError(f"{m} edges exceed the enumeration budget of {max_edges}")
    b = spec.couplings
    even_prob = np.where(b > 0, 1.0 - 1.0 / np.cosh(b), 0.0)
    ok, why = spec.realizable()
    if not ok:
        return SourcedLaw(spec, np.zeros(0, dtype=np.int64), np.zeros(0), even_prob, 0.0,
                          empty=True, reason=why)
    base, basis = _cycle_data(spec)
    pats = np.array([base], dtype=np.int64)
    for c in basis:
        pats = np.concatenate([pats, pats ^ c])
    pats.sort()
    th = np.tanh(b)
    w = np.ones(len(pats))
    for e in range(m):
        bit = ((pats >> e) & 1).astype(bool)
        w[bit] *= th[e]
    keep = w > 0
    pats, w = pats[keep], w[keep]
    total = float(w.sum())
    if total <= 0:
        return SourcedLaw(spec, pats[:0], w[:0], even_prob, 0.0, empty=True,
                          reason="every pattern has zero weight")
    return SourcedLaw(spec, pats, w / total, even_prob, total)


def double_trace_law(law_a: SourcedLaw, law_b: SourcedLaw) -> Law:
    """Law of the trace of ``n + m`` for independent ``n ~ A`` and ``m ~ B``."""
    if law_a.spec.graph is not law_b.spec.graph:
        raise ContractError("both currents must live on the same graph")
    space = law_a.space()
    la, lb = law_a.trace_law(space), law_b.trace_law(space)
    return Law(space, or_convolve(la.probs, lb.probs, space.m))


def enumerate_double(spec_a: CurrentMeasureSpec, spec_b: CurrentMeasureSpec) -> Law:
    """Exact law of ``trace(n + m)`` under ``P^A (x) P^B``."""
    if spec_a.graph is not spec_b.graph:
        raise ContractError("both specs must use the same graph")
    la = enumerate_sourced(spec_a)
    lb = enumerate_sourced(spec_b)
    if la.empty or lb.empty:
        raise ContractError("double measure with an empty factor: "
                            + (la.reason or lb.reason))
    lb._space = la.space()
    return double_trace_law(la, lb)


def truncated_class_law(spec: CurrentMeasureSpec, n_max: int) -> dict:
    """Brute force over multiplicities ``0..n_max`` on every edge.

    Returns ``{labels tuple: probability}`` restricted to ``dn = A``; used as
    an independent oracle for the class factors on tiny graphs.
    """
    m = spec.graph.n_edges
    if (n_max + 1) ** m > 5_000_000:
        raise SizeError("truncated enumeration too large")
    b = spec.couplings
    per_edge = [[b[e] ** k / math.factorial(k) for k in range(n_max + 1)] for e in range(m)]
    ends = [tuple(int(x) for x in spec.graph.edges[e]) for e in range(m)]
    out: dict = {}
    total = 0.0
    for counts in product(range(n_max + 1), repeat=m):
        w = 1.0
        for e, c in enumerate(counts):
            w *= per_edge[e][c]
        if w == 0.0:
            continue
        deg: dict = {}
        for e, c in enumerate(counts):
            if c % 2:
                for v in ends[e]:
                    deg[v] = deg.get(v, 0) ^ 1
        if frozenset(v for v, d in deg.items() if d) != spec.sources:
            continue
        key = tuple(class_of(c) for c in counts)
        out[key] = out.get(key, 0.0) + w
        total += w
    return {k: v / total for k, v in out.items()}


# -- worm ----------------------------------------------------------------
def _incidence(graph):
    n = graph.n_total_vertices
    inc = [[] for _ in range(n)]
    for e, (u, v) in enumerate(graph.edges):
        inc[int(u)].append((e, int(v)))
        inc[int(v)].append((e, int(u)))
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(x) for x in inc])
    edge = np.array([e for x in inc for e, _ in x], dtype=np.int64)
    nbr = np.array([w for x in inc for _, w in x], dtype=np.int64)
    return indptr, edge, nbr


@dataclass
class WormRun:
    """Worm output: class labels per recorded sample plus run diagnostics."""

    spec: CurrentMeasureSpec
    labels: np.ndarray
    steps: int
    seed: int

    def currents(self) -> list[Current]:
        return [Current(self.spec.graph, lab) for lab in self.labels]

    def trace_marginals(self) -> np.ndarray:
        return (self.labels != ZERO).mean(axis=0)


def _worm_endpoints(spec: CurrentMeasureSpec) -> tuple[int, int]:
    ok, why = spec.realizable()
    if not ok:
        raise ContractError(f"unrealizable sources: {why}")
    A = sorted(spec.sources)
    if len(A) == 0:
        return 0, -1
    if len(A) == 2:
        return A[0], A[1]
    raise ContractError(f"the worm supports zero or two sources, got {len(A)}")


def _tree_path(spec: CurrentMeasureSpec, x: int, y: int) -> np.ndarray:
    """Edge indicator of a breadth-first path from ``x`` to ``y`` over active edges."""
    g = spec.graph
    adj = [[] for _ in range(g.n_total_vertices)]
    for e in spec.active_edges():
        u, v = (int(t) for t in g.edges[e])
        adj[u].append((int(e), v))
        adj[v].append((int(e), u))
    back = {x: None}
    queue = deque([x])
    while queue and y not in back:
        u = queue.popleft()
        for e, w in adj[u]:
            if w not in back:
                back[w] = (e, u)
                queue.append(w)
    if y not in back:
        raise ContractError(f"sources {x} and {y} are not connected by active edges")
    out = np.zeros(g.n_edges, dtype=bool)
    v = y
    while back[v] is not None:
        e, v = back[v]
        out[e] = True
    return out


def worm_run(spec: CurrentMeasureSpec, n_samples: int, seed: int, thin: int = 5,
             burn_sweeps: int = 50, p_heat: float = 0.25,
             max_steps: int | None = None) -> WormRun:
    """Run one worm chain and record ``n_samples`` currents with ``dn = A``.

    The chain moves the free end of the worm along edges; configurations are
    recorded at every ``thin``-th return of the free end to the second
    source (or to the tail when ``A`` is empty).
    """
    if n_samples < 1 or thin < 1:
        raise ParameterError("n_samples and thin must be at least 1")
    tail, target = _worm_endpoints(spec)
    m = spec.graph.n_edges
    indptr, edge, nbr = _incidence(spec.graph)
    if target >= 0:
        # valid start: odd labels on a tree path between the sources, head at target
        labels = np.where(_tree_path(spec, tail, target), ODD, ZERO).astype(np.int8)
        head = target
    else:
        labels = np.zeros(m, dtype=np.int8)
        head = tail
    cap = max_steps if max_steps is not None else max(10 ** 9, 2000 * m * n_samples * thin)
    out, _, steps = _kernels.worm_chain(indptr, edge, nbr, spec.couplings, tail, head, target,
                                        labels, n_samples, thin, burn_sweeps * m, p_heat,
                                        seed, cap)
    if len(out) < n_samples:
        raise ContractError(f"worm collected {len(out)} of {n_samples} samples in {steps} steps")
    return WormRun(spec, out, int(steps), int(seed))


def worm_sample(spec: CurrentMeasureSpec, seed: int, sweeps: int = 50) -> Current:
    """One approximate sample of the sourced current after ``sweeps`` burn-in sweeps."""
    if sweeps < 1:
        raise ParameterError("sweeps must be at least 1")
    run = worm_run(spec, 1, seed, burn_sweeps=sweeps)
    return Current(spec.graph, run.labels[0])
