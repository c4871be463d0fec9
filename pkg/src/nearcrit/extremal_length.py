"""Discrete extremal length of quads.

The production route is the effective resistance between two opposite arcs
(unit conductances, arcs shorted). The verification route solves the
variational problem ``min sum g^2`` subject to every crossing path having
``g``-length at least one, by adding violated shortest paths one at a time.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import ConvergenceError, ContractError, GeometryError
from .lattice import Quad

OPPOSITE = {("ab", "cd"), ("cd", "ab"), ("bc", "da"), ("da", "bc")}


@dataclass
class ExtremalLengthResult:
    length: float
    method: str
    residual: float
    metric: np.ndarray = field(repr=False)
    iterations: int = 0


def _arc_sets(q: Quad, arcs) -> tuple[frozenset, frozenset]:
    first, second = arcs
    if (first, second) not in OPPOSITE:
        raise ContractError(f"arcs {first!r} and {second!r} are not opposite")
    s, t = q.arc_set(first), q.arc_set(second)
    if s & t:
        raise GeometryError(f"arcs {first} and {second} share vertices {sorted(s & t)}")
    return s, t


def _components(n: int, edges) -> np.ndarray:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    return np.array([find(v) for v in range(n)])


def resistance_between(n_vertices: int, edges, source: frozenset, sink: frozenset,
                       tol: float = 1e-10) -> ExtremalLengthResult:
    """Effective resistance between two shorted vertex sets, unit resistors."""
    edges = [(int(u), int(v)) for u, v in edges]
    comp = _components(n_vertices, edges)
    src_comps = {comp[v] for v in source}
    if not src_comps & {comp[v] for v in sink}:
        raise GeometryError("the two arcs are not connected")

    fixed = np.full(n_vertices, np.nan)
    fixed[list(source)] = 1.0
    fixed[list(sink)] = 0.0
    free = [v for v in range(n_vertices) if np.isnan(fixed[v]) and comp[v] in src_comps]
    pos = {v: i for i, v in enumerate(free)}

    rows, cols, vals = [], [], []
    rhs = np.zeros(len(free))
    for u, v in edges:
        for x, y in ((u, v), (v, u)):
            if x not in pos:
                continue
            i = pos[x]
            rows.append(i)
            cols.append(i)
            vals.append(1.0)
            if y in pos:
                rows.append(i)
                cols.append(pos[y])
                vals.append(-1.0)
            elif not np.isnan(fixed[y]):
                rhs[i] += fixed[y]
    phi = fixed.copy()
    residual = 0.0
    if free:
        lap = sp.csr_matrix((vals, (rows, cols)), shape=(len(free), len(free)))
        sol, info = cg(lap, rhs, rtol=tol * 1e-2, atol=0.0, maxiter=20 * len(free) + 100)
        if info != 0:
            raise ConvergenceError("conjugate gradients did not converge", float(
                np.linalg.norm(lap @ sol - rhs)))
        residual = float(np.linalg.norm(lap @ sol - rhs) / max(np.linalg.norm(rhs), 1.0))
        phi[free] = sol

    current = 0.0
    metric = np.zeros(len(edges))
    for e, (u, v) in enumerate(edges):
        pu, pv = phi[u], phi[v]
        if np.isnan(pu) or np.isnan(pv):
            continue
        metric[e] = abs(pu - pv)
        if u in source and v not in source:
            current += 1.0 - pv
        elif v in source and u not in source:
            current += 1.0 - pu
    if current <= 0:
        raise GeometryError("no current flows between the arcs")
    return ExtremalLengthResult(1.0 / current, "dirichlet", residual, metric)


def extremal_length(q: Quad, arcs=("ab", "cd"), info: bool = False):
    """Discrete extremal length ``l_q(arcs[0], arcs[1])`` via a Dirichlet solve."""
    s, t = _arc_sets(q, arcs)
    res = resistance_between(q.n_vertices, q.edges, s, t)
    return res if info else res.length


def metric_functional(q: Quad, g, arcs=("ab", "cd")) -> float:
    """``(inf_path sum_{e in path} g_e)^2 / sum_e g_e^2`` for a metric ``g``."""
    g = np.asarray(g, dtype=float)
    if np.any(g < 0) or not np.any(g > 0):
        raise ContractError("metric must be non-negative and not identically zero")
    s, t = _arc_sets(q, arcs)
    length, _ = _shortest_path(q.n_vertices, q.edges, g, s, t)
    return length ** 2 / float(g @ g)


def _shortest_path(n: int, edges, g: np.ndarray, source, sink) -> tuple[float, list[int]]:
    """Dijkstra from a vertex set to a vertex set; equal-length ties go to the smaller edge id."""
    adj = [[] for _ in range(n)]
    for e, (u, v) in enumerate(edges):
        adj[u].append((e, v))
        adj[v].append((e, u))
    dist = [np.inf] * n
    pred = [(-1, -1)] * n  # (edge, previous vertex)
    heap = []
    for v in sorted(source):
        dist[v] = 0.0
        heap.append((0.0, v))
    heapq.heapify(heap)
    done = [False] * n
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        if v in sink:
            path = []
            while pred[v][0] >= 0:
                path.append(pred[v][0])
                v = pred[v][1]
            return d, sorted(path)
        for e, w in adj[v]:
            if done[w]:
                continue
            nd = d + g[e]
            if nd < dist[w] or (nd == dist[w] and e < pred[w][0]):
                dist[w] = nd
                pred[w] = (e, v)
                heapq.heappush(heap, (nd, w))
    return np.inf, []


def _nonneg_quadratic(m: np.ndarray, q: np.ndarray, tol: float = 1e-13,
                      max_iter: int = 10_000) -> np.ndarray:
    """Lawson-Hanson active set for ``min 1/2 x'Mx - q'x`` subject to ``x >= 0``."""
    n = len(q)
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    grad = q - m @ x
    for _ in range(max_iter):
        cand = np.where(~passive & (grad > tol))[0]
        if cand.size == 0:
            return x
        passive[cand[np.argmax(grad[cand])]] = True
        while True:
            idx = np.where(passive)[0]
            z = np.zeros(n)
            z[idx] = np.linalg.lstsq(m[np.ix_(idx, idx)], q[idx], rcond=None)[0]
            if np.all(z[idx] > 0):
                x = z
                break
            neg = idx[z[idx] <= 0]
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > tol * 1e-3
            x[~passive] = 0.0
        grad = q - m @ x
    raise ConvergenceError("active-set solver hit its iteration cap", float(grad.max()))


def extremal_length_oracle(q: Quad, arcs=("ab", "cd"), max_paths: int = 5000,
                           tol: float = 1e-12, info: bool = False):
    """Extremal length from the variational formula by constraint generation."""
    if q.n_edges > 200:
        raise ContractError(f"oracle limited to 200 edges, quad has {q.n_edges}")
    s, t = _arc_sets(q, arcs)
    n_e = q.n_edges
    paths: list[np.ndarray] = []
    g = np.ones(n_e)
    for it in range(max_paths):
        length, path = _shortest_path(q.n_vertices, q.edges, g, s, t)
        if not path and not np.isfinite(length):
            raise GeometryError("the two arcs are not connected")
        if paths and length >= 1.0 - tol:
            value = float(g @ g)
            res = ExtremalLengthResult(1.0 / value, "constraint-generation",
                                       max(0.0, 1.0 - length), g, iterations=it)
            return res if info else res.length
        row = np.zeros(n_e)
        row[path] = 1.0
        paths.append(row)
        p = np.array(paths)
        lam = _nonneg_quadratic(p @ p.T, np.ones(len(paths)))
        g = p.T @ lam
    raise ConvergenceError("constraint generation exceeded the path cap", float(1.0 - length))


def _reachable(n: int, edges, start, blocked: set) -> set:
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {start}
    stack = [start]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen and w not in blocked:
                seen.add(w)
                stack.append(w)
    return seen


def cut_quad(t: Quad, path) -> Quad:
    """The quad reachable from ``b`` after cutting along a path between points of ``(ad)``.

    The path's vertices join the ``(da)`` arc of the result; other arcs are
    restricted to the surviving vertices. Edges joining two path vertices
    that are not steps of the path are dropped.
    """
    path = [int(v) for v in path]
    if not path:
        return t
    da = t.arc_set("da")
    if path[0] not in da or path[-1] not in da:
        raise GeometryError("cutting path must start and end on the (da) arc")
    adjacent = {frozenset(uv) for uv in t.edges}
    for u, v in zip(path, path[1:]):
        if frozenset((u, v)) not in adjacent:
            raise GeometryError(f"cutting path step {u}->{v} is not an edge of the quad")
    b = t.arcs["ab"][-1]
    if b in path:
        raise GeometryError("cutting path passes through corner b")
    inside = _reachable(t.n_vertices, t.edges, b, set(path)) - set(path)
    keep = inside | set(path)
    order = sorted(keep)
    relabel = {v: i for i, v in enumerate(order)}
    # chords between two path vertices lie on the far side of the cut
    steps = {frozenset(uv) for uv in zip(path, path[1:])}
    edges = [(relabel[u], relabel[v]) for u, v in t.edges
             if u in inside or v in inside or frozenset((u, v)) in steps]
    arcs = {name: [relabel[v] for v in t.arcs[name] if v in keep] for name in ("ab", "bc", "cd")}
    old_da = list(t.arcs["da"])
    i, j = old_da.index(path[0]), old_da.index(path[-1])
    seg = path if i <= j else path[::-1]
    lo, hi = min(i, j), max(i, j)
    arcs["da"] = [relabel[v] for v in old_da[:lo] + seg + old_da[hi + 1:] if v in keep]
    if t.coords is not None:
        return Quad(len(order), edges, arcs, coords=t.coords[order])
    rotation = [[k for k, (u, v) in enumerate(edges) if x in (u, v)] for x in range(len(order))]
    return Quad(len(order), edges, arcs, rotation=rotation)


@dataclass
class RayleighReport:
    length_ad_bc: float
    cut_length_ad_bc: float
    length_ab_cd: float
    cut_length_ab_cd: float

    @property
    def ok(self) -> bool:
        return self.violation <= 1e-9

    @property
    def violation(self) -> float:
        """Largest amount by which either monotonicity statement fails."""
        return max(0.0, self.cut_length_ad_bc - self.length_ad_bc,
                   self.length_ab_cd - self.cut_length_ab_cd)


def rayleigh_check(t: Quad, path) -> RayleighReport:
    """Compare extremal lengths before and after cutting ``t`` along ``path``.

    Cutting along a path between two points of ``(da)`` can only shorten
    the ``(da)``-``(bc)`` length; it removes edges, so it can only lengthen
    the ``(ab)``-``(cd)`` length.
    """
    cut = cut_quad(t, path)
    return RayleighReport(
        extremal_length(t, ("da", "bc")), extremal_length(cut, ("da", "bc")),
        extremal_length(t, ("ab", "cd")), extremal_length(cut, ("ab", "cd")),
    )


def crossing_vs_length(graph, params, n_samples: int, seed: int, arcs=("ab", "cd"),
                       burn: int = 200):
    """Extremal length of a rectangular graph and its FK crossing probability.

    The quad uses the internal edges of ``graph`` with
    :func:`~nearcrit.lattice.rectangle_arcs`; the crossing event joins the
    two arcs by internal edges. Returns ``(length record, crossing record)``;
    the length is exact, so its standard error is zero.
    """
    from .fk import connection_prob
    from .lattice import grid_quad, rectangle_arcs
    from .records import EstimateRecord

    named = rectangle_arcs(graph)
    q = grid_quad(graph, named)
    length = extremal_length(q, arcs)
    rec = connection_prob(graph, params, list(named[arcs[0]]), list(named[arcs[1]]),
                          via_ghost=False, n_samples=n_samples, seed=seed, burn=burn,
                          observable="crossing")
    params_l = dict(rec.params, arcs="".join(arcs))
    length_rec = EstimateRecord("extremal_length", params_l, float(length), 0.0, 1, seed)
    return length_rec, rec
