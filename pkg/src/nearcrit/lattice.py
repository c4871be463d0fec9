"""Finite pieces of the rescaled square lattice with a ghost vertex.

Vertices are stored as exact integer coordinates in lattice units; the
spacing ``a`` only enters through region predicates and field weights.
Boxes follow the convention ``Lambda_k(x) = x + [-k/2, k/2]^2`` (closed,
sup-norm), so ``k`` is a side length in unscaled units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, ParameterError, SizeError, StructureError

BETA_C = math.log(1.0 + math.sqrt(2.0)) / 2.0

EAST, NORTH, WEST, SOUTH = 0, 1, 2, 3
DIRECTIONS = ((1, 0), (0, 1), (-1, 0), (0, -1))
DIRECTION_NAMES = ("E", "N", "W", "S")

DEFAULT_MAX_VERTICES = 1 << 20


def as_fraction(value) -> Fraction:
    """Exact rational from an int, float, Fraction or string like ``"1/8"``."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1 << 20)
    return Fraction(value)


def _point(center) -> tuple[Fraction, Fraction]:
    if center is None:
        return (Fraction(0), Fraction(0))
    if np.isscalar(center):
        c = as_fraction(center)
        return (c, c)
    x, y = center
    return (as_fraction(x), as_fraction(y))


def _check_spacing(a) -> Fraction:
    a = as_fraction(a)
    if not 0 < a <= 1:
        raise ParameterError(f"spacing a must lie in (0, 1], got {a}")
    return a


class GhostGraph:
    """Finite subgraph of ``a Z^2`` plus a ghost vertex joined to every vertex.

    Vertex ``i`` for ``0 <= i < n_vertices`` sits at ``coords[i] * a``; the
    ghost has index ``n_vertices``. Internal edges come first, ordered by
    ``(lesser endpoint, axis)``; ghost edges follow in vertex order, so edge
    ``n_internal + i`` joins vertex ``i`` to the ghost.

    Instances are immutable once built.
    """

    def __init__(self, a, coords: Iterable[Sequence[int]]):
        self.a = _check_spacing(a)
        pts = sorted({(int(x), int(y)) for x, y in coords})
        self.coords = np.array(pts, dtype=np.int64).reshape(-1, 2)
        self.index = {p: i for i, p in enumerate(pts)}
        n = len(pts)
        self.n_vertices = n
        self.ghost = n

        internal = []
        for p in pts:
            for axis, (dx, dy) in ((0, (1, 0)), (1, (0, 1))):
                q = (p[0] + dx, p[1] + dy)
                if q in self.index:
                    internal.append((self.index[p], self.index[q], axis))
        self.n_internal = len(internal)
        edges = [(u, v) for u, v, _ in internal] + [(i, n) for i in range(n)]
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_axis = np.array([ax for *_, ax in internal] + [-1] * n, dtype=np.int64)
        self.n_edges = len(edges)

        # neighbour and edge lookup by compass direction
        self.nbr = np.full((n, 4), -1, dtype=np.int64)
        self.edge_at = np.full((n, 4), -1, dtype=np.int64)
        for e, (u, v, axis) in enumerate(internal):
            fwd = EAST if axis == 0 else NORTH
            self.nbr[u, fwd] = v
            self.edge_at[u, fwd] = e
            self.nbr[v, fwd + 2] = u
            self.edge_at[v, fwd + 2] = e
        self.ghost_edge = np.arange(self.n_internal, self.n_edges, dtype=np.int64)

        for arr in (self.coords, self.edges, self.edge_axis, self.nbr, self.edge_at, self.ghost_edge):
            arr.setflags(write=False)

    # -- basic queries -------------------------------------------------
    def __repr__(self) -> str:
        return (f"GhostGraph(a={self.a}, vertices={self.n_vertices}, "
                f"internal_edges={self.n_internal}, ghost_edges={self.n_vertices})")

    @property
    def n_total_vertices(self) -> int:
        return self.n_vertices + 1

    def is_ghost_edge(self, e: int) -> bool:
        return e >= self.n_internal

    def vertex(self, coord: Sequence[int]) -> int:
        """Index of the vertex at integer lattice coordinate ``coord``."""
        try:
            return self.index[(int(coord[0]), int(coord[1]))]
        except KeyError:
            raise ContractError(f"no vertex at lattice coordinate {tuple(coord)}") from None

    def vertex_at(self, point) -> int:
        """Index of the vertex at the unscaled point ``point`` (multiple of a)."""
        px, py = _point(point)
        qx, qy = px / self.a, py / self.a
        if qx.denominator != 1 or qy.denominator != 1:
            raise ContractError(f"point {point} is not on the lattice of spacing {self.a}")
        return self.vertex((int(qx), int(qy)))

    def point(self, v: int) -> tuple[Fraction, Fraction]:
        x, y = self.coords[v]
        return (int(x) * self.a, int(y) * self.a)

    def edge_key(self, e: int) -> tuple:
        """Stable identifier: ``((x, y), axis)`` internal, ``((x, y), "g")`` ghost."""
        u, v = self.edges[e]
        cu = tuple(int(c) for c in self.coords[u])
        if e >= self.n_internal:
            return (cu, "g")
        return (cu, int(self.edge_axis[e]))

    def edge_by_key(self, key) -> int:
        coord, kind = key
        u = self.vertex(coord)
        if kind == "g":
            return int(self.ghost_edge[u])
        e = int(self.edge_at[u, EAST if kind == 0 else NORTH])
        if e < 0:
            raise ContractError(f"no edge with key {key}")
        return e

    def other_end(self, e: int, v: int) -> int:
        u, w = self.edges[e]
        if v == u:
            return int(w)
        if v == w:
            return int(u)
        raise ContractError(f"edge {e} is not incident to vertex {v}")

    def incident_edges(self, v: int) -> list[int]:
        if v == self.ghost:
            return [int(e) for e in self.ghost_edge]
        out = [int(e) for e in self.edge_at[v] if e >= 0]
        out.append(int(self.ghost_edge[v]))
        return out

    def degree(self, v: int) -> int:
        if v == self.ghost:
            return self.n_vertices
        return int((self.edge_at[v] >= 0).sum()) + 1

    def vertices_in(self, region: "Region") -> np.ndarray:
        """Indices of the (non-ghost) vertices lying in ``region``."""
        if region.kind == "vertices":
            return np.array([v for v in range(self.n_vertices) if region.contains(self.point(v))],
                            dtype=np.int64)
        # exact integer comparison in units of 1/q
        half_out = region.outer / 2
        half_in = region.inner / 2 if region.kind == "annulus" else Fraction(0)
        cx, cy = region.center
        q = math.lcm(self.a.denominator, cx.denominator, cy.denominator,
                     half_out.denominator, half_in.denominator)
        step = int(self.a * q)
        sup = np.maximum(np.abs(self.coords[:, 0] * step - int(cx * q)),
                         np.abs(self.coords[:, 1] * step - int(cy * q)))
        keep = sup <= int(half_out * q)
        if region.kind == "annulus":
            keep &= sup > int(half_in * q)
        return np.flatnonzero(keep).astype(np.int64)

    def inner_boundary(self, vertices: Iterable[int]) -> np.ndarray:
        """Vertices of the set that have a lattice neighbour outside it."""
        vs = set(int(v) for v in vertices)
        out = []
        for v in sorted(vs):
            x, y = self.coords[v]
            for dx, dy in DIRECTIONS:
                q = (int(x) + dx, int(y) + dy)
                if self.index.get(q) not in vs:
                    out.append(v)
                    break
        return np.array(out, dtype=np.int64)

    # -- weights -------------------------------------------------------
    def couplings(self, beta: float, field) -> np.ndarray:
        """Per-edge coupling ``beta_e``: ``beta`` internal, ``beta*h_x`` on ghost edges.

        ``field`` is a scalar or a per-vertex array of (already scaled) fields.
        """
        h = np.broadcast_to(np.asarray(field, dtype=float), (self.n_vertices,))
        if np.any(h < 0):
            raise ParameterError("fields must be non-negative")
        out = np.empty(self.n_edges)
        out[: self.n_internal] = beta
        out[self.n_internal:] = beta * h
        return out


class SimpleGraph:
    """A finite graph without lattice geometry, optionally with a ghost.

    Exposes the same edge layout as :class:`GhostGraph` (internal edges
    first, then one ghost edge per vertex when ``ghost=True``) so the exact
    oracles accept either.
    """

    def __init__(self, n_vertices: int, edges, ghost: bool = False):
        self.n_vertices = int(n_vertices)
        internal = [(int(u), int(v)) for u, v in edges]
        for u, v in internal:
            if u == v or not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise StructureError(f"bad edge ({u}, {v})")
        self.n_internal = len(internal)
        self.ghost = self.n_vertices if ghost else None
        if ghost:
            internal += [(i, self.n_vertices) for i in range(self.n_vertices)]
        self.edges = np.array(internal, dtype=np.int64).reshape(-1, 2)
        self.edges.setflags(write=False)
        self.n_edges = len(internal)

    def __repr__(self) -> str:
        return f"SimpleGraph(vertices={self.n_vertices}, edges={self.n_internal}, ghost={self.ghost is not None})"

    @property
    def n_total_vertices(self) -> int:
        return self.n_vertices + (self.ghost is not None)

    def is_ghost_edge(self, e: int) -> bool:
        return e >= self.n_internal

    def couplings(self, beta: float, field=0.0) -> np.ndarray:
        out = np.full(self.n_edges, float(beta))
        if self.ghost is not None:
            h = np.broadcast_to(np.asarray(field, dtype=float), (self.n_vertices,))
            if np.any(h < 0):
                raise ParameterError("fields must be non-negative")
            out[self.n_internal:] = beta * h
        return out


def path_graph(n: int, ghost: bool = False) -> SimpleGraph:
    return SimpleGraph(n, [(i, i + 1) for i in range(n - 1)], ghost=ghost)


def cycle_graph(n: int, ghost: bool = False) -> SimpleGraph:
    return SimpleGraph(n, [(i, (i + 1) % n) for i in range(n)], ghost=ghost)


# -- constructors ------------------------------------------------------
def _box_range(c: Fraction, half: Fraction, a: Fraction) -> range:
    lo = math.ceil((c - half) / a)
    hi = math.floor((c + half) / a)
    return range(lo, hi + 1)


def build_box(a, k, center=(0, 0), max_vertices: int = DEFAULT_MAX_VERTICES) -> GhostGraph:
    """Ghost graph on ``Lambda_k(center)`` at spacing ``a``."""
    a = _check_spacing(a)
    k = as_fraction(k)
    if k < 0:
        raise ParameterError(f"box side must be non-negative, got {k}")
    cx, cy = _point(center)
    xs = _box_range(cx, k / 2, a)
    ys = _box_range(cy, k / 2, a)
    if len(xs) * len(ys) > max_vertices:
        raise SizeError(f"box with {len(xs) * len(ys)} vertices exceeds budget {max_vertices}")
    return GhostGraph(a, [(x, y) for x in xs for y in ys])


def build_rectangle(a, width, height, origin=(0, 0),
                    max_vertices: int = DEFAULT_MAX_VERTICES) -> GhostGraph:
    """Ghost graph on ``origin + [0, width] x [0, height]``."""
    a = _check_spacing(a)
    w, h = as_fraction(width), as_fraction(height)
    ox, oy = _point(origin)
    xs = range(math.ceil(ox / a), math.floor((ox + w) / a) + 1)
    ys = range(math.ceil(oy / a), math.floor((oy + h) / a) + 1)
    if len(xs) * len(ys) > max_vertices:
        raise SizeError(f"rectangle with {len(xs) * len(ys)} vertices exceeds budget {max_vertices}")
    return GhostGraph(a, [(x, y) for x in xs for y in ys])


def build_from_points(a, coords: Iterable[Sequence[int]]) -> GhostGraph:
    """Ghost graph on an explicit set of integer lattice coordinates."""
    return GhostGraph(a, coords)


# -- regions -----------------------------------------------------------
@dataclass(frozen=True)
class Region:
    """A box, an annulus or an explicit point set, in unscaled coordinates.

    Membership is decided on Euclidean coordinates only, so it does not
    depend on the lattice spacing.
    """

    kind: str
    center: tuple[Fraction, Fraction] = (Fraction(0), Fraction(0))
    outer: Fraction | None = None
    inner: Fraction | None = None
    points: frozenset = field(default_factory=frozenset)
    a: Fraction | None = None

    def _sup(self, point) -> Fraction:
        px, py = _point(point)
        return max(abs(px - self.center[0]), abs(py - self.center[1]))

    def contains(self, point) -> bool:
        if self.kind == "vertices":
            return _point(point) in self.points
        d = self._sup(point)
        if d > self.outer / 2:
            return False
        if self.kind == "annulus":
            return d > self.inner / 2
        return True

    def lattice_points(self, a=None) -> list[tuple[int, int]]:
        """Integer lattice coordinates (spacing ``a``) of the region's points."""
        a = _check_spacing(a if a is not None else (self.a or 1))
        if self.kind == "vertices":
            return sorted((int(x / a), int(y / a)) for x, y in self.points)
        xs = _box_range(self.center[0], self.outer / 2, a)
        ys = _box_range(self.center[1], self.outer / 2, a)
        return [(x, y) for x in xs for y in ys if self.contains((x * a, y * a))]


def box_region(k, center=(0, 0), a=None) -> Region:
    k = as_fraction(k)
    if k < 0:
        raise ParameterError(f"box side must be non-negative, got {k}")
    return Region("box", _point(center), outer=k, a=None if a is None else as_fraction(a))


def build_annulus(n, m, center=(0, 0), a=None) -> Region:
    """``A_{n,m}(center) = Lambda_m(center) minus Lambda_n(center)``.

    ``n == m`` gives the empty annulus; ``n > m`` is rejected.
    """
    n, m = as_fraction(n), as_fraction(m)
    if n <= 0:
        raise ParameterError(f"inner side must be positive, got {n}")
    if n > m:
        raise ParameterError(f"annulus needs inner side <= outer side, got n={n}, m={m}")
    return Region("annulus", _point(center), outer=m, inner=n,
                  a=None if a is None else as_fraction(a))


def vertex_region(points: Iterable) -> Region:
    return Region("vertices", points=frozenset(_point(p) for p in points))


# -- fields ------------------------------------------------------------
def scaled_field(h: float, a) -> float:
    """Per-vertex field ``h a^{15/8}`` of the near-critical scaling."""
    return float(h) * float(as_fraction(a)) ** (15.0 / 8.0)


def uniform_field(graph: GhostGraph, h: float) -> np.ndarray:
    """Field ``h a^{15/8}`` on every vertex of ``graph``."""
    return np.full(graph.n_vertices, scaled_field(h, graph.a))


def zeroed_field(graph: GhostGraph, h: float, centers: Iterable[int], side=2) -> np.ndarray:
    """Uniform field with the vertices of ``Lambda_side`` around each center zeroed.

    ``side=2`` zeroes the boxes of radius 1 around the given vertices.
    """
    f = uniform_field(graph, h)
    for c in centers:
        reg = box_region(side, graph.point(int(c)))
        f[graph.vertices_in(reg)] = 0.0
    return f


# -- quads -------------------------------------------------------------
ARC_NAMES = ("ab", "bc", "cd", "da")


class Quad:
    """A planar map with four marked boundary arcs in counterclockwise order.

    ``edges`` may contain parallel edges; ``rotation[v]`` lists the edges at
    ``v`` in counterclockwise order. Arcs are vertex sequences with
    ``ab[-1] == bc[0]``, ``bc[-1] == cd[0]``, ``cd[-1] == da[0]`` and
    ``da[-1] == ab[0]``.
    """

    def __init__(self, n_vertices: int, edges, arcs: dict, rotation=None, coords=None):
        self.n_vertices = int(n_vertices)
        self.edges = [(int(u), int(v)) for u, v in edges]
        for u, v in self.edges:
            if u == v:
                raise StructureError(f"self-loop at vertex {u}")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise StructureError(f"edge ({u}, {v}) refers to a missing vertex")
        self.arcs = {name: tuple(int(x) for x in arcs[name]) for name in ARC_NAMES}
        for name in ARC_NAMES:
            if not self.arcs[name]:
                raise StructureError(f"arc {name} is empty")
        for left, right in zip(ARC_NAMES, ARC_NAMES[1:] + ARC_NAMES[:1]):
            if self.arcs[left][-1] != self.arcs[right][0]:
                raise StructureError(f"arcs {left} and {right} do not share a corner")
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        if rotation is None:
            if self.coords is None:
                raise StructureError("a quad needs either coordinates or a rotation system")
            rotation = self._rotation_from_coords()
        self.rotation = [list(r) for r in rotation]

    def _rotation_from_coords(self):
        rot = [[] for _ in range(self.n_vertices)]
        for e, (u, v) in enumerate(self.edges):
            rot[u].append(e)
            rot[v].append(e)
        out = []
        for v, es in enumerate(rot):
            def angle(e, v=v):
                w = self.edges[e][1] if self.edges[e][0] == v else self.edges[e][0]
                d = self.coords[w] - self.coords[v]
                return (math.atan2(d[1], d[0]), e)
            out.append(sorted(es, key=angle))
        return out

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def arc_set(self, name: str) -> frozenset:
        return frozenset(self.arcs[name])

    def boundary_cycle(self) -> list[int]:
        """Counterclockwise boundary walk implied by the arcs."""
        ab, bc, cd, da = (self.arcs[n] for n in ARC_NAMES)
        return list(ab) + list(bc[1:]) + list(cd[1:]) + list(da[1:-1])

    def boundary_steps(self) -> list[str]:
        """Arc label of each step of :meth:`boundary_cycle` (cyclically)."""
        labels = []
        for name in ARC_NAMES:
            labels += [name] * (len(self.arcs[name]) - 1)
        return labels

    # -- faces -----------------------------------------------------------
    def _dart(self, e: int, tail: int) -> int:
        return 2 * e if self.edges[e][0] == tail else 2 * e + 1

    def dart_tail(self, d: int) -> int:
        u, v = self.edges[d // 2]
        return u if d % 2 == 0 else v

    def dart_head(self, d: int) -> int:
        u, v = self.edges[d // 2]
        return v if d % 2 == 0 else u

    def faces(self) -> list[list[int]]:
        """Dart cycles of all faces; each face lies to the left of its darts."""
        pos = [{e: i for i, e in enumerate(r)} for r in self.rotation]
        seen = [False] * (2 * self.n_edges)
        faces = []
        for start in range(2 * self.n_edges):
            if seen[start]:
                continue
            cycle, d = [], start
            while not seen[d]:
                seen[d] = True
                cycle.append(d)
                v, e = self.dart_head(d), d // 2
                rot = self.rotation[v]
                e_next = rot[(pos[v][e] - 1) % len(rot)]
                d = self._dart(e_next, v)
            faces.append(cycle)
        return faces

    def check_planar(self) -> list[list[int]]:
        """Faces, after checking Euler's formula for a connected plane map."""
        faces = self.faces()
        touched = {v for uv in self.edges for v in uv}
        if len(touched) != self.n_vertices:
            raise StructureError("quad has isolated vertices")
        if self.n_vertices - self.n_edges + len(faces) != 2 or not self._connected():
            raise StructureError("quad is not a connected plane map with a consistent embedding")
        return faces

    def _connected(self) -> bool:
        adj = [[] for _ in range(self.n_vertices)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        seen, stack = {0}, [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n_vertices

    def outer_face(self, faces=None) -> tuple[int, list[str]]:
        """Index of the outer face and the arc label of each of its darts."""
        faces = self.check_planar() if faces is None else faces
        cycle = self.boundary_cycle()
        steps = self.boundary_steps()
        n = len(cycle)
        for fi, darts in enumerate(faces):
            if len(darts) != n:
                continue
            walk = [self.dart_tail(d) for d in darts]
            for off in range(n):
                if all(walk[t] == cycle[(off - t) % n] for t in range(n)):
                    return fi, [steps[(off - t - 1) % n] for t in range(n)]
        raise StructureError("no face matches the marked boundary arcs")


def grid_quad(graph: GhostGraph, arcs: dict, vertices: Iterable[int] | None = None) -> Quad:
    """Quad on the internal edges of ``graph`` induced by ``vertices``.

    ``arcs`` maps arc names to sequences of graph vertex indices; the quad
    relabels vertices to ``0..n-1`` in increasing graph order.
    """
    keep = sorted(range(graph.n_vertices)) if vertices is None else sorted(set(int(v) for v in vertices))
    relabel = {v: i for i, v in enumerate(keep)}
    edges = [(relabel[int(u)], relabel[int(v)]) for u, v in graph.edges[: graph.n_internal]
             if int(u) in relabel and int(v) in relabel]
    coords = graph.coords[keep].astype(float)
    q_arcs = {name: [relabel[int(v)] for v in arcs[name]] for name in ARC_NAMES}
    q = Quad(len(keep), edges, q_arcs, coords=coords)
    q.graph_vertices = np.array(keep, dtype=np.int64)
    return q


def rectangle_arcs(graph: GhostGraph) -> dict:
    """Counterclockwise arcs of a rectangular graph.

    ``(ab)`` is the left side from top to bottom, ``(bc)`` the bottom,
    ``(cd)`` the right side and ``(da)`` the top, so ``l((ab),(cd))`` is the
    horizontal crossing length.
    """
    xs, ys = graph.coords[:, 0], graph.coords[:, 1]
    x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
    v = lambda x, y: graph.vertex((x, y))  # noqa: E731
    return {
        "ab": [v(x0, y) for y in range(y1, y0 - 1, -1)],
        "bc": [v(x, y0) for x in range(x0, x1 + 1)],
        "cd": [v(x1, y) for y in range(y0, y1 + 1)],
        "da": [v(x, y1) for x in range(x1, x0 - 1, -1)],
    }


def rectangle_quad(width: int, height: int) -> Quad:
    """Grid quad on ``[0, width] x [0, height]`` (lattice units)."""
    g = build_rectangle(1, width, height)
    return grid_quad(g, rectangle_arcs(g))


def dual_quad(q: Quad) -> Quad:
    """Planar dual of a quad with the marked arcs rotated one position.

    Each inner face becomes a vertex, and the outer face splits into two
    terminals, one behind ``(bc)`` and one behind ``(da)``. Edges whose
    endpoints both lie on ``(ab)`` or both on ``(cd)`` have no dual. The
    dual's ``(ab)`` is the ``(bc)`` terminal and its ``(cd)`` the ``(da)``
    terminal, so ``l_q((ab),(cd)) * l_dual((ab),(cd)) = 1``.
    """
    faces = q.check_planar()
    outer, labels = q.outer_face(faces)
    inner = [i for i in range(len(faces)) if i != outer]
    face_id = {fi: k for k, fi in enumerate(inner)}
    t_bc, t_da = len(inner), len(inner) + 1

    side = {}
    for fi, darts in enumerate(faces):
        for t, d in enumerate(darts):
            if fi == outer:
                side[d] = {"bc": t_bc, "da": t_da}.get(labels[t], None)
            else:
                side[d] = face_id[fi]

    ab, cd = q.arc_set("ab"), q.arc_set("cd")
    dual_edges, dual_of = [], {}
    for e, (u, v) in enumerate(q.edges):
        if (u in ab and v in ab) or (u in cd and v in cd):
            continue
        s0, s1 = side[2 * e], side[2 * e + 1]
        if s0 is None or s1 is None:
            raise StructureError(f"edge {e} borders the outer face along (ab) or (cd)")
        dual_of[e] = len(dual_edges)
        # left face of dart u->v first, so the dual edge crosses e left to right
        dual_edges.append((s0, s1))

    rotation = [[] for _ in range(len(inner) + 2)]
    for fi, darts in enumerate(faces):
        for t, d in enumerate(darts):
            e = d // 2
            if e not in dual_of:
                continue
            if fi == outer:
                lab = labels[t]
                rotation[t_bc if lab == "bc" else t_da].append(dual_of[e])
            else:
                rotation[face_id[fi]].append(dual_of[e])

    def faces_along(arc: str) -> list[int]:
        out = []
        darts = faces[outer]
        for t in range(len(darts)):
            if labels[t] != arc:
                continue
            twin = darts[t] ^ 1
            f = side[twin]
            if f is not None and f < len(inner):
                out.append(f)
        out.reverse()  # the outer walk runs clockwise
        dedup = []
        for f in out:
            if not dedup or dedup[-1] != f:
                dedup.append(f)
        return dedup

    arcs = {
        "ab": [t_bc],
        "bc": [t_bc] + faces_along("cd") + [t_da],
        "cd": [t_da],
        "da": [t_da] + faces_along("ab") + [t_bc],
    }
    coords = None
    if q.coords is not None:
        cs = [q.coords[[q.dart_tail(d) for d in faces[fi]]].mean(axis=0) for fi in inner]
        coords = np.array(cs + [[np.nan, np.nan]] * 2).reshape(-1, 2)
    dq = Quad(len(inner) + 2, dual_edges, arcs, rotation=rotation)
    dq.face_coords = coords
    return dq
