"""Backbone exploration of a sourced current and the domains it leaves behind.

The backbone walks along odd edges. At every vertex it inspects the ghost
edge first and then the lattice edges right, left and straight relative to
the incoming direction (``E, N, W, S`` at the start), stopping at the first
odd edge not explored yet. Everything inspected on the way is "explored".

Local boxes here are indexed by radius: ``Lambda_r(x)`` is the closed box
of half-side ``r`` around ``x`` in unscaled units.
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .currents import ODD, Current, CurrentMeasureSpec, enumerate_sourced, mask_sources
from .errors import ContractError, GeometryError, InvariantViolation
from .lattice import as_fraction
from .records import stream_seed

START_ORDER = (0, 1, 2, 3)  # E, N, W, S


def _require_lattice(graph):
    if not hasattr(graph, "edge_at"):
        raise ContractError("backbone exploration needs a square-lattice GhostGraph")


def _arrival_direction(graph, v: int, incoming: int) -> int:
    """Compass index of the step that arrived at ``v`` through ``incoming``."""
    hits = np.flatnonzero(graph.edge_at[v] == incoming)
    if hits.size == 0:
        raise ContractError(f"edge {incoming} is not a lattice edge at vertex {v}")
    # the edge sits at side k of v, so the walker moved in direction k + 2
    return (int(hits[0]) + 2) % 4


def edge_order_at(graph, v: int, incoming: int | None = None) -> list[int]:
    """Inspection order at ``v``: ghost edge, then right, left, straight.

    Without ``incoming`` the lattice edges follow ``E, N, W, S``. Absent
    edges are skipped.
    """
    _require_lattice(graph)
    if not 0 <= v < graph.n_vertices:
        raise ContractError(f"vertex {v} is not a lattice vertex")
    if incoming is None:
        dirs = START_ORDER
    else:
        d = _arrival_direction(graph, v, int(incoming))
        dirs = ((d + 3) % 4, (d + 1) % 4, d)
    out = [int(graph.ghost_edge[v])]
    out += [int(graph.edge_at[v, k]) for k in dirs if graph.edge_at[v, k] >= 0]
    return out


@dataclass
class BackboneTrace:
    """Full record of one exploration.

    ``increments[i]`` holds the edges added in step ``i + 1``, so
    ``S_{i+1} = S_i | increments[i]`` with ``S_0`` empty; ``path`` lists
    ``u_0, u_1, ...`` and ``path_edges`` the odd edges walked.
    """

    graph: object
    start: int
    stop: frozenset
    increments: list
    path: list
    path_edges: list
    explored: frozenset = frozenset()

    @property
    def explored_sets(self) -> list:
        """``[S_0, S_1, ...]``."""
        out, cur = [frozenset()], set()
        for inc in self.increments:
            cur.update(inc)
            out.append(frozenset(cur))
        return out

    @property
    def end(self) -> int:
        return self.path[-1]

    @property
    def hit_ghost(self) -> bool:
        return self.end == getattr(self.graph, "ghost", -1)

    @property
    def n_steps(self) -> int:
        return len(self.path) - 1

    def explored_mask(self) -> int:
        return sum(1 << e for e in self.explored)

    def steps(self) -> list[dict]:
        """One record per step: index, vertex reached, edges explored in it."""
        out = []
        for i, inc in enumerate(self.increments, 1):
            out.append({"step": i, "vertex": self.path[i], "explored": sorted(inc)})
        return out

    def explored_vertices(self) -> set:
        """Non-ghost vertices with at least one explored incident edge."""
        return explored_vertices(self.graph, self.explored)


def explored_vertices(graph, edges: Iterable[int]) -> set:
    ghost = getattr(graph, "ghost", None)
    out = set()
    for e in edges:
        for v in graph.edges[int(e)]:
            if int(v) != ghost:
                out.add(int(v))
    return out


def _odd_array(n, graph) -> np.ndarray:
    if isinstance(n, Current):
        return n.labels == ODD
    if isinstance(n, (int, np.integer)):
        return ((int(n) >> np.arange(graph.n_edges)) & 1).astype(bool)
    odd = np.asarray(n)
    if odd.shape != (graph.n_edges,):
        raise ContractError("odd indicator must have one entry per edge")
    return odd.astype(bool)


def explore_backbone(n, start: int, stop: Iterable[int], graph=None) -> BackboneTrace:
    """Explore the backbone of ``n`` from ``start`` until it reaches ``stop``.

    ``n`` is a :class:`Current`, or (with ``graph``) an odd-edge bitmask or
    boolean array; only the odd edges matter. The ghost is always a stop
    vertex.
    """
    if isinstance(n, Current):
        graph = n.graph
    if graph is None:
        raise ContractError("a graph is needed when n is not a Current")
    _require_lattice(graph)
    odd = _odd_array(n, graph)
    stop = frozenset(int(v) for v in stop) | {graph.ghost}
    start = int(start)
    if start in stop:
        raise ContractError(f"start vertex {start} is in the stop set")
    explored: set = set()
    incs = []
    path, walked = [start], []
    u, incoming = start, None
    while u not in stop:
        order = edge_order_at(graph, u, incoming)
        k = next((i for i, e in enumerate(order) if odd[e] and e not in explored), None)
        if k is None:
            raise InvariantViolation(f"no unexplored odd edge at vertex {u}; "
                                     "the current's sources do not match the exploration")
        inc = tuple(e for e in order[: k + 1] if e not in explored)
        explored.update(inc)
        incs.append(inc)
        e = order[k]
        u, incoming = graph.other_end(e, u), e
        path.append(u)
        walked.append(e)
        if len(walked) > graph.n_edges:
            raise InvariantViolation("exploration did not stabilize")
    return BackboneTrace(graph, start, stop, incs, path, walked, frozenset(explored))


def box_mask(graph, radius, center=None) -> np.ndarray:
    """Boolean mask of the vertices in ``Lambda_radius(center)``."""
    cx, cy = (Fraction(0), Fraction(0)) if center is None else (as_fraction(c) for c in center)
    r = as_fraction(radius)
    a = graph.a
    # compare in integer units of a / denominator to stay exact
    q = math.lcm(a.denominator, cx.denominator, cy.denominator, r.denominator)
    px = graph.coords[:, 0] * int(a * q)
    py = graph.coords[:, 1] * int(a * q)
    return (np.abs(px - int(cx * q)) <= int(r * q)) & (np.abs(py - int(cy * q)) <= int(r * q))


def outside_box(graph, radius, center=None) -> set:
    """Vertices outside ``Lambda_radius(center)`` (``center`` a point, default origin)."""
    return set(np.flatnonzero(~box_mask(graph, radius, center)).tolist())


def explore_to_radius(n, start: int, radius, center=None, graph=None) -> BackboneTrace:
    """Explore from ``start`` until the backbone leaves ``Lambda_radius(center)`` or hits the ghost."""
    graph = n.graph if isinstance(n, Current) else graph
    return explore_backbone(n, start, outside_box(graph, radius, center), graph)


def explore_stages(n, start: int, n_stages: int, spacing=9, graph=None) -> list[BackboneTrace]:
    """Traces up to ``Lambda_{spacing*i}^c`` for ``i = 1..n_stages``.

    Exploration is deterministic, so each trace extends the previous one.
    Stages stop early once the ghost is hit.
    """
    graph = n.graph if isinstance(n, Current) else graph
    out = []
    for i in range(1, n_stages + 1):
        t = explore_to_radius(n, start, spacing * i, graph.point(start), graph)
        out.append(t)
        if t.hit_ghost:
            break
    return out


def _direction(graph, u: int, v: int) -> tuple[int, int]:
    du = graph.coords[v] - graph.coords[u]
    return int(du[0]), int(du[1])


def revisit_turns(trace: BackboneTrace) -> list[tuple[int, bool]]:
    """``(vertex, turned)`` for every pass through a vertex visited twice.

    The start vertex is left out: its first visit has no incoming edge.
    """
    g = trace.graph
    visits: dict = {}
    for i in range(1, len(trace.path) - 1):
        visits.setdefault(trace.path[i], []).append(i)
    out = []
    for v, idx in sorted(visits.items()):
        if len(idx) < 2 or v == trace.start:
            continue
        for i in idx:
            d_in = _direction(g, trace.path[i - 1], v)
            d_out = _direction(g, v, trace.path[i + 1])
            out.append((v, d_in != d_out))
    return out


def check_revisits(trace: BackboneTrace) -> None:
    """Raise if the path passes straight through a vertex it visits twice."""
    bad = [v for v, turned in revisit_turns(trace) if not turned]
    if bad:
        raise InvariantViolation(f"backbone passes straight through revisited vertex {bad[0]}")


# -- explored domains ------------------------------------------------------
@dataclass
class ExploredDomain:
    """``D_i`` and ``T_i`` around the endpoint ``x_i`` of a staged exploration."""

    x: int
    d: int
    d_prime: int
    omega: frozenset
    omega_tilde: frozenset
    D: frozenset
    T: frozenset
    ring: list = field(default_factory=list)


def _ring(graph, x: int, radius) -> list[int]:
    """Vertices at sup-distance exactly ``radius`` from ``x``."""
    r = radius / graph.a
    if r.denominator != 1:
        raise GeometryError(f"radius {radius} is not a multiple of the spacing {graph.a}")
    r = int(r)
    cx, cy = (int(c) for c in graph.coords[x])
    out = []
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            if max(abs(dx), abs(dy)) == r and (cx + dx, cy + dy) in graph.index:
                out.append(graph.index[(cx + dx, cy + dy)])
    return out


def _clockwise_from(graph, x: int, outward: tuple[int, int], vertices) -> list[int]:
    """Sort ``vertices`` by clockwise angle around ``x`` starting at ``outward``."""
    a0 = math.atan2(outward[1], outward[0])
    cx, cy = graph.coords[x]

    def key(v):
        dx, dy = graph.coords[v][0] - cx, graph.coords[v][1] - cy
        return (a0 - math.atan2(dy, dx)) % (2 * math.pi)

    return sorted(vertices, key=key)


def _component(graph, seed: int, allowed: set, blocked_edges: set) -> set:
    seen = {seed}
    stack = [seed]
    while stack:
        u = stack.pop()
        for k in range(4):
            e = int(graph.edge_at[u, k])
            if e < 0 or e in blocked_edges:
                continue
            w = int(graph.nbr[u, k])
            if w in allowed and w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def explored_domain(trace: BackboneTrace, graph=None, x_i: int | None = None,
                    extra_explored: Iterable[int] = (), radius=1, outer=2) -> ExploredDomain:
    """Construct ``D_i`` and ``T_i`` for a trace that stopped at ``x_i``.

    The ring ``dLambda_radius(x_i)`` is ordered clockwise starting from the
    outward direction (the last step of the path). ``d`` and ``d'`` are the
    first and last explored ring vertices in that order. ``Omega~`` is the
    arc from ``d'`` through the outward point back to ``d`` (both included);
    ``D_i`` is the component of ``x_i`` once explored edges and ``Omega~``
    are removed. ``T_i`` adds what ``x_i`` reaches inside
    ``Lambda_outer(x_i)`` avoiding explored edges and edges along its
    boundary. ``extra_explored`` holds further removed edges (for example
    the exploration from the other source).
    """
    graph = graph or trace.graph
    x = trace.end if x_i is None else int(x_i)
    if trace.end != x or trace.hit_ghost:
        raise ContractError(f"trace ends at {trace.end}, not at lattice vertex {x}")
    if len(trace.path) < 2:
        raise GeometryError("trace has no path to orient the domain")
    removed = set(trace.explored) | {int(e) for e in extra_explored}
    seen_v = explored_vertices(graph, removed)
    ring = _ring(graph, x, radius)
    outward = _direction(graph, trace.path[-2], x)
    ordered = _clockwise_from(graph, x, outward, ring)
    hit = [i for i, v in enumerate(ordered) if v in seen_v]
    if not hit:
        raise GeometryError(f"explored backbone does not meet the ring around vertex {x}")
    lo, hi = hit[0], hit[-1]
    omega = frozenset(ordered[lo + 1: hi])
    omega_t = frozenset(ordered[: lo + 1] + ordered[hi:])
    allowed = set(range(graph.n_vertices)) - omega_t
    D = _component(graph, x, allowed, removed)

    big = set(np.flatnonzero(box_mask(graph, outer, graph.point(x))).tolist())
    edge_ring = set(_ring(graph, x, outer))
    rim = {int(e) for v in edge_ring for e in graph.edge_at[v] if e >= 0
           and graph.other_end(int(e), v) in edge_ring}
    T = _component(graph, x, big, removed | rim) | D
    return ExploredDomain(x, ordered[lo], ordered[hi], omega, omega_t,
                          frozenset(D), frozenset(T), ordered)


# -- Markov property ---------------------------------------------------------
@dataclass
class MarkovReport:
    """Conditional law off ``F`` given the explored backbone versus the fresh law."""

    tv: float
    p_event: float
    ends: list
    empty: bool = False
    reason: str = ""

    def ok(self, tol: float = 1e-12) -> bool:
        return self.empty or self.tv < tol

    def to_dict(self) -> dict:
        return {"tv": self.tv, "p_event": self.p_event, "ends": self.ends,
                "empty": self.empty, "reason": self.reason}


def _as_mask(F) -> int:
    if isinstance(F, (int, np.integer)):
        return int(F)
    return sum(1 << int(e) for e in set(F))


def _exploration_table(law, start: int, stop) -> tuple[np.ndarray, np.ndarray]:
    """Explored mask and endpoint for every odd pattern of ``law``."""
    g = law.spec.graph
    masks = np.zeros(len(law.patterns), dtype=np.int64)
    ends = np.zeros(len(law.patterns), dtype=np.int64)
    for k, pat in enumerate(law.patterns):
        t = explore_backbone(int(pat), start, stop, g)
        masks[k] = t.explored_mask()
        ends[k] = t.end
    return masks, ends


def verify_markov(graph, x: int, stop: Iterable[int], F, spec: CurrentMeasureSpec,
                  law=None) -> MarkovReport:
    """Exact check that exploring ``F`` leaves a fresh current on ``Lambda \\ F``.

    ``spec`` has sources ``{s, x}``; the backbone is explored from ``s``
    until ``stop`` (which should contain ``x``). Given that the explored set
    equals ``F`` and the backbone ended at ``x~``, the odd pattern off ``F``
    is compared with the law with sources ``{x~, x}`` and couplings zeroed
    on ``F``. Even/zero splits of non-odd edges are independent with the
    same per-edge parameters on both sides, so the odd-pattern distance is
    the full distance. If the event is met with several endpoints the worst
    one is reported.
    """
    x = int(x)
    src = set(spec.sources)
    if x not in src or len(src) != 2:
        raise ContractError(f"sources must be a pair containing {x}, got {sorted(src)}")
    s = (src - {x}).pop()
    law = law or enumerate_sourced(spec)
    if law.empty:
        return MarkovReport(0.0, 0.0, [], True, law.reason)
    fmask = _as_mask(F)
    masks, ends = _exploration_table(law, s, stop)
    on = masks == fmask
    p_q = float(law.probs[on].sum())
    if p_q <= 0:
        return MarkovReport(0.0, 0.0, [], True, "explored set F is unreachable")
    worst = 0.0
    end_list = sorted(set(int(v) for v in ends[on]))
    for xe in end_list:
        sel = on & (ends == xe)
        cond: dict = {}
        for pat, p in zip(law.patterns[sel] & ~fmask, law.probs[sel]):
            cond[int(pat)] = cond.get(int(pat), 0.0) + float(p)
        tot = sum(cond.values())
        c = spec.couplings.copy()
        for e in range(graph.n_edges):
            if (fmask >> e) & 1:
                c[e] = 0.0
        fresh = enumerate_sourced(CurrentMeasureSpec(graph, frozenset({xe}) ^ {x}, c))
        ref = {} if fresh.empty else {int(p): float(q) for p, q in zip(fresh.patterns, fresh.probs)}
        keys = set(cond) | set(ref)
        tv = 0.5 * sum(abs(cond.get(k, 0.0) / tot - ref.get(k, 0.0)) for k in keys)
        worst = max(worst, tv)
    return MarkovReport(worst, p_q, end_list)


def sample_markov_instances(graph, spec: CurrentMeasureSpec, x: int, n_instances: int,
                            seed: int = 0) -> list[MarkovReport]:
    """Verify the Markov property on explored sets drawn from real explorations.

    Each instance draws a stop set containing ``x`` and an odd pattern from
    the exact law, explores it, and verifies the resulting ``F``.
    """
    law = enumerate_sourced(spec)
    if law.empty:
        return []
    s = (set(spec.sources) - {int(x)}).pop()
    rng = np.random.default_rng(stream_seed(seed, 13))
    others = [v for v in range(graph.n_vertices) if v not in (s, int(x))]
    out = []
    for _ in range(n_instances):
        extra = [v for v in others if rng.random() < 0.3]
        stop = {int(x)} | set(extra)
        pat = int(rng.choice(law.patterns, p=law.probs))
        t = explore_backbone(pat, s, stop, graph)
        out.append(verify_markov(graph, x, stop, t.explored, spec, law))
    return out


def sources_on_explored(trace: BackboneTrace, odd_mask: int) -> frozenset:
    """Sources of the current restricted to the explored edges."""
    return mask_sources(trace.graph, odd_mask & trace.explored_mask())
