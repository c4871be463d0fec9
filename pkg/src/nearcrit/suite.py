"""Batteries of exact identity checks and sampler validations.

:func:`exact_suite` runs every exact identity over a fixed family of small
graphs; :func:`sampler_suite` compares the worm and Swendsen-Wang samplers
with the exact oracles; :func:`extremal_suite` checks the extremal-length
solvers. All return JSON-friendly reports with a pass flag.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backbone import sample_markov_instances
from .coupling import (verify_coupling_law, verify_decreasing_domination,
                       verify_truncation_identity)
from .currents import CurrentMeasureSpec, enumerate_sourced, worm_run
from .events import Connected, EdgeOpen
from .fk import (FkParams, enumerate_fk, ghost_lemma_check, sw_configs, translate_event,
                 verify_fkg_mon)
from .ising_exact import SpinParams, exact_correlation
from .errors import GeometryError
from .extremal_length import extremal_length, extremal_length_oracle, rayleigh_check
from .lattice import (BETA_C, Quad, SimpleGraph, build_from_points, cycle_graph, dual_quad,
                      path_graph, rectangle_quad)
from .records import stream_seed

TOLERANCES = {"ghostcor": 1e-10, "truncation": 1e-10, "coupling": 1e-10, "markov": 1e-12,
              "ghost_lemma": 1e-12, "fkg_mon": 1e-12, "domination": 1e-12}

# lattice animals (integer coordinates) used for the backbone and domain checks
SHAPES = {
    "bar2": [(0, 0), (1, 0)],
    "bar3": [(0, 0), (1, 0), (2, 0)],
    "bar4": [(0, 0), (1, 0), (2, 0), (3, 0)],
    "bar5": [(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)],
    "square": [(0, 0), (1, 0), (0, 1), (1, 1)],
    "ell": [(0, 0), (1, 0), (2, 0), (0, 1), (0, 2)],
    "tee": [(0, 0), (1, 0), (2, 0), (1, 1), (1, 2)],
    "plus": [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)],
    "pee": [(0, 0), (1, 0), (0, 1), (1, 1), (0, 2)],
    "zed": [(0, 0), (1, 0), (1, 1), (2, 1), (2, 2)],
}


@dataclass
class Instance:
    name: str
    graph: object
    field: np.ndarray
    lattice: bool


def _edge_count(g) -> int:
    return int(g.n_edges)


def _random_graph(rng: np.random.Generator, n: int, m: int) -> SimpleGraph:
    """Connected random simple graph: a random spanning tree plus extra edges."""
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[i]), int(order[rng.integers(i)])))) for i in range(1, n)}
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in edges]
    rng.shuffle(pairs)
    edges |= set(pairs[: max(0, m - len(edges))])
    return SimpleGraph(n, sorted(edges), ghost=True)


def suite_instances(max_edges: int = 12, seed: int = 0) -> list[Instance]:
    """Fixed family of small graphs (ghost edges included in the edge count)."""
    rng = np.random.default_rng(stream_seed(seed, 21))
    out: list[Instance] = []

    def add(name, g, lattice):
        if _edge_count(g) > max_edges:
            return
        nv = g.n_vertices
        fields = {"h0": np.zeros(nv), "h03": np.full(nv, 0.3),
                  "hrand": np.round(rng.uniform(0.0, 0.8, nv), 3)}
        for tag, f in fields.items():
            out.append(Instance(f"{name}/{tag}", g, f, lattice))

    for name, pts in SHAPES.items():
        add(name, build_from_points(1, pts), True)
    for n in range(2, 7):
        add(f"path{n}", path_graph(n, ghost=True), False)
    for n in range(3, 7):
        add(f"cycle{n}", cycle_graph(n, ghost=True), False)
    for k in range(4):
        n = int(rng.integers(3, 6))
        if max_edges - n + 1 <= n - 1:
            continue
        m = int(rng.integers(n - 1, max_edges - n + 1))
        add(f"random{k}", _random_graph(rng, n, m), False)
    return out


def _ghostcor(inst: Instance) -> float:
    """Largest deviation between spin correlations and current partition-function ratios."""
    g, f = inst.graph, inst.field
    sp = SpinParams(BETA_C, f)
    base = CurrentMeasureSpec.ising(g, (), BETA_C, f)
    z0 = enumerate_sourced(base).log_partition
    worst = 0.0
    for x in range(1, g.n_vertices):
        lz = enumerate_sourced(base.with_sources({0, x})).log_partition
        ratio = math.exp(lz - z0) if lz > -math.inf else 0.0
        worst = max(worst, abs(ratio - exact_correlation(g, [0, x], sp)))
    lz = enumerate_sourced(base.with_sources({0, g.ghost})).log_partition
    ratio = math.exp(lz - z0) if lz > -math.inf else 0.0
    return max(worst, abs(ratio - exact_correlation(g, [0], sp)))


def _fkg_events(g):
    last = g.n_vertices - 1
    a = Connected([0], [last])
    b = Connected([0], [g.ghost])
    c = EdgeOpen(0)
    return [(a, b), (a, c), (b, Connected([last], [g.ghost]))]


def _grown(inst: Instance, max_edges: int):
    """Lattice animals one vertex larger than ``inst.graph`` within the edge budget."""
    g = inst.graph
    pts = [tuple(int(c) for c in p) for p in g.coords]
    have = set(pts)
    out = []
    for px, py in pts:
        for dx, dy in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            q = (px + dx, py + dy)
            if q not in have:
                big = build_from_points(1, pts + [q])
                if _edge_count(big) <= max_edges:
                    out.append(big)
                    break
        if out:
            break
    return out


@dataclass
class SuiteReport:
    """Per-check worst values, counts and pass flags."""

    worst: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    n_instances: int = 0
    max_edges: int = 0

    def record(self, check: str, value: float, name: str, bad: bool) -> None:
        self.worst[check] = max(self.worst.get(check, 0.0), float(value))
        self.counts[check] = self.counts.get(check, 0) + 1
        if bad:
            self.failures.append({"check": check, "instance": name, "value": float(value)})

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"passed": self.passed, "n_instances": self.n_instances,
                "max_edges": self.max_edges, "worst": self.worst, "counts": self.counts,
                "tolerances": TOLERANCES, "failures": self.failures}


def exact_suite(max_edges: int = 12, seed: int = 0, markov_per_graph: int = 6) -> SuiteReport:
    """Run every exact identity over :func:`suite_instances`.

    Checks: spin/current correlation ratios, the truncated-correlation
    identity and its field monotonicity, the overlay coupling, domination on
    decreasing events, the ghost lemma, FKG and domain monotonicity, and the
    Markov property of the backbone (lattice animals only, with sources at
    the first and last vertex).
    """
    rep = SuiteReport(max_edges=max_edges)
    insts = suite_instances(max_edges, seed)
    rep.n_instances = len(insts)
    for k, inst in enumerate(insts):
        g, f, name = inst.graph, inst.field, inst.name
        last = g.n_vertices - 1
        v = _ghostcor(inst)
        rep.record("ghostcor", v, name, v > TOLERANCES["ghostcor"])
        tr = verify_truncation_identity(g, 0, last, f, full_field=f + 0.2)
        rep.record("truncation", tr.residual, name,
                   tr.residual > TOLERANCES["truncation"] or not tr.chain_ok)
        params = FkParams(field=tuple(f))
        cp = verify_coupling_law(g, 0, last, params)
        rep.record("coupling", cp.tv, name, not cp.ok(TOLERANCES["coupling"]))
        dom = verify_decreasing_domination(g, 0, last, params, n_events=5,
                                           seed=stream_seed(seed, 22, k))
        rep.record("domination", max(0.0, -dom.min_gap), name, not dom.ok(TOLERANCES["domination"]))
        law = enumerate_fk(g, params)
        gl = ghost_lemma_check(g, params, law)
        rep.record("ghost_lemma", gl.max_deviation, name,
                   gl.max_deviation > TOLERANCES["ghost_lemma"])
        big_law, big = None, None
        if inst.lattice:
            grown = _grown(inst, max_edges)
            if grown:
                big = grown[0]
                # same field on the shared vertices, zero on the new one
                bf = np.zeros(big.n_vertices)
                for vtx in range(g.n_vertices):
                    bf[big.vertex(g.coords[vtx])] = f[vtx]
                big_law = enumerate_fk(big, FkParams(field=tuple(bf)))
        for ea, eb in _fkg_events(g):
            fm = verify_fkg_mon(g, params, ea, eb)
            gaps = [fm.fkg_gap]
            if big_law is not None:
                for ev, p_small in ((ea, fm.prob_a), (eb, fm.prob_b)):
                    gaps.append(big_law.prob(translate_event(ev, g, big)) - p_small)
            worst_gap = min(gaps)
            rep.record("fkg_mon", max(0.0, -worst_gap), name, worst_gap < -TOLERANCES["fkg_mon"])
        if inst.lattice:
            spec = CurrentMeasureSpec.ising(g, {0, last}, BETA_C, f)
            for r in sample_markov_instances(g, spec, last, markov_per_graph,
                                             seed=stream_seed(seed, 23, k)):
                if r.empty:
                    continue
                rep.record("markov", r.tv, name, not r.ok(TOLERANCES["markov"]))
    return rep


# -- sampler validation ------------------------------------------------------
def oracle_graphs():
    """Small graphs with exact laws used to validate the samplers."""
    out = [("edge", path_graph(2, ghost=True), np.zeros(2)),
           ("path3/h0.3", path_graph(3, ghost=True), np.full(3, 0.3)),
           ("triangle/h0", cycle_graph(3, ghost=True), np.zeros(3)),
           ("box2/h0", build_from_points(1, SHAPES["square"]), np.zeros(4)),
           ("box2/h0.2", build_from_points(1, SHAPES["square"]), np.full(4, 0.2)),
           ("ell/hrand", build_from_points(1, SHAPES["ell"]), np.array([0.1, 0.5, 0.0, 0.3, 0.2]))]
    return out


def _marginal_tv_classes(exact: np.ndarray, labels: np.ndarray) -> float:
    emp = np.stack([(labels == c).mean(axis=0) for c in range(3)], axis=1)
    return float(0.5 * np.abs(emp - exact).sum(axis=1).max())


def sampler_suite(n_samples: int = 100_000, seed: int = 0, tol: float = 0.01) -> dict:
    """Per-edge marginal TV of worm and Swendsen-Wang samples against the exact laws.

    For the worm both the empty source set and a two-point source set are
    tested; the SW check compares open-edge marginals with the FK law.
    """
    rows = []
    for k, (name, g, f) in enumerate(oracle_graphs()):
        last = g.n_vertices - 1
        for tag, A in (("empty", ()), ("pair", (0, last))):
            spec = CurrentMeasureSpec.ising(g, A, BETA_C, f)
            exact = enumerate_sourced(spec).class_marginals()
            run = worm_run(spec, n_samples, stream_seed(seed, 24, k, len(A)), thin=10)
            rows.append({"graph": name, "sampler": f"worm/{tag}",
                         "tv": _marginal_tv_classes(exact, run.labels)})
        params = FkParams(field=tuple(f))
        law = enumerate_fk(g, params)
        bits = ((np.arange(law.space.size)[:, None] >> np.arange(g.n_edges)) & 1).astype(float)
        p_open = law.probs @ bits
        cfg = sw_configs(g, params, n_samples, stream_seed(seed, 25, k))
        tv = float(np.abs(cfg.mean(axis=0) - p_open).max())
        rows.append({"graph": name, "sampler": "swendsen-wang", "tv": tv})
    worst = max(r["tv"] for r in rows)
    return {"passed": worst < tol, "worst_tv": worst, "tol": tol, "n_samples": n_samples,
            "rows": rows}


# -- extremal length ---------------------------------------------------------
def _quad_without(q: Quad, drop: set) -> Quad:
    edges = [e for k, e in enumerate(q.edges) if k not in drop]
    return Quad(q.n_vertices, edges, q.arcs, coords=q.coords)


def random_quads(n: int = 50, seed: int = 0, max_side: int = 5) -> list[Quad]:
    """Grid rectangles with random interior edges removed, arcs still joined."""
    rng = np.random.default_rng(stream_seed(seed, 26))
    out = []
    while len(out) < n:
        w, h = (int(t) for t in rng.integers(1, max_side + 1, 2))
        q = rectangle_quad(w, h)
        boundary = set().union(*(q.arc_set(k) for k in ("ab", "bc", "cd", "da")))
        inner = [k for k, (u, v) in enumerate(q.edges) if not (u in boundary and v in boundary)]
        drop = set(int(k) for k in rng.permutation(inner)[: int(rng.integers(0, len(inner) // 3 + 1))])
        cand = _quad_without(q, drop)
        try:
            extremal_length(cand)
        except GeometryError:
            continue
        out.append(cand)
    return out


def parallel_paths_quad(k: int, m: int) -> Quad:
    """``m`` disjoint horizontal paths of ``k`` edges between the left and right arcs."""
    coords = [(i, j) for j in range(m) for i in range(k + 1)]
    vid = {c: t for t, c in enumerate(coords)}
    edges = [(vid[(i, j)], vid[(i + 1, j)]) for j in range(m) for i in range(k)]
    arcs = {"ab": [vid[(0, j)] for j in range(m - 1, -1, -1)],
            "bc": [vid[(i, 0)] for i in range(k + 1)],
            "cd": [vid[(k, j)] for j in range(m)],
            "da": [vid[(i, m - 1)] for i in range(k, -1, -1)]}
    return Quad(len(coords), edges, arcs, coords=coords)


def _rayleigh_paths(q: Quad, rng: np.random.Generator, count: int) -> list[list[int]]:
    """Down-across-up paths hanging from the top arc of a grid rectangle."""
    pts = {tuple(int(c) for c in p): t for t, p in enumerate(q.coords)}
    w = max(p[0] for p in pts)
    h = max(p[1] for p in pts)
    out = []
    for _ in range(count):
        if w < 1 or h < 2:
            break
        x1, x2 = sorted(int(t) for t in rng.choice(np.arange(w + 1), 2, replace=False))
        depth = int(rng.integers(1, h))
        col1 = [(x1, h - d) for d in range(depth + 1)]
        row = [(x, h - depth) for x in range(x1 + 1, x2 + 1)]
        col2 = [(x2, h - d) for d in range(depth - 1, -1, -1)]
        out.append([pts[c] for c in col1 + row + col2])
    return out


def extremal_suite(seed: int = 0, n_quads: int = 50) -> dict:
    """Dirichlet vs variational oracle, closed forms, Rayleigh monotonicity, duality."""
    rng = np.random.default_rng(stream_seed(seed, 27))
    worst = {"oracle": 0.0, "closed_form": 0.0, "rayleigh": 0.0, "duality": 0.0}
    counts = dict.fromkeys(worst, 0)

    def note(check, value):
        worst[check] = max(worst[check], float(value))
        counts[check] += 1

    for q in random_quads(n_quads, seed):
        note("oracle", abs(extremal_length(q) - extremal_length_oracle(q)))
    for k in range(1, 6):
        for m in range(1, 5):
            note("closed_form", abs(extremal_length(parallel_paths_quad(k, m)) - k / m))
            note("closed_form", abs(extremal_length(rectangle_quad(k, m - 1)) - k / m))
    for w in range(1, 7):
        for h in range(1, 7):
            q = rectangle_quad(w, h)
            note("duality", abs(extremal_length(q) * extremal_length(dual_quad(q)) - 1.0))
            for path in _rayleigh_paths(q, rng, 3):
                note("rayleigh", rayleigh_check(q, path).violation)
    tol = {"oracle": 1e-6, "closed_form": 1e-9, "rayleigh": 1e-9, "duality": 1e-6}
    return {"passed": all(worst[k] <= tol[k] for k in worst), "worst": worst,
            "counts": counts, "tolerances": tol}
