"""Exact checks linking currents, FK clusters and Ising correlations.

* overlaying a traced ``{x, y}`` current with independent
  Bernoulli(``1 - e^{-beta_e}``) bonds gives FK conditioned on ``x <-> y``;
* the switching identity for the truncated two-point function;
* domination of ``phi(. | x <-> y)`` by the traced current on decreasing events.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .currents import CurrentMeasureSpec, enumerate_double, enumerate_sourced
from .errors import ContractError
from .events import Connected, ConfigSpace, EdgeOpen, Event, Law, Or, bernoulli_overlay
from .fk import BondConfig, FkParams, enumerate_fk
from .ising_exact import SpinParams, exact_correlations
from .records import stream_seed


def overlay_probs(graph, params: FkParams) -> np.ndarray:
    """Per-edge overlay parameter ``1 - exp(-beta_e)``."""
    return -np.expm1(-params.couplings(graph))


def overlay_couple(traced: BondConfig, params: FkParams, seed: int,
                   overlay: np.ndarray | None = None) -> BondConfig:
    """``omega(e) = max(n(e), X(e))`` with independent ``X(e)``.

    ``overlay`` fixes ``X`` explicitly instead of drawing it from ``seed``.
    """
    g = traced.graph
    if overlay is None:
        rng = np.random.default_rng(stream_seed(seed, 7))
        overlay = rng.random(g.n_edges) < overlay_probs(g, params)
    overlay = np.asarray(overlay, dtype=bool)
    if overlay.shape != traced.open.shape:
        raise ContractError("overlay must have one entry per edge")
    return BondConfig(g, traced.open | overlay, list(traced.wiring))


def _free_only(params: FkParams):
    if params.boundary != "free":
        raise ContractError("the current coupling is stated for free boundary conditions")


@dataclass
class CouplingReport:
    """Distance between the overlaid current law and conditioned FK."""

    x: int
    y: int
    tv: float
    p_connect: float
    empty: bool = False
    reason: str = ""

    def ok(self, tol: float = 1e-10) -> bool:
        return self.empty or self.tv < tol

    def to_dict(self) -> dict:
        return asdict(self)


def coupling_laws(graph, x: int, y: int, params: FkParams = FkParams()):
    """``(overlaid traced-current law, FK law, P(x <-> y))``; laws are ``None`` if empty."""
    _free_only(params)
    space = ConfigSpace(graph)
    fk = enumerate_fk(graph, params, space)
    conn = Connected([x], [y]).indicator(space)
    p_conn = float(fk.probs[conn].sum())
    spec = CurrentMeasureSpec(graph, frozenset({x}) ^ {y},
                              params.couplings(graph))
    cur = enumerate_sourced(spec)
    if p_conn <= 0 or cur.empty:
        return None, None, p_conn
    traced = cur.trace_law(space)
    mixed = Law(space, bernoulli_overlay(traced.probs, overlay_probs(graph, params)))
    return mixed, fk.conditional(conn), p_conn


def verify_coupling_law(graph, x: int, y: int, params: FkParams = FkParams()) -> CouplingReport:
    """Exact total-variation distance between the two sides of the coupling."""
    mixed, cond, p_conn = coupling_laws(graph, x, y, params)
    if mixed is None:
        return CouplingReport(x, y, 0.0, p_conn, empty=True,
                              reason="x and y are never connected")
    return CouplingReport(x, y, mixed.tv(cond), p_conn)


# -- decreasing events ---------------------------------------------------
def random_decreasing_event(graph, rng: np.random.Generator, max_terms: int = 3) -> Event:
    """Complement of a random union of edge-open and connection events."""
    n = graph.n_total_vertices
    ev = None
    for _ in range(int(rng.integers(1, max_terms + 1))):
        if rng.random() < 0.5:
            term = EdgeOpen(int(rng.integers(graph.n_edges)))
        else:
            u, v = rng.choice(n, size=2, replace=False)
            term = Connected([int(u)], [int(v)], via_ghost=bool(rng.random() < 0.5))
        ev = term if ev is None else Or(ev, term)
    return ~ev


@dataclass
class DominationReport:
    """``P_traced(A) - phi(A | x <-> y)`` for each certified decreasing event."""

    gaps: list = field(default_factory=list)
    names: list = field(default_factory=list)
    empty: bool = False

    @property
    def min_gap(self) -> float:
        return min(self.gaps, default=0.0)

    def ok(self, tol: float = 1e-12) -> bool:
        return self.min_gap >= -tol

    def to_dict(self) -> dict:
        return {"min_gap": self.min_gap, "n_events": len(self.gaps), "empty": self.empty}


def verify_decreasing_domination(graph, x: int, y: int, params: FkParams = FkParams(),
                                 events=None, n_events: int = 10, seed: int = 0) -> DominationReport:
    """Traced current dominates conditioned FK on decreasing events.

    Without explicit ``events``, random decreasing events are drawn and each
    is machine-checked to be decreasing before use.
    """
    _free_only(params)
    space = ConfigSpace(graph)
    fk = enumerate_fk(graph, params, space)
    conn = Connected([x], [y]).indicator(space)
    cur = enumerate_sourced(CurrentMeasureSpec(graph, frozenset({x}) ^ {y}, params.couplings(graph)))
    if cur.empty or fk.probs[conn].sum() <= 0:
        return DominationReport(empty=True)
    traced = cur.trace_law(space)
    cond = fk.conditional(conn)
    rep = DominationReport()
    if events is None:
        rng = np.random.default_rng(stream_seed(seed, 11))
        events = [random_decreasing_event(graph, rng) for _ in range(n_events)]
    for ev in events:
        ind = ev.indicator(space)
        if not space.is_increasing(~ind):
            raise ContractError(f"event {ev!r} is not decreasing")
        rep.gaps.append(traced.prob(ind) - cond.prob(ind))
        rep.names.append(repr(ev))
    return rep


# -- truncated two-point function ------------------------------------------
@dataclass
class TruncationReport:
    """Both sides of the switching identity and the field-monotonicity chain."""

    x: int
    y: int
    truncated: float
    product: float
    two_point: float
    p_disconnect: float
    truncated_full: float | None = None

    @property
    def residual(self) -> float:
        return abs(self.truncated - self.product)

    @property
    def chain_ok(self) -> bool:
        if self.truncated_full is None:
            return True
        return self.truncated_full <= self.truncated + 1e-12

    def ok(self, tol: float = 1e-10) -> bool:
        return self.residual < tol and self.chain_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residual"] = self.residual
        d["chain_ok"] = self.chain_ok
        return d


def verify_truncation_identity(graph, x: int, y: int, field, beta: float | None = None,
                               full_field=None) -> TruncationReport:
    """Check ``<s_x; s_y> = <s_x s_y> (P^{xy} x P^0)(x not<-> g)`` exactly.

    ``field`` is the per-vertex effective field (typically zeroed near
    ``x`` and ``y``). With ``full_field`` the inequality
    ``<s_x; s_y>_full <= <s_x; s_y>_field`` is evaluated as well.
    """
    beta = SpinParams().beta if beta is None else beta
    sp = SpinParams(beta, np.asarray(field, dtype=float))
    both, sx, sy = exact_correlations(graph, [[x, y], [x], [y]], sp)
    spec = CurrentMeasureSpec.ising(graph, {x, y}, beta, field)
    law = enumerate_double(spec, spec.with_sources(()))
    if getattr(graph, "ghost", None) is None:
        p_dis = 1.0
    else:
        p_dis = 1.0 - law.prob(Connected([x], [graph.ghost]))
    full = None
    if full_field is not None:
        fb, fx, fy = exact_correlations(graph, [[x, y], [x], [y]],
                                        SpinParams(beta, np.asarray(full_field, dtype=float)))
        full = float(fb - fx * fy)
    return TruncationReport(x, y, float(both - sx * sy), float(both * p_dis), float(both),
                            float(p_dis), full)
