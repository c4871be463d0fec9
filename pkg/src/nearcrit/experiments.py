"""Scaled-down Monte Carlo scans and the fits applied to them.

Each scan returns :class:`EstimateRecord` rows plus, where relevant, a
:class:`FitResult`. Every chain gets its own seed from
:func:`~nearcrit.records.stream_seed`, so output depends only on the
configuration and the global seed.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels
from .backbone import box_mask
from .currents import ODD, ZERO, CurrentMeasureSpec, _incidence, _tree_path
from .errors import ContractError, ParameterError
from .fk import FkParams, _sw_arrays, _query_mask, sw_connection_series
from .lattice import (BETA_C, as_fraction, box_region, build_annulus, build_box,
                      build_from_points, zeroed_field)
from .records import EstimateRecord, batch_stderr, jackknife, stream_seed

__all__ = ["EstimateRecord", "FitResult", "fit_power_law", "fit_exponential",
           "one_arm_scan", "critical_twopoint_scan", "mass_scan", "backbone_survival",
           "near_critical_rsw_ratio", "mixing_ratio", "cluster_moment_scan"]


class FitQualityWarning(UserWarning):
    """A fit ran on too few points or too narrow a range to be trusted."""


# -- fits ----------------------------------------------------------------------
@dataclass
class FitResult:
    """Weighted least-squares fit.

    ``exponent`` is the power-law exponent or the exponential rate;
    ``coef``/``cov`` hold all parameters (intercept first).
    """

    model: str
    exponent: float
    stderr: float
    coef: np.ndarray
    cov: np.ndarray
    chi2: float
    dof: int
    r2: float
    residuals: np.ndarray
    x: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if not (np.all(np.isfinite(self.coef)) and np.all(np.isfinite(self.cov))):
            raise ContractError("fit produced non-finite parameters")

    def to_dict(self) -> dict:
        return {"model": self.model, "exponent": float(self.exponent),
                "stderr": float(self.stderr), "coef": [float(c) for c in self.coef],
                "cov": [[float(c) for c in row] for row in self.cov],
                "chi2": float(self.chi2), "dof": int(self.dof), "r2": float(self.r2),
                "residuals": [float(r) for r in self.residuals],
                "x": [float(v) for v in self.x], "notes": list(self.notes)}


def _wls(A: np.ndarray, y: np.ndarray, sigma: np.ndarray | None):
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    res = y - A @ coef
    chi2 = float((w * res ** 2).sum())
    dof = len(y) - A.shape[1]
    cov = np.linalg.pinv((A * w[:, None]).T @ A)
    if sigma is None and dof > 0:
        cov = cov * chi2 / dof
    ybar = np.average(y, weights=w)
    tot = float((w * (y - ybar) ** 2).sum())
    r2 = 1.0 - chi2 / tot if tot > 0 else 1.0
    return coef, cov, chi2, dof, r2, res


def _check_span(x: np.ndarray, decades: float, what: str, notes: list) -> None:
    if len(x) < 3:
        notes.append(f"only {len(x)} points in the {what} fit")
    span = math.log10(x.max() / x.min()) if len(x) and x.min() > 0 else 0.0
    if span < decades - 1e-9:
        notes.append(f"{what} fit spans {span:.2f} decades (< {decades})")
    for n in notes:
        warnings.warn(n, FitQualityWarning, stacklevel=3)


def fit_power_law(x, y, yerr=None, min_decades: float = 0.0, decay: bool = False) -> FitResult:
    """Fit ``y = C x^k`` by weighted least squares on ``log y``.

    Args:
        x, y: positive data.
        yerr: standard errors of ``y``; unweighted when omitted.
        min_decades: span of ``x`` below which a :class:`FitQualityWarning` is raised.
        decay: report ``-k`` (a decay exponent) instead of ``k``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ParameterError("power-law fit needs positive x and y")
    sig = None if yerr is None else np.maximum(np.asarray(yerr, dtype=float) / y, 1e-300)
    A = np.vstack([np.ones_like(x), np.log(x)]).T
    coef, cov, chi2, dof, r2, res = _wls(A, np.log(y), sig)
    notes: list = []
    _check_span(x, min_decades, "power-law", notes)
    k = -coef[1] if decay else coef[1]
    return FitResult("power-law", float(k), float(math.sqrt(max(cov[1, 1], 0.0))),
                     coef, cov, chi2, dof, r2, res, x, notes)


def fit_exponential(r, corr, err, power: float = 0.25) -> FitResult:
    """Fit ``corr = C r^{-power} e^{-m r}``; the rate ``m`` is the exponent."""
    r = np.asarray(r, dtype=float)
    corr = np.asarray(corr, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.any(corr <= 0):
        raise ParameterError("exponential fit needs positive correlations")
    A = np.vstack([np.ones_like(r), -r]).T
    coef, cov, chi2, dof, r2, res = _wls(A, np.log(corr * r ** power), err / corr)
    notes: list = []
    if len(r) < 3:
        notes.append(f"only {len(r)} points in the exponential fit")
        warnings.warn(notes[-1], FitQualityWarning, stacklevel=2)
    return FitResult("exponential-with-power-correction", float(coef[1]),
                     float(math.sqrt(max(cov[1, 1], 0.0))), coef, cov, chi2, dof, r2, res, r,
                     notes)


def fit_window(corr, err, r, r_min: int = 2, snr: float = 5.0) -> np.ndarray:
    """Indices of the contiguous run from ``r_min`` with ``corr / err >= snr``."""
    keep = []
    for i in np.argsort(r):
        if r[i] < r_min:
            continue
        if not (corr[i] > 0 and err[i] > 0 and corr[i] >= snr * err[i]):
            break
        keep.append(int(i))
    return np.array(keep, dtype=np.int64)


@dataclass
class ScanResult:
    """Records of a scan, its fit (if any) and notes on skipped or flagged points."""

    records: list
    fit: FitResult | None = None
    notes: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"records": [r.to_dict() for r in self.records],
                "fit": None if self.fit is None else self.fit.to_dict(),
                "notes": list(self.notes), "summary": self.summary}


def _p_crit(beta: float = BETA_C) -> float:
    return float(-np.expm1(-2.0 * beta))


def _internal_arrays(graph, wired=(), beta: float = BETA_C):
    """Kernel edge arrays for the internal graph at zero field.

    ``wired`` vertices are chained together with always-open edges.
    """
    eu = np.ascontiguousarray(graph.edges[: graph.n_internal, 0], dtype=np.int64)
    ev = np.ascontiguousarray(graph.edges[: graph.n_internal, 1], dtype=np.int64)
    p = np.full(graph.n_internal, _p_crit(beta))
    wired = np.asarray(wired, dtype=np.int64)
    if wired.size > 1:
        eu = np.concatenate([eu, wired[:-1]])
        ev = np.concatenate([ev, wired[1:]])
        p = np.concatenate([p, np.ones(wired.size - 1)])
    return eu, ev, p, graph.n_vertices


def _frac_list(values) -> list[Fraction]:
    out = [as_fraction(v) for v in values]
    if any(v <= 0 for v in out):
        raise ParameterError("lattice spacings must be positive")
    return out


def _batch_means(x: np.ndarray, n_batches: int = 50) -> np.ndarray:
    k = min(n_batches, len(x))
    per = len(x) // k
    return x[: k * per].reshape(k, per, *x.shape[1:]).mean(axis=1)


# -- one-arm -----------------------------------------------------------------
def one_arm_probability(a, box: int = 16, budget: int = 40_000, seed: int = 0,
                        thin: int = 1, burn: int = 200) -> EstimateRecord:
    """``phi^0_{Lambda_box}(0 <-> boundary)`` at zero field with mesh ``a``."""
    t0 = time.perf_counter()
    a = as_fraction(a)
    g = build_box(a, box)
    eu, ev, p, n = _internal_arrays(g)
    o = g.vertex((0, 0))
    bd = g.inner_boundary(range(g.n_vertices))
    ptr = np.array([0, 1, 1 + len(bd)], dtype=np.int64)
    idx = np.concatenate([[o], bd]).astype(np.int64)
    s = stream_seed(seed, 1, a.numerator, a.denominator, box)
    out = _kernels.sw_connections(eu, ev, p, n, np.ones(n, dtype=np.int64), burn,
                                  int(budget) * thin, s, np.ones(len(eu), dtype=np.uint8),
                                  ptr, idx, np.zeros(1, np.int64), np.ones(1, np.int64))
    x = out[thin - 1::thin, 0].astype(float)
    return EstimateRecord("one_arm", {"a": a, "h": 0.0, "box": box, "lattice": 2 * (box * a.denominator // (2 * a.numerator)) + 1},
                          float(x.mean()), batch_stderr(x), len(x), seed,
                          time.perf_counter() - t0)


def one_arm_scan(a_grid=(1, "1/2", "1/4", "1/8"), box: int = 16, budget: int = 40_000,
                 seed: int = 0, thin: int = 1) -> ScanResult:
    """One-arm probabilities across meshes and the fitted exponent (target 1/8).

    The unit box at mesh ``a`` is modelled as ``Lambda_box`` at mesh
    ``a / box``, so ``a = 1`` already resolves ``box`` lattice steps.
    """
    a_vals = _frac_list(a_grid)
    recs = [one_arm_probability(a, box, budget, seed, thin) for a in a_vals]
    x = np.array([float(a) for a in a_vals])
    y = np.array([r.mean for r in recs])
    err = np.array([max(r.stderr, 1e-12) for r in recs])
    fit = fit_power_law(x, y, err, min_decades=1.0)
    return ScanResult(recs, fit, list(fit.notes))


# -- critical two-point function ---------------------------------------------
def _axis_pairs(g, rs, offsets=range(-4, 5, 2)):
    pu, pv, pr = [], [], []
    for r in rs:
        x0 = -(int(r) // 2)
        for off in offsets:
            pu += [g.vertex((x0, off)), g.vertex((off, x0))]
            pv += [g.vertex((x0 + r, off)), g.vertex((off, x0 + r))]
            pr += [r, r]
    return (np.array(pu, dtype=np.int64), np.array(pv, dtype=np.int64), np.array(pr))


def critical_twopoint_scan(r_grid=(4, 6, 8, 12, 16, 24, 32, 40, 48), L: int = 128,
                           budget: int = 20_000, seed: int = 0,
                           boundary: str = "bracket", n_batches: int = 50) -> ScanResult:
    """``<s_0 s_x> = phi(0 <-> x)`` at criticality on ``Lambda_L`` and its decay exponent.

    ``boundary`` is ``"free"``, ``"wired"`` or ``"bracket"`` (geometric mean of
    both, which lie on either side of the infinite-volume value).
    """
    if boundary not in ("free", "wired", "bracket"):
        raise ParameterError(f"unknown boundary {boundary!r}")
    rs = np.array(sorted(int(r) for r in r_grid))
    if rs.min() < 1 or rs.max() + 4 > L // 2 + L // 2:
        raise ParameterError("distances must lie in [1, L - 4]")
    g = build_box(1, L)
    pu, pv, pr = _axis_pairs(g, rs)
    bd = g.inner_boundary(range(g.n_vertices))
    runs = {}
    todo = ("free", "wired") if boundary == "bracket" else (boundary,)
    for k, bc in enumerate(todo):
        t0 = time.perf_counter()
        eu, ev, p, n = _internal_arrays(g, bd if bc == "wired" else ())
        s = stream_seed(seed, 2, k, L)
        cs, _, cnt = _kernels.sw_twopoint(eu, ev, p, n, np.ones(n, dtype=np.int64), 200,
                                          int(budget), n_batches, s,
                                          np.ones(len(eu), dtype=np.uint8), np.zeros(n),
                                          pu, pv)
        c = cs / cnt[:, None]
        G = np.array([c[:, pr == r].mean(axis=1) for r in rs]).T
        runs[bc] = (G.mean(0), G.std(0, ddof=1) / math.sqrt(n_batches),
                    time.perf_counter() - t0)
    recs, notes = [], []
    for bc, (m, e, wt) in runs.items():
        for r, mi, ei in zip(rs, m, e):
            recs.append(EstimateRecord("two_point", {"a": 1, "h": 0.0, "r": int(r), "L": L,
                                                     "boundary": bc},
                                       float(mi), float(ei), int(budget), seed, wt / len(rs)))
    if boundary == "bracket":
        (mf, ef, _), (mw, ew, _) = runs["free"], runs["wired"]
        mean = np.sqrt(mf * mw)
        err = 0.5 * mean * np.sqrt((ef / mf) ** 2 + (ew / mw) ** 2)
        for r, mi, ei in zip(rs, mean, err):
            recs.append(EstimateRecord("two_point", {"a": 1, "h": 0.0, "r": int(r), "L": L,
                                                     "boundary": "bracket"},
                                       float(mi), float(ei), int(budget), seed))
        for bc in ("free", "wired"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FitQualityWarning)
                f = fit_power_law(rs, runs[bc][0], runs[bc][1], decay=True)
            notes.append(f"{bc} boundary exponent {f.exponent:.4f} +- {f.stderr:.4f}")
    else:
        mean, err = runs[boundary][0], runs[boundary][1]
    fit = fit_power_law(rs, mean, err, decay=True)
    return ScanResult(recs, fit, notes + list(fit.notes))


# -- mass ------------------------------------------------------------------
DEFAULT_MASS_SIZES = {0.05: (128, 20_000), 0.1: (128, 20_000), 0.2: (64, 60_000),
                      0.3: (64, 60_000), 0.4: (64, 60_000)}


def truncated_correlations(h: float, L: int, budget: int, seed: int, r_max: int = 16,
                           n_batches: int = 50, beta: float = BETA_C):
    """Translation-averaged ``<s_0; s_r>`` on ``Lambda_L`` with a uniform field, a = 1.

    Returns ``(r, corr, err)`` with delete-one-batch jackknife errors.
    """
    g = build_box(1, L)
    eu = np.ascontiguousarray(g.edges[:, 0])
    ev = np.ascontiguousarray(g.edges[:, 1])
    n = g.n_total_vertices
    mask = np.zeros(g.n_edges, dtype=np.uint8)
    mask[: g.n_internal] = 1
    off = L // 2
    grid = np.full((L + 1, L + 1), -1, dtype=np.int64)
    for v, (x, y) in enumerate(g.coords):
        grid[x + off, y + off] = v
    rs = np.arange(1, r_max + 1, dtype=np.int64)
    lo, hi = L // 4, L - L // 4 + 1
    p = np.empty(g.n_edges)
    p[: g.n_internal] = _p_crit(beta)
    p[g.n_internal:] = -math.expm1(-2.0 * beta * h)
    gc = np.full(g.n_vertices, beta * h)
    s = stream_seed(seed, 3, int(round(h * 1e6)), L)
    cs, ts, cnt = _kernels.sw_twopoint_bulk(eu, ev, p, n, np.ones(n, dtype=np.int64), 200,
                                            int(budget), n_batches, s, mask, gc, grid, lo, hi,
                                            rs)

    def est(keep):
        c = cs[keep].sum(0) / cnt[keep].sum()
        t = ts[keep].sum() / cnt[keep].sum()
        return c - t * t

    corr, err = jackknife(est, cs)
    return rs, corr, err


def mass_scan(h_grid=(0.05, 0.1, 0.2, 0.3, 0.4), sizes=None, budget_scale: float = 1.0,
              seed: int = 0, r_min: int = 2, r_max: int = 16) -> ScanResult:
    """Fitted masses ``m(h)`` and the log-log slope of ``m`` against ``h`` (target 8/15).

    ``sizes`` maps each ``h`` to ``(L, sweeps)``; defaults are tuned for a=1.
    Points whose correlation length exceeds ``L / 8`` are flagged and dropped.
    """
    sizes = dict(DEFAULT_MASS_SIZES if sizes is None else sizes)
    recs, notes, hs, ms, es = [], [], [], [], []
    for h in h_grid:
        h = float(h)
        if h <= 0 or h > 1:
            raise ParameterError("mass scan needs 0 < h a^{15/8} <= 1")
        L, sweeps = sizes.get(h, (64, 60_000))
        sweeps = max(100, int(sweeps * budget_scale))
        t0 = time.perf_counter()
        r, corr, err = truncated_correlations(h, L, sweeps, seed, r_max)
        for ri, ci, ei in zip(r, corr, err):
            recs.append(EstimateRecord("truncated_two_point",
                                       {"a": 1, "h": h, "r": int(ri), "L": L},
                                       float(ci), float(abs(ei)), sweeps, seed))
        win = fit_window(corr, err, r, r_min)
        if len(win) < 2:
            notes.append(f"h={h}: fewer than two usable distances, point dropped")
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FitQualityWarning)
            f = fit_exponential(r[win], corr[win], err[win])
        recs.append(EstimateRecord("mass", {"a": 1, "h": h, "L": L,
                                            "window": [int(r[win[0]]), int(r[win[-1]])]},
                                   f.exponent, f.stderr, sweeps, seed,
                                   time.perf_counter() - t0))
        if f.exponent <= 0 or 1.0 / f.exponent > L / 8:
            notes.append(f"h={h}: correlation length exceeds L/8, point dropped")
            continue
        hs.append(h)
        ms.append(f.exponent)
        es.append(f.stderr)
    if len(hs) < 2:
        raise ParameterError("fewer than two usable field values")
    fit = fit_power_law(hs, ms, es)
    mono = bool(np.all(np.diff(np.array(ms)[np.argsort(hs)]) > 0))
    return ScanResult(recs, fit, notes + list(fit.notes), {"monotone": mono})


# -- backbone survival ---------------------------------------------------------
def backbone_survival(h: float = 0.2, stride=3, n_max: int = 6, a=1, budget: int = 40_000,
                      seed: int = 0, n_chains: int = 8, thin: int = 5,
                      p_heat: float = 0.25) -> ScanResult:
    """Survival of the backbone from 0 towards ``x`` across annuli of width ``stride``.

    Sources are ``0`` and ``x = ((n_max + 1) * stride, 0)`` in a box of half-side
    ``(n_max + 2) * stride``, with the field zeroed on the unit-radius boxes around
    both. ``S(i)`` is the probability that the backbone leaves ``Lambda_{2 i stride}``
    before it ends at the ghost; the hit rate of annulus ``i`` is
    ``1 - S(i) / S(i - 1)``. Errors come from a jackknife over chains.
    """
    a = as_fraction(a)
    stride = as_fraction(stride)
    if h < 0 or float(h) * float(a) ** 1.875 > 1:
        raise ParameterError("backbone survival needs 0 <= h a^{15/8} <= 1")
    if n_max < 2 or n_chains < 2:
        raise ParameterError("need n_max >= 2 and at least two chains")
    step = stride / a
    if step.denominator != 1 or step < 1:
        raise ParameterError("stride must be a positive multiple of the lattice spacing")
    step = int(step)
    t0 = time.perf_counter()
    half = (n_max + 2) * stride
    g = build_box(a, 2 * half)
    o = g.vertex((0, 0))
    x = g.vertex(((n_max + 1) * step, 0))
    f = zeroed_field(g, h, [o, x])
    spec = CurrentMeasureSpec.ising(g, {o, x}, field=f)
    ip, ie, inn = _incidence(g)
    dist = np.abs(g.coords).max(axis=1).astype(np.int64)
    r_stop = n_max * step
    per = max(1, int(budget) // n_chains)
    reach, ghost = [], []
    for c in range(n_chains):
        cl = np.where(_tree_path(spec, o, x), ODD, ZERO).astype(np.int8)
        s = stream_seed(seed, 4, c)
        r, gh, _ = _kernels.worm_backbone_reach(
            ip, ie, inn, spec.couplings, o, x, x, cl, per, thin, 50 * g.n_edges, p_heat, s,
            10 ** 15, np.ascontiguousarray(g.edge_at), np.ascontiguousarray(g.nbr),
            np.ascontiguousarray(g.ghost_edge), dist, o, r_stop)
        if len(r) < per or np.any(r < 0):
            raise ContractError("worm chain failed to produce valid currents")
        reach.append(r)
        ghost.append(gh)
    reach = np.array(reach)
    ghost = np.array(ghost).astype(bool)
    thresholds = np.array([i * step for i in range(n_max + 1)])
    # alive[c, k, i]: sample k of chain c left Lambda at radius i*step without ending at g
    alive = (~ghost[:, :, None]) | (reach[:, :, None] > thresholds[None, None, :])
    counts = alive.mean(axis=1)

    def surv(keep):
        return counts[keep].mean(axis=0)

    def rates(keep):
        sv = surv(keep)
        return 1.0 - sv[1:] / np.where(sv[:-1] > 0, sv[:-1], 1.0)

    S, S_err = jackknife(surv, counts)
    c_hat, c_err = jackknife(rates, counts)
    wt = time.perf_counter() - t0
    base = {"a": a, "h": float(h), "stride": stride, "x": [(n_max + 1) * stride, 0]}
    recs = []
    for i in range(1, n_max + 1):
        recs.append(EstimateRecord("backbone_survival", {**base, "index": i},
                                   float(S[i]), float(S_err[i]), per * n_chains, seed,
                                   wt / (2 * n_max)))
        recs.append(EstimateRecord("ghost_hit_rate", {**base, "index": i},
                                   float(c_hat[i - 1]), float(c_err[i - 1]), per * n_chains,
                                   seed, wt / (2 * n_max)))
    summary = {"hit_rates": [float(v) for v in c_hat]}
    fit = None
    notes: list = []
    idx = np.arange(1, n_max + 1)
    if h > 0:
        if np.all(S[1:] > 0):
            fit = fit_exponential(idx, S[1:], np.maximum(S_err[1:], 1e-12), power=0.0)
            summary["r2"] = fit.r2
            summary["decay_rate"] = fit.exponent
        else:
            notes.append("survival reached zero; no log-linear fit")
        mid = c_hat[1:]
        if np.all(mid > 0):
            summary["hit_rate_spread"] = float(mid.max() / mid.min())
        summary["min_hit_rate"] = float(c_hat.min())
    return ScanResult(recs, fit, notes, summary)


# -- near-critical RSW ratio ---------------------------------------------------
@dataclass
class AnnulusSystem:
    """Internal graph with two marked boundary sets, both wired together.

    ``side`` is 1 on the inner set, 2 on the outer set and 0 elsewhere.
    """

    eu: np.ndarray
    ev: np.ndarray
    p: np.ndarray
    n: int
    side: np.ndarray
    beta: float = BETA_C

    def __post_init__(self):
        self.eu = np.ascontiguousarray(self.eu, dtype=np.int64)
        self.ev = np.ascontiguousarray(self.ev, dtype=np.int64)
        self.p = np.ascontiguousarray(self.p, dtype=float)
        self.side = np.ascontiguousarray(self.side, dtype=np.int64)
        if not (np.any(self.side == 1) and np.any(self.side == 2)):
            raise ParameterError("both boundary sets must be non-empty")
        inc = [[] for _ in range(self.n)]
        for e, (u, v) in enumerate(zip(self.eu, self.ev)):
            inc[u].append((e, v))
            inc[v].append((e, u))
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        self.indptr[1:] = np.cumsum([len(x) for x in inc])
        self.adj_e = np.array([e for x in inc for e, _ in x], dtype=np.int64)
        self.adj_v = np.array([w for x in inc for _, w in x], dtype=np.int64)

    @property
    def wired(self) -> np.ndarray:
        return self.side > 0

    @classmethod
    def annulus(cls, n: int, beta: float = BETA_C) -> "AnnulusSystem":
        """``A_{n, 2n}`` at a = 1; the inner and outer rings are the marked sets."""
        pts = build_annulus(n, 2 * n).lattice_points(1)
        g = build_from_points(1, pts)
        sup = np.abs(g.coords).max(axis=1)
        side = np.zeros(g.n_vertices, dtype=np.int64)
        side[sup == sup.min()] = 1
        side[sup == sup.max()] = 2
        return cls(g.edges[: g.n_internal, 0], g.edges[: g.n_internal, 1],
                   np.full(g.n_internal, _p_crit(beta)), g.n_vertices, side, beta)

    def sw_arrays(self):
        w = np.flatnonzero(self.wired)
        return (np.concatenate([self.eu, w[:-1]]), np.concatenate([self.ev, w[1:]]),
                np.concatenate([self.p, np.ones(len(w) - 1)]))


def rsw_ratio_exact(system: AnnulusSystem, H) -> np.ndarray:
    """Exact ``phi_0(no crossing) / phi_H(no crossing)`` by enumerating all bond configurations.

    ``H`` is the per-vertex ghost field (coupling ``beta H``); the ghost is
    integrated out. Limited to 22 edges.
    """
    m = len(system.eu)
    if m > 22:
        raise ParameterError("exact enumeration is limited to 22 edges")
    H = np.atleast_1d(np.asarray(H, dtype=float))
    w_set = np.flatnonzero(system.wired)
    lp0 = np.log1p(-system.p)
    lp1 = np.log(system.p)
    logw = np.empty(1 << m)
    cross = np.zeros(1 << m, dtype=bool)
    logW = np.empty((1 << m, len(H)))
    for mask in range(1 << m):
        bits = (mask >> np.arange(m)) & 1
        parent = list(range(system.n))

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for e in np.flatnonzero(bits):
            ru, rv = find(int(system.eu[e])), find(int(system.ev[e]))
            if ru != rv:
                parent[ru] = rv
        flags = {}
        for v in range(system.n):
            r = find(v)
            flags[r] = flags.get(r, 0) | int(system.side[v])
        cross[mask] = any(f == 3 for f in flags.values())
        for v in w_set[1:]:
            ru, rv = find(int(w_set[0])), find(int(v))
            if ru != rv:
                parent[ru] = rv
        sizes = np.bincount([find(v) for v in range(system.n)])
        sizes = sizes[sizes > 0]
        logw[mask] = (bits * lp1 + (1 - bits) * lp0).sum() + len(sizes) * math.log(2.0)
        logW[mask] = np.log(np.cosh(np.outer(system.beta * H, sizes))).sum(axis=1)
    w0 = np.exp(logw - logw.max())
    keep = ~cross
    num = (w0[:, None] * np.exp(logW)).sum(0) / w0.sum()
    den = (w0[keep, None] * np.exp(logW[keep])).sum(0) / w0[keep].sum()
    return num / den


def rsw_weights(system: AnnulusSystem, H, n_samples: int, seed: int, thin: int = 10,
                n_therm: int = 500):
    """Monte Carlo log-weights ``log W_H`` at ``H = 0``, unconditioned and conditioned.

    Returns ``(logW_free_of_condition, logW_conditioned)``, each of shape
    ``(n_samples, len(H))``.
    """
    bH = system.beta * np.atleast_1d(np.asarray(H, dtype=float))
    eu, ev, p = system.sw_arrays()
    plain = _kernels.sw_logw(eu, ev, p, system.n, system.n, np.ones(system.n, dtype=np.int64),
                             system.wired, n_therm // 5 + 20, int(n_samples), max(1, thin // 5),
                             stream_seed(seed, 0), bH)
    cond = _kernels.fk_glauber_logw(system.eu, system.ev, system.p, system.n, system.indptr,
                                    system.adj_e, system.adj_v, system.side, system.wired, True,
                                    n_therm, int(n_samples), thin, stream_seed(seed, 1), bH)
    return plain, cond


def _ratio_estimate(plain: np.ndarray, cond: np.ndarray, n_batches: int = 50):
    a = _batch_means(np.exp(plain), n_batches)
    b = _batch_means(np.exp(cond), n_batches)
    A, B = a.mean(0), b.mean(0)
    sa = a.std(0, ddof=1) / math.sqrt(len(a))
    sb = b.std(0, ddof=1) / math.sqrt(len(b))
    r = A / B
    return r, r * np.sqrt((sa / A) ** 2 + (sb / B) ** 2)


def near_critical_rsw_ratio(n_grid=(8, 16), H_grid=(0.0, 0.002, 0.004, 0.008, 0.016),
                            budget: int = 4_000, seed: int = 0, eps: float = 1.0,
                            arm_budget: int = 10_000, thin: int = 5) -> ScanResult:
    """``phi^1_{A_{n,2n}, 0}(no crossing) / phi^1_{A_{n,2n}, H}(no crossing)`` over a grid.

    Integrating out the ghost gives ``phi_H(w) ~ phi_0(w) W_H(w)`` with
    ``W_H = prod_C cosh(beta H |C|)`` over clusters (the wired one counted
    once), so the ratio equals ``E_0[W_H] / E_0[W_H | no crossing]``. Both
    expectations are sampled at zero field, the conditional one by a
    heat-bath chain that refuses crossing-creating openings. A point is
    admissible when ``H n^2 pi_1(n) <= eps`` with ``pi_1`` the measured
    one-arm probability; other points are skipped with a note.
    """
    recs, notes = [], []
    for n in n_grid:
        n = int(n)
        if n < 2:
            raise ParameterError("annulus scale must be at least 2")
        arm = one_arm_probability(1, n, arm_budget, stream_seed(seed, 5, n), thin=2)
        recs.append(EstimateRecord("one_arm", {"a": 1, "h": 0.0, "box": n},
                                   arm.mean, arm.stderr, arm.n_samples, seed))
        Hs = []
        for H in H_grid:
            H = float(H)
            if H < 0:
                raise ParameterError("H must be non-negative")
            lhs = H * n * n * arm.mean
            if lhs > eps:
                notes.append(f"n={n}, H={H}: H n^2 pi_1 = {lhs:.3g} > {eps}, skipped")
            else:
                Hs.append(H)
        if not Hs:
            continue
        t0 = time.perf_counter()
        system = AnnulusSystem.annulus(n)
        plain, cond = rsw_weights(system, Hs, budget, stream_seed(seed, 6, n), thin)
        r, err = _ratio_estimate(plain, cond)
        wt = time.perf_counter() - t0
        for H, ri, ei in zip(Hs, r, err):
            if H == 0:
                ri, ei = 1.0, 0.0
            recs.append(EstimateRecord("rsw_ratio", {"a": 1, "h": H, "n": n,
                                                     "admissibility": H * n * n * arm.mean},
                                       float(ri), float(ei), int(budget), seed, wt / len(Hs)))
    ratios = [r for r in recs if r.observable == "rsw_ratio"]
    summary = {"max_ratio": max((r.mean for r in ratios), default=1.0),
               "min_z": min(((r.mean - 1.0) / r.stderr for r in ratios if r.stderr > 0),
                            default=0.0)}
    return ScanResult(recs, None, notes, summary)


# -- mixing --------------------------------------------------------------------
MIXING_EVENTS = ("one-arm", "full")


def mixing_ratio(l=4, distance=16, L: int = 64, a=1, events=("one-arm", "one-arm"),
                 budget: int = 20_000, seed: int = 0, n_batches: int = 50) -> EstimateRecord:
    """``phi(E1 and E2) / (phi(E1) phi(E2))`` for events around ``z1 = (-d/2, 0)``, ``z2 = (d/2, 0)``.

    ``"one-arm"`` at ``z`` is ``z <-> boundary of Lambda_{2l}(z)`` by internal
    edges; ``"full"`` is the sure event. The two supports
    ``Lambda_{2l}(z_i)`` must be disjoint. Zero field, free boundary on
    ``Lambda_L``; the ratio carries a delete-one-batch jackknife error.
    """
    a = as_fraction(a)
    l = as_fraction(l)
    d = as_fraction(distance)
    for ev in events:
        if ev not in MIXING_EVENTS:
            raise ParameterError(f"unknown event {ev!r}; choose from {MIXING_EVENTS}")
    if len(events) != 2:
        raise ParameterError("exactly two events are needed")
    if d <= 2 * l:
        raise ParameterError("supports Lambda_{2l}(z1) and Lambda_{2l}(z2) overlap")
    if d / 2 + l > Fraction(L, 2):
        raise ParameterError("supports must lie inside the domain")
    g = build_box(a, L)
    zs = [(-d / 2, Fraction(0)), (d / 2, Fraction(0))]
    t0 = time.perf_counter()
    queries, live = [], []
    for z, ev in zip(zs, events):
        if ev == "full":
            continue
        zv = g.vertex_at(z)
        ring = g.inner_boundary(g.vertices_in(box_region(2 * l, z)))
        queries.append((np.array([zv]), ring))
        live.append(len(live))
    ind = np.ones((int(budget), 2))
    if queries:
        series = sw_connection_series(g, FkParams(), queries, int(budget),
                                      stream_seed(seed, 7), via_ghost=False).astype(float)
        k = 0
        for j, ev in enumerate(events):
            if ev != "full":
                ind[:, j] = series[:, k]
                k += 1
    batches = _batch_means(np.column_stack([ind, ind[:, 0] * ind[:, 1]]), n_batches)

    def est(keep):
        m = batches[keep].mean(axis=0)
        return np.array([m[2] / (m[0] * m[1])]) if m[0] * m[1] > 0 else np.array([np.nan])

    r, e = jackknife(est, batches)
    if not np.isfinite(r[0]):
        raise ParameterError("an event never occurred; increase the budget")
    return EstimateRecord("mixing_ratio", {"a": a, "h": 0.0, "l": l, "distance": d, "L": L,
                                           "events": list(events)},
                          float(r[0]), float(e[0]), int(budget), seed,
                          time.perf_counter() - t0)


# -- cluster moments -----------------------------------------------------------
def _half_open_box(g, center, side: Fraction) -> np.ndarray:
    """Vertices of ``center + [-side/2, side/2)^2``; exactly ``(side/a)^2`` of them when aligned."""
    vs = g.vertices_in(box_region(side, center))
    hi_x, hi_y = center[0] + side / 2, center[1] + side / 2
    keep = [v for v in vs.tolist() if g.point(v)[0] < hi_x and g.point(v)[1] < hi_y]
    return np.array(keep, dtype=np.int64)


def cluster_moments(a, domain=2, x_ref=("-1/2", 0), b_center=("1/2", 0), b_side="1/2",
                    budget: int = 20_000, seed: int = 0, thin: int = 1):
    """Conditional moments of ``N_B = #{z in B : z <-> x_ref}`` given ``N_B > 0``.

    ``B`` is the half-open square of side ``b_side`` around ``b_center``, so
    its vertex count scales exactly as ``a^{-2}``.

    Zero field, free boundary on ``Lambda_domain`` at mesh ``a``. Returns
    records for ``E[N_B | N_B > 0]``, ``E[N_B^2 | N_B > 0]``, their ratio
    ``E[N^2] / E[N]^2`` and ``P(N_B > 0)``.
    """
    a = as_fraction(a)
    g = build_box(a, domain)
    ref = g.vertex_at(tuple(as_fraction(c) for c in x_ref))
    center = tuple(as_fraction(c) for c in b_center)
    members = _half_open_box(g, center, as_fraction(b_side))
    if ref in set(members.tolist()):
        raise ParameterError("x_ref must lie outside B")
    eu, ev, p, n = _internal_arrays(g)
    t0 = time.perf_counter()
    s = stream_seed(seed, 8, a.numerator, a.denominator)
    N = _kernels.sw_cluster_counts(eu, ev, p, n, np.ones(n, dtype=np.int64), 200,
                                   int(budget) * thin, s, np.ones(len(eu), dtype=np.uint8),
                                   ref, members)[thin - 1::thin].astype(float)
    hit = (N > 0).astype(float)
    batches = _batch_means(np.column_stack([hit, N, N * N]), 50)

    def est(keep):
        m = batches[keep].mean(axis=0)
        if m[0] <= 0:
            return np.full(4, np.nan)
        e1, e2 = m[1] / m[0], m[2] / m[0]
        return np.array([e1, e2, e2 / e1 ** 2, m[0]])

    val, err = jackknife(est, batches)
    if not np.all(np.isfinite(val)):
        raise ParameterError("x_ref never reached B; increase the budget")
    wt = time.perf_counter() - t0
    base = {"a": a, "h": 0.0, "domain": domain, "B_size": len(members)}
    names = ("cluster_moment_1", "cluster_moment_2", "second_moment_ratio", "reach_B")
    return [EstimateRecord(nm, dict(base), float(v), float(e), len(N), seed, wt / 4)
            for nm, v, e in zip(names, val, err)]


def cluster_moment_scan(a_grid=("1/8", "1/16", "1/32", "1/64", "1/128"), budget: int = 20_000,
                        seed: int = 0, **geometry) -> ScanResult:
    """Moment scaling of ``N_B`` against the mesh (targets 15/8 and 15/4).

    Returns the fit of the first moment in ``fit`` and the second-moment fit
    and the largest moment ratio in ``summary``.
    """
    a_vals = _frac_list(a_grid)
    recs = []
    for a in a_vals:
        recs += cluster_moments(a, budget=budget, seed=seed, **geometry)
    x = np.array([float(a) for a in a_vals])

    def col(name):
        rs = [r for r in recs if r.observable == name]
        return np.array([r.mean for r in rs]), np.array([max(r.stderr, 1e-12) for r in rs])

    m1, e1 = col("cluster_moment_1")
    m2, e2 = col("cluster_moment_2")
    ratio, _ = col("second_moment_ratio")
    fit1 = fit_power_law(x, m1, e1, min_decades=1.0, decay=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FitQualityWarning)
        fit2 = fit_power_law(x, m2, e2, decay=True)
    summary = {"second_moment_fit": fit2.to_dict(), "first_exponent": fit1.exponent,
               "second_exponent": fit2.exponent, "max_moment_ratio": float(ratio.max()),
               "min_moment_ratio": float(ratio.min())}
    return ScanResult(recs, fit1, list(fit1.notes), summary)
