import math

import numpy as np
import pytest

from nearcrit.errors import ContractError, ParameterError
from nearcrit.events import Connected
from nearcrit.experiments import (AnnulusSystem, FitQualityWarning, FitResult, ScanResult,
                                  backbone_survival, fit_exponential, fit_power_law, fit_window,
                                  mixing_ratio, one_arm_probability, rsw_ratio_exact, rsw_weights,
                                  _ratio_estimate, truncated_correlations)
from nearcrit.fk import FkParams, enumerate_fk
from nearcrit.ising_exact import SpinParams, exact_correlation
from nearcrit.lattice import BETA_C, build_box, build_from_points

STRIP = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]


def strip_system():
    g = build_from_points(1, STRIP)
    side = np.array([1 if x == 0 else 2 if x == 2 else 0 for x, _ in g.coords])
    p = 1 - math.exp(-2 * BETA_C)
    return g, side, AnnulusSystem(g.edges[: g.n_internal, 0], g.edges[: g.n_internal, 1],
                                  np.full(g.n_internal, p), g.n_vertices, side)


def fk_ratio(g, side, H):
    """Independent oracle: ghost kept explicit, both sides wired, crossing by internal edges."""
    left = [v for v in range(g.n_vertices) if side[v] == 1]
    right = [v for v in range(g.n_vertices) if side[v] == 2]
    ev = ~Connected(left, right, via_ghost=False, via_wiring=False)
    out = []
    for h in (0.0, H):
        params = FkParams(field=(h,) * g.n_vertices, boundary="wired-subset", wired=left + right)
        out.append(enumerate_fk(g, params).prob(ev))
    return out[0] / out[1]


def test_power_law_fit_recovers_exponent(rng):
    x = np.array([1, 0.5, 0.25, 0.125, 0.0625])
    y = 2.0 * x ** 0.125 * (1 + 0.001 * rng.standard_normal(len(x)))
    fit = fit_power_law(x, y, np.full(len(x), 0.002 * y.mean()))
    assert fit.exponent == pytest.approx(0.125, abs=0.01)
    decay = fit_power_law(1 / x, y, decay=True)
    assert decay.exponent == pytest.approx(0.125, abs=0.01)
    assert decay.r2 > 0.99


def test_power_law_fit_warns_on_short_span():
    with pytest.warns(FitQualityWarning):
        fit_power_law([1, 2], [1.0, 2.0], min_decades=1.0)


def test_exponential_fit_recovers_mass():
    r = np.arange(2, 12, dtype=float)
    corr = 0.7 * r ** -0.25 * np.exp(-0.4 * r)
    fit = fit_exponential(r, corr, 0.01 * corr)
    assert fit.exponent == pytest.approx(0.4, abs=1e-9)
    assert fit.model == "exponential-with-power-correction"


def test_fit_window_is_contiguous():
    corr = np.array([1.0, 0.5, 0.2, 0.05, 0.001, 0.02])
    err = np.full(6, 0.005)
    idx = fit_window(corr, err, np.arange(6), r_min=1)
    assert list(idx) == [1, 2, 3]


def test_fit_result_rejects_nan():
    with pytest.raises(ContractError):
        FitResult("power-law", 0.1, 0.0, np.array([np.nan, 0.1]), np.eye(2), 0.0, 1, 1.0,
                  np.zeros(3))


def test_scan_result_serializes():
    d = ScanResult([], None, ["note"], {"k": 1}).to_dict()
    assert d == {"records": [], "fit": None, "notes": ["note"], "summary": {"k": 1}}


def test_rsw_exact_matches_fk_oracle():
    g, side, system = strip_system()
    for H in (0.05, 0.3):
        assert rsw_ratio_exact(system, H)[0] == pytest.approx(fk_ratio(g, side, H), rel=1e-12)
    assert rsw_ratio_exact(system, 0.0)[0] == pytest.approx(1.0)


def test_rsw_monte_carlo_matches_exact():
    _, _, system = strip_system()
    plain, cond = rsw_weights(system, [0.3], 40_000, seed=3, thin=5)
    r, e = _ratio_estimate(plain, cond)
    exact = rsw_ratio_exact(system, 0.3)[0]
    assert exact > 1
    assert abs(r[0] - exact) < 4 * e[0]


def test_mixing_full_event_is_one():
    rec = mixing_ratio(events=("one-arm", "full"), budget=2000, seed=1, L=32, distance=12, l=2)
    assert rec.mean == pytest.approx(1.0, abs=1e-12)


def test_mixing_rejects_overlap_and_unknown_events():
    with pytest.raises(ParameterError):
        mixing_ratio(l=4, distance=8, budget=100)
    with pytest.raises(ParameterError):
        mixing_ratio(events=("one-arm", "two-arm"), budget=100)


def test_mixing_fkg_direction():
    rec = mixing_ratio(l=2, distance=10, L=32, budget=8000, seed=2)
    assert rec.mean >= 1 - 3 * rec.stderr
    assert rec.mean <= 2


def test_backbone_zero_field_never_hits_ghost():
    res = backbone_survival(h=0.0, stride=2, n_max=3, budget=400, n_chains=2, seed=1)
    hits = [r.mean for r in res.records if r.observable == "ghost_hit_rate"]
    assert hits == [0.0] * 3
    surv = [r.mean for r in res.records if r.observable == "backbone_survival"]
    assert surv == [1.0] * 3


def test_backbone_rejects_inadmissible_field():
    with pytest.raises(ParameterError):
        backbone_survival(h=2.0)


def test_one_arm_matches_exact_on_tiny_box():
    g = build_box(1, 2)
    o = g.vertex_at((0, 0))
    bnd = list(g.inner_boundary(range(g.n_vertices)))
    exact = enumerate_fk(g).prob(Connected([o], bnd, via_ghost=False))
    rec = one_arm_probability(1, 2, budget=40_000, seed=4)
    assert abs(rec.mean - exact) < 4 * rec.stderr


def test_one_arm_stderr_scales_with_budget():
    small = one_arm_probability("1/2", 4, budget=4000, seed=5)
    big = one_arm_probability("1/2", 4, budget=16_000, seed=5)
    assert 1.3 < small.stderr / big.stderr < 3.2


def test_truncated_correlation_matches_exact_at_zero_field():
    L = 2
    g = build_box(1, L)
    rs, corr, err = truncated_correlations(0.0, L, 40_000, seed=1, r_max=2)
    sp = SpinParams(BETA_C, 0.0)
    pts = {tuple(int(c) for c in p): v for v, p in enumerate(g.coords)}
    for k, r in enumerate(rs):
        pairs = [(pts[(x, y)], pts[(x + r, y)]) for (x, y) in pts if (x + r, y) in pts]
        pairs += [(pts[(x, y)], pts[(x, y + r)]) for (x, y) in pts if (x, y + r) in pts]
        want = np.mean([exact_correlation(g, list(uv), sp) for uv in pairs])
        assert corr[k] <= 1
        assert abs(corr[k] - want) < 3 * err[k] + 2e-3
