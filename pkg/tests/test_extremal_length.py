import numpy as np
import pytest

from nearcrit.extremal_length import (crossing_vs_length, cut_quad, extremal_length,
                                      extremal_length_oracle, metric_functional, rayleigh_check)
from nearcrit.fk import FkParams
from nearcrit.lattice import BETA_C, build_rectangle, dual_quad, rectangle_quad
from nearcrit.suite import extremal_suite, parallel_paths_quad, random_quads


@pytest.mark.parametrize("q,want", [(rectangle_quad(1, 0), 1.0),
                                    (parallel_paths_quad(1, 2), 0.5),
                                    (rectangle_quad(2, 0), 2.0)])
def test_closed_forms(q, want):
    assert extremal_length(q) == pytest.approx(want, abs=1e-12)
    assert extremal_length_oracle(q) == pytest.approx(want, abs=1e-9)


def test_three_by_three_grid():
    q = rectangle_quad(3, 3)
    # rungs carry no current, so the four rows act as parallel paths of length 3
    assert extremal_length_oracle(q) == pytest.approx(0.75, abs=1e-9)
    assert extremal_length(q) == pytest.approx(0.75, abs=1e-12)


def test_oracle_optimum_is_scale_invariant():
    q = rectangle_quad(2, 2)
    res = extremal_length_oracle(q, info=True)
    base = metric_functional(q, res.metric)
    assert base == pytest.approx(res.length, rel=1e-9)
    for lam in (0.1, 3.0, 17.0):
        assert metric_functional(q, lam * res.metric) == pytest.approx(base, rel=1e-12)


def test_random_quads_agree():
    for q in random_quads(10, seed=3):
        assert abs(extremal_length(q) - extremal_length_oracle(q)) < 1e-6


def test_duality_on_grids():
    for w, h in ((1, 1), (2, 3), (4, 2), (5, 5)):
        q = rectangle_quad(w, h)
        assert extremal_length(q) * extremal_length(dual_quad(q)) == pytest.approx(1.0, abs=1e-6)


def test_rayleigh_empty_cut_is_identity():
    q = rectangle_quad(3, 3)
    rep = rayleigh_check(q, [])
    assert rep.length_ab_cd == rep.cut_length_ab_cd
    assert rep.length_ad_bc == rep.cut_length_ad_bc


def test_rayleigh_cut_removes_a_parallel_row():
    q = rectangle_quad(1, 2)
    pts = {tuple(int(c) for c in p): i for i, p in enumerate(q.coords)}
    path = [pts[c] for c in ((1, 2), (1, 1), (0, 1), (0, 2))]
    cut = cut_quad(q, path)
    # three parallel rows become two once the top row is cut away
    assert extremal_length(q) == pytest.approx(1 / 3)
    assert extremal_length(cut) == pytest.approx(1 / 2)
    rep = rayleigh_check(q, path)
    assert rep.ok and rep.cut_length_ad_bc <= rep.length_ad_bc


def test_rayleigh_random_cuts_on_four_by_four(rng):
    q = rectangle_quad(4, 4)
    pts = {tuple(int(c) for c in p): i for i, p in enumerate(q.coords)}
    for _ in range(100):
        x1, x2 = sorted(rng.choice(5, 2, replace=False))
        depth = int(rng.integers(1, 4))
        path = [(x1, 4 - d) for d in range(depth + 1)] + [(x, 4 - depth) for x in range(x1 + 1, x2 + 1)]
        path += [(x2, 4 - d) for d in range(depth - 1, -1, -1)]
        assert rayleigh_check(q, [pts[c] for c in path]).violation <= 1e-9


def test_crossing_vs_length_single_edge():
    g = build_rectangle(1, 1, 0)
    length, crossing = crossing_vs_length(g, FkParams(), 40_000, seed=1)
    assert length.mean == 1.0
    p = 1 - np.exp(-2 * BETA_C)
    assert abs(crossing.mean - p / (p + 2 * (1 - p))) < 4 * crossing.stderr + 1e-3


def test_crossing_vs_length_monotone_pairing():
    out = []
    for w in (4, 8, 12):
        g = build_rectangle(1, w, 4)
        out.append(crossing_vs_length(g, FkParams(), 4000, seed=2))
    lengths = [l.mean for l, _ in out]
    probs = [c.mean for _, c in out]
    assert lengths == sorted(lengths)
    assert probs == sorted(probs, reverse=True)


def test_suite_passes():
    assert extremal_suite(seed=1)["passed"]
