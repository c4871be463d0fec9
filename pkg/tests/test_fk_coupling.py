import math

import numpy as np
import pytest

from nearcrit.coupling import (overlay_couple, verify_coupling_law, verify_decreasing_domination,
                               verify_truncation_identity)
from nearcrit.events import Connected
from nearcrit.fk import (BondConfig, FkParams, connection_prob, enumerate_fk, fk_weight,
                         ghost_lemma_check, sw_configs, sw_sample, verify_fkg_mon)
from nearcrit.ising_exact import SpinParams, exact_correlation
from nearcrit.lattice import BETA_C, build_box, build_from_points, path_graph

PC = 1 - math.exp(-2 * BETA_C)


def test_weight_all_closed_and_all_open(square):
    params = FkParams(h=0.2)
    closed = BondConfig(square, np.zeros(square.n_edges, dtype=bool))
    assert fk_weight(closed, params) == pytest.approx(2.0 ** (square.n_vertices + 1))
    p = params.edge_probs(square)
    full = BondConfig(square, np.ones(square.n_edges, dtype=bool))
    assert fk_weight(full, params) == pytest.approx(2.0 * np.prod(p / (1 - p)))


def test_one_edge_law():
    g = path_graph(2, ghost=True)
    law = enumerate_fk(g)
    want = PC / (PC + 2 * (1 - PC))
    assert law.prob(Connected([0], [1])) == pytest.approx(want, abs=1e-14)
    assert law.prob(Connected([0], [1])) == pytest.approx(exact_correlation(g, [0, 1], SpinParams()), abs=1e-14)
    assert law.probs.sum() == pytest.approx(1.0, abs=1e-14)
    assert law.prob(Connected([0], [g.ghost])) == 0.0


def test_ghost_lemma(square):
    assert ghost_lemma_check(square, FkParams(h=0.2)).max_deviation < 1e-12
    rep = ghost_lemma_check(square, FkParams())
    assert rep.max_deviation < 1e-12


@pytest.mark.parametrize("beta", [BETA_C, 1.0])
def test_single_vertex_cluster_reaches_ghost_with_tanh(beta):
    g = build_box(1, 0)
    law = enumerate_fk(g, FkParams(beta=beta, field=(0.3 / beta,)))
    assert law.prob(Connected([0], [g.ghost])) == pytest.approx(math.tanh(0.3), abs=1e-14)


def test_fkg_and_domain_monotonicity(square):
    big = build_box(1, 2)
    params = FkParams(h=0.1)
    ev_a = Connected([0], [1])
    rep = verify_fkg_mon(square, params, ev_a, Connected([1], [3]))
    assert rep.fkg_gap > 0
    assert verify_fkg_mon(square, params, ev_a, ev_a).fkg_gap >= 0
    small = build_from_points(1, [(0, 0)])
    mon = verify_fkg_mon(small, params, Connected([0], [small.ghost]),
                         Connected([0], [small.ghost]), nested=[build_from_points(1, [(0, 0), (1, 0)])])
    assert min(mon.mon_gaps) >= -1e-14
    assert big.n_vertices == 9


def test_sw_one_edge_frequency():
    g = path_graph(2, ghost=True)
    cfg = sw_configs(g, FkParams(), 100_000, seed=5)
    want = PC / (PC + 2 * (1 - PC))
    assert abs(cfg[:, 0].mean() - want) < 0.01


def test_sw_reproducible_and_large_field(square):
    a = sw_sample(square, FkParams(h=0.3), seed=9)
    b = sw_sample(square, FkParams(h=0.3), seed=9)
    assert np.array_equal(a.open, b.open)
    cfg = sw_configs(square, FkParams(field=(8.0,) * 4), 2000, seed=1)
    assert cfg[:, square.n_internal:].mean() > 0.99


def test_connection_prob_identity_and_oracle():
    g = build_box("1/8", "1/4")
    assert connection_prob(g, FkParams(), [0], [0]).mean == 1.0
    o = g.vertex_at((0, 0))
    bnd = list(g.inner_boundary(range(g.n_vertices)))
    rec = connection_prob(g, FkParams(), [o], bnd, via_ghost=False, n_samples=40_000, seed=2)
    law = enumerate_fk(g)
    exact = law.prob(Connected([o], bnd, via_ghost=False))
    assert abs(rec.mean - exact) < 3 * rec.stderr + 1e-3


def test_edwards_sokal_events(square):
    params = FkParams(h=0.15)
    law = enumerate_fk(square, params)
    cfg = sw_configs(square, params, 60_000, seed=4)
    events = [Connected([0], [3]), Connected([0], [square.ghost]), Connected([1], [2])]
    for ev in events:
        hits = np.array([BondConfig(square, row).connected(ev.A, ev.B) for row in cfg[:3000]])
        p = law.prob(ev)
        se = math.sqrt(p * (1 - p) / len(hits)) + 1e-9
        assert abs(hits.mean() - p) < 4 * se


def test_overlay_limits(square):
    params = FkParams(h=0.2)
    closed = BondConfig(square, np.zeros(square.n_edges, dtype=bool))
    same = overlay_couple(closed, params, 0, overlay=np.zeros(square.n_edges, dtype=bool))
    assert not same.open.any()
    full = BondConfig(square, np.ones(square.n_edges, dtype=bool))
    assert overlay_couple(full, params, 3).open.all()


def test_coupling_law():
    g = path_graph(2, ghost=True)
    assert verify_coupling_law(g, 0, 1, FkParams()).tv < 1e-12


def test_coupling_law_square(square):
    assert verify_coupling_law(square, 0, 3, FkParams(h=0.2)).tv < 1e-10
    dom = verify_decreasing_domination(square, 0, 3, FkParams(h=0.2), n_events=10, seed=1)
    assert len(dom.gaps) == 10 and dom.ok()


def test_truncation_identity():
    g = path_graph(3, ghost=True)
    rep = verify_truncation_identity(g, 0, 2, np.array([0.0, 0.3, 0.0]))
    assert rep.residual < 1e-10
    zero = verify_truncation_identity(g, 0, 2, np.zeros(3))
    assert zero.p_disconnect == pytest.approx(1.0)
    assert zero.truncated == pytest.approx(zero.two_point)


def test_truncation_chain_over_fields(square):
    for h in (0.05, 0.2, 0.5):
        rep = verify_truncation_identity(square, 0, 3, np.full(4, h), full_field=np.full(4, h + 0.1))
        assert rep.ok()
