import itertools
import math

import numpy as np
import pytest

from nearcrit.currents import (EVEN, ODD, ZERO, Current, CurrentMeasureSpec, current_weight,
                               enumerate_double, enumerate_sourced, sources, worm_sample)
from nearcrit.events import Connected
from nearcrit.ising_exact import SpinParams, exact_correlation, exact_truncated
from nearcrit.lattice import BETA_C, cycle_graph, path_graph


def brute_spin(g, beta, field):
    """Spin expectations by summing over all sign patterns (ghost spin fixed to +1)."""
    n = g.n_vertices
    f = np.broadcast_to(np.asarray(field, dtype=float), (n,))
    states = np.array(list(itertools.product((-1, 1), repeat=n)))
    energy = np.zeros(len(states))
    for e in range(g.n_internal):
        u, v = (int(t) for t in g.edges[e])
        energy += beta * states[:, u] * states[:, v]
    energy += beta * states @ f
    w = np.exp(energy - energy.max())
    return states, w / w.sum()


def test_empty_set_correlation_is_one(square):
    assert exact_correlation(square, [], SpinParams()) == 1.0


@pytest.mark.parametrize("beta", [0.1, BETA_C, 1.3])
def test_single_edge_correlation(beta):
    g = path_graph(2, ghost=True)
    assert exact_correlation(g, [0, 1], SpinParams(beta, 0.0)) == pytest.approx(math.tanh(beta), abs=1e-14)


def test_odd_sets_vanish_at_zero_field(square):
    assert exact_correlation(square, [0], SpinParams()) == pytest.approx(0.0, abs=1e-15)
    assert exact_correlation(square, [0, 1, 2], SpinParams()) == pytest.approx(0.0, abs=1e-15)


def test_truncated_against_brute_force(square):
    s, p = brute_spin(square, BETA_C, 0.1)
    m0, m3 = p @ s[:, 0], p @ s[:, 3]
    want = p @ (s[:, 0] * s[:, 3]) - m0 * m3
    got = exact_truncated(square, 0, 3, SpinParams(BETA_C, 0.1))
    assert got == pytest.approx(want, abs=1e-13)
    assert exact_truncated(square, 1, 1, SpinParams(BETA_C, 0.1)) == pytest.approx(1 - (p @ s[:, 1]) ** 2, abs=1e-13)


def test_truncated_equals_two_point_at_zero_field(square):
    sp = SpinParams(BETA_C, 0.0)
    assert exact_truncated(square, 0, 3, sp) == pytest.approx(exact_correlation(square, [0, 3], sp), abs=1e-15)


def test_truncated_decreases_with_field(square):
    vals = [exact_truncated(square, 0, 3, SpinParams(BETA_C, h)) for h in np.linspace(0, 1, 11)]
    assert all(b <= a + 1e-14 for a, b in zip(vals, vals[1:]))


def test_current_weight_examples():
    g = path_graph(2)
    spec = CurrentMeasureSpec.ising(g, (), 0.5, 0.0)
    assert current_weight(Current.from_counts(g, [0]), spec) == 1.0
    assert current_weight(Current.from_counts(g, [2]), spec) == pytest.approx(0.125)


def test_ghost_edge_weight_zero_without_field():
    g = path_graph(2, ghost=True)
    spec = CurrentMeasureSpec.ising(g, (), BETA_C, 0.0)
    counts = np.zeros(g.n_edges, dtype=int)
    counts[g.n_internal] = 1
    assert current_weight(Current.from_counts(g, counts), spec) == 0.0


def test_sources():
    g = path_graph(3)
    assert sources(Current.zero(g)) == frozenset()
    assert sources(Current(g, [ODD, ZERO])) == {0, 1}
    assert sources(Current(g, [ODD, ODD])) == {0, 2}
    assert sources(Current(g, [ODD, EVEN])) == {0, 1}


def test_single_edge_forced_odd():
    g = path_graph(2)
    law = enumerate_sourced(CurrentMeasureSpec.ising(g, {0, 1}, BETA_C, 0.0))
    assert law.class_marginals()[0, ODD] == pytest.approx(1.0)


def test_triangle_against_truncated_multiplicities():
    g = cycle_graph(3)
    beta, cap = 0.6, 12
    spec = CurrentMeasureSpec.ising(g, (), beta, 0.0)
    law = enumerate_sourced(spec)
    totals = {}
    for n in itertools.product(range(cap + 1), repeat=3):
        deg = [n[0] + n[2], n[0] + n[1], n[1] + n[2]]
        if any(d % 2 for d in deg):
            continue
        lab = tuple(ZERO if c == 0 else (ODD if c % 2 else EVEN) for c in n)
        w = math.prod(beta ** c / math.factorial(c) for c in n)
        totals[lab] = totals.get(lab, 0.0) + w
    z = sum(totals.values())
    for lab, w in totals.items():
        assert law.class_prob(np.array(lab)) == pytest.approx(w / z, abs=1e-9)


def test_ghost_odd_has_zero_probability_without_field(square):
    law = enumerate_sourced(CurrentMeasureSpec.ising(square, (), BETA_C, 0.0))
    assert law.class_marginals()[square.n_internal:, ODD].max() == 0.0


def test_ghost_correlation_identity(square):
    f = np.array([0.1, 0.4, 0.0, 0.25])
    base = CurrentMeasureSpec.ising(square, (), BETA_C, f)
    z0 = enumerate_sourced(base).log_partition
    for A in ({0, 3}, {1, 2}, {0, square.ghost}):
        ratio = math.exp(enumerate_sourced(base.with_sources(A)).log_partition - z0)
        spins = [v for v in A if v != square.ghost]
        assert ratio == pytest.approx(exact_correlation(square, spins, SpinParams(BETA_C, f)), abs=1e-12)


def test_double_current_single_edge_ratio():
    g = path_graph(2)
    beta = 0.7
    spec = CurrentMeasureSpec.ising(g, (), beta, 0.0)
    law = enumerate_double(spec, spec)
    p_open = law.edge_marginals()[0]
    # n, m independent even currents: P(both zero) = 1 / cosh^2
    assert (1 - p_open) / p_open == pytest.approx(1.0 / math.sinh(beta) ** 2)


def test_double_current_with_null_second_factor(square):
    a = CurrentMeasureSpec.ising(square, {0, 3}, BETA_C, 0.2)
    b = CurrentMeasureSpec(square, frozenset(), np.zeros(square.n_edges))
    law = enumerate_double(a, b)
    alone = enumerate_sourced(a).trace_law(law.space)
    assert law.tv(alone) < 1e-14


def test_switching_on_two_vertices():
    g = path_graph(2, ghost=True)
    f = np.array([0.3, 0.5])
    sp = SpinParams(BETA_C, f)
    spec = CurrentMeasureSpec.ising(g, {0, 1}, BETA_C, f)
    law = enumerate_double(spec, spec.with_sources(()))
    p = 1 - law.prob(Connected([0], [g.ghost]))
    ratio = exact_truncated(g, 0, 1, sp) / exact_correlation(g, [0, 1], sp)
    assert p == pytest.approx(ratio, abs=1e-12)


def test_worm_forced_and_deterministic(square):
    g = path_graph(2)
    spec = CurrentMeasureSpec.ising(g, {0, 1}, BETA_C, 0.0)
    assert worm_sample(spec, seed=3).labels[0] == ODD
    spec2 = CurrentMeasureSpec.ising(square, {0, 3}, BETA_C, 0.2)
    assert np.array_equal(worm_sample(spec2, 11).labels, worm_sample(spec2, 11).labels)
