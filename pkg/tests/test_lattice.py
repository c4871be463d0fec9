from fractions import Fraction

import pytest

from nearcrit.errors import ParameterError
from nearcrit.lattice import (box_region, build_annulus, build_box, dual_quad, rectangle_quad,
                              scaled_field)
from nearcrit.extremal_length import extremal_length


def test_degenerate_box():
    g = build_box(1, 0)
    assert (g.n_vertices, g.n_internal, g.n_edges - g.n_internal) == (1, 0, 1)


def test_three_by_three_box():
    g = build_box(1, 2)
    assert g.n_vertices == 9
    assert g.n_internal == 12
    assert g.n_edges - g.n_internal == 9
    assert g.ghost == 9


def test_membership_is_geometric():
    assert build_box("1/2", 1).n_vertices == build_box(1, 2).n_vertices == 9
    fine = {(x / 4, y / 4) for x, y in (tuple(map(int, p)) for p in build_box("1/4", 2).coords)}
    coarse = {(float(x), float(y)) for x, y in (tuple(map(int, p)) for p in build_box(1, 2).coords)}
    assert coarse <= fine


def test_annulus_counts():
    assert build_annulus(1, 1).lattice_points(1) == []
    ann = build_annulus(2, 4)
    assert len(ann.lattice_points(1)) == 25 - 9
    assert not ann.contains((0, 0))


def test_annulus_rejects_reversed_radii():
    with pytest.raises(ParameterError):
        build_annulus(3, 2)


def test_spacing_must_be_in_unit_interval():
    with pytest.raises(ParameterError):
        build_box(2, 4)
    with pytest.raises(ParameterError):
        build_box(0, 4)


def test_box_region_contains_boundary():
    r = box_region(2)
    assert r.contains((1, 1)) and not r.contains((Fraction(3, 2), 0))


def test_scaled_field():
    assert scaled_field(1.0, 1) == 1.0
    assert scaled_field(2.0, "1/2") == pytest.approx(2.0 * 0.5 ** (15 / 8))


def test_dual_of_single_edge_and_series():
    one = rectangle_quad(1, 0)
    d = dual_quad(one)
    assert d.n_edges == 1
    series = rectangle_quad(2, 0)
    ds = dual_quad(series)
    assert ds.n_edges == 2
    assert extremal_length(series) == pytest.approx(2.0)
    assert extremal_length(ds) == pytest.approx(0.5)


def test_double_dual_preserves_lengths():
    q = rectangle_quad(3, 2)
    dd = dual_quad(dual_quad(q))
    assert extremal_length(dd) == pytest.approx(extremal_length(q))
