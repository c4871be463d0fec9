import numpy as np
import pytest

from conftest import edge_between
from nearcrit import _kernels
from nearcrit.backbone import (box_mask, check_revisits, edge_order_at, explore_backbone,
                               explore_stages, explored_domain, outside_box,
                               sample_markov_instances, verify_markov)
from nearcrit.currents import ODD, ZERO, Current, CurrentMeasureSpec, enumerate_sourced, worm_run
from nearcrit.errors import ContractError
from nearcrit.lattice import BETA_C, build_box, build_from_points, build_rectangle


def odd_from(g, pairs, ghost_at=()):
    odd = np.zeros(g.n_edges, dtype=bool)
    for p, q in pairs:
        odd[edge_between(g, g.vertex(p), g.vertex(q))] = True
    for p in ghost_at:
        odd[g.ghost_edge[g.vertex(p)]] = True
    return odd


def test_edge_order_interior_from_west():
    g = build_box(1, 2)
    v, w = g.vertex((0, 0)), g.vertex((-1, 0))
    inc = edge_between(g, v, w)
    order = edge_order_at(g, v, inc)
    ends = [g.other_end(e, v) for e in order]
    assert order[0] == g.ghost_edge[v]
    assert ends[1:] == [g.vertex((0, -1)), g.vertex((0, 1)), g.vertex((1, 0))]


def test_edge_order_start_and_corner():
    g = build_box(1, 2)
    v = g.vertex((0, 0))
    ends = [g.other_end(e, v) for e in edge_order_at(g, v)[1:]]
    assert ends == [g.vertex(p) for p in ((1, 0), (0, 1), (-1, 0), (0, -1))]
    c = g.vertex((1, 1))
    ends = [g.other_end(e, c) for e in edge_order_at(g, c)[1:]]
    assert ends == [g.vertex((0, 1)), g.vertex((1, 0))]


def test_path_example():
    g = build_from_points(1, [(0, 0), (1, 0), (2, 0)])
    odd = odd_from(g, [((0, 0), (1, 0)), ((1, 0), (2, 0))])
    t = explore_backbone(odd, 0, {2}, g)
    assert t.path == [0, 1, 2]
    want = {g.ghost_edge[0], edge_between(g, 0, 1), g.ghost_edge[1], edge_between(g, 1, 2)}
    assert set(t.explored) == want
    assert not t.hit_ghost


def test_immediate_ghost_termination():
    g = build_from_points(1, [(0, 0), (1, 0)])
    odd = odd_from(g, [], ghost_at=[(0, 0)])
    odd[edge_between(g, 0, 1)] = False
    t = explore_backbone(odd, 0, {1}, g)
    assert t.hit_ghost and t.path == [0, g.ghost] and set(t.explored) == {g.ghost_edge[0]}


def test_right_first_hand_trace():
    # odd edges: 0 -> (1,0) -> (1,1), plus the loop (1,0),(1,-1),(2,-1),(2,0)
    g = build_box(1, 4)
    pairs = [((0, 0), (1, 0)), ((1, 0), (1, 1)), ((1, 0), (1, -1)), ((1, -1), (2, -1)),
             ((2, -1), (2, 0)), ((2, 0), (1, 0))]
    odd = odd_from(g, pairs)
    t = explore_backbone(odd, g.vertex((0, 0)), {g.vertex((1, 1))}, g)
    want = [(0, 0), (1, 0), (1, -1), (2, -1), (2, 0), (1, 0), (1, 1)]
    assert t.path == [g.vertex(p) for p in want]
    # a left-first rule would have gone straight up from (1,0)
    assert t.path[2] != g.vertex((1, 1))
    check_revisits(t)


def test_start_in_stop_set_rejected():
    g = build_box(1, 2)
    with pytest.raises(ContractError):
        explore_backbone(np.zeros(g.n_edges, dtype=bool), 0, {0}, g)


def test_markov_small_box():
    g = build_rectangle(1, 1, 2)
    x = g.n_vertices - 1
    spec = CurrentMeasureSpec.ising(g, {0, x}, BETA_C, 0.2)
    reps = sample_markov_instances(g, spec, x, 20, seed=3)
    assert reps and all(r.ok() for r in reps)
    full = verify_markov(g, x, {x}, range(g.n_edges), spec)
    assert full.empty or full.tv == 0.0


def test_explored_domain_stays_local():
    g = build_box(1, 40)
    o = g.vertex((0, 0))
    x = g.vertex((15, 0))
    spec = CurrentMeasureSpec.ising(g, {o, x}, BETA_C, 0.0)
    run = worm_run(spec, 10, seed=7, thin=2)
    checked = 0
    for cur in run.currents():
        for i, t in enumerate(explore_stages(cur, o, 1, spacing=9), 1):
            if t.hit_ghost or t.end == x:
                continue
            dom = explored_domain(t)
            pts = np.abs(g.coords[list(dom.D)]).max()
            assert pts <= 9 * (i + 1)
            checked += 1
    assert checked > 0


def test_straight_segment_in_strip_has_single_ring_point():
    g = build_rectangle(1, 8, 0, origin=(-4, 0))
    pairs = [((k, 0), (k + 1, 0)) for k in range(0, 3)]
    t = explore_backbone(odd_from(g, pairs), g.vertex((0, 0)), outside_box(g, 2), g)
    dom = explored_domain(t)
    assert dom.x == g.vertex((3, 0))
    assert dom.d == dom.d_prime == g.vertex((2, 0))
    assert dom.D == {dom.x}


def test_straight_segment_in_plane_brackets_entry_point():
    g = build_box(1, 8)
    pairs = [((k, 0), (k + 1, 0)) for k in range(0, 3)]
    t = explore_backbone(odd_from(g, pairs), g.vertex((0, 0)), outside_box(g, 2), g)
    dom = explored_domain(t)
    # the side edges inspected at (2,0) put (2,1) and (2,-1) into the explored set
    assert {dom.d, dom.d_prime} == {g.vertex((2, 1)), g.vertex((2, -1))}
    assert dom.omega == {g.vertex((2, 0))}
    # the outward arc is removed, so D_i is the single vertex x_i
    assert g.vertex((4, 0)) in dom.omega_tilde
    assert dom.D == {dom.x}


def test_kernel_reach_matches_python():
    g = build_box(1, 12)
    o, x = g.vertex((0, 0)), g.vertex((5, 0))
    f = np.full(g.n_vertices, 0.05)
    spec = CurrentMeasureSpec.ising(g, {o, x}, BETA_C, f)
    run = worm_run(spec, 40, seed=21, thin=3)
    dist = np.abs(g.coords).max(axis=1).astype(np.int64)
    r_stop = 4
    for lab in run.labels:
        seen = np.zeros(g.n_edges, dtype=np.bool_)
        touched = np.empty(g.n_edges, dtype=np.int64)
        reach, gh = _kernels._explore_reach(lab.astype(np.int8), g.edge_at, g.nbr, g.ghost_edge,
                                            dist, o, r_stop, seen, touched)
        t = explore_backbone(Current(g, lab), o, outside_box(g, r_stop), g)
        lattice = [v for v in t.path if v != g.ghost]
        assert bool(gh) == t.hit_ghost
        assert reach == dist[lattice].max()


def test_box_mask_exact_at_fine_mesh():
    g = build_box("1/4", 2)
    m = box_mask(g, "1/2")
    assert m.sum() == 25
