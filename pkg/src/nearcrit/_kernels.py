"""Compiled inner loops.

All samplers draw from numba's internal generator, seeded at the top of each
call, so a kernel call is a pure function of its arguments.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True, inline="always")
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, inline="always")
def _union(parent, x, y):
    rx = _find(parent, x)
    ry = _find(parent, y)
    if rx != ry:
        if rx < ry:
            parent[ry] = rx
        else:
            parent[rx] = ry
        return 1
    return 0


@njit(cache=True)
def _neumaier(total, comp, x):
    t = total + x
    if abs(total) >= abs(x):
        comp += (total - t) + x
    else:
        comp += (x - t) + total
    return t, comp


# -- exact spin enumeration --------------------------------------------
@njit(cache=True)
def ising_enumerate(n, indptr, indices, field, beta, masks):
    """Gray-code sweep over all 2^n spin states.

    Returns ``(Z, S)`` with ``Z`` the partition function relative to the
    all-plus state and ``S[k] = sum sigma_{A_k} w(sigma)`` for the subset
    bitmasks ``masks``. Sums use Neumaier compensation.
    """
    sigma = np.ones(n, dtype=np.int64)
    nm = masks.shape[0]
    sign = np.ones(nm, dtype=np.int64)
    # energy relative to the all-plus state, H - H0 >= 0
    de = 0.0
    z, zc = 1.0, 0.0
    s = np.zeros(nm)
    sc = np.zeros(nm)
    for k in range(nm):
        s[k] = 1.0
    total = 1 << n
    for step in range(1, total):
        j = 0
        while not (step >> j) & 1:
            j += 1
        loc = field[j]
        for p in range(indptr[j], indptr[j + 1]):
            loc += sigma[indices[p]]
        de += 2.0 * sigma[j] * loc
        sigma[j] = -sigma[j]
        for k in range(nm):
            if (masks[k] >> j) & 1:
                sign[k] = -sign[k]
        w = np.exp(-beta * de)
        z, zc = _neumaier(z, zc, w)
        for k in range(nm):
            s[k], sc[k] = _neumaier(s[k], sc[k], sign[k] * w)
    return z + zc, s + sc


# -- exact configuration enumeration -----------------------------------
@njit(cache=True)
def config_labels(n_vertices, eu, ev, include, wire_u, wire_v):
    """Cluster root of every vertex in every configuration of the included edges.

    Configuration ``c`` opens edge ``e`` iff bit ``e`` of ``c`` is set;
    edges with ``include[e] == 0`` are ignored. ``wire_u/wire_v`` are pairs
    that are always joined (wired boundary).
    """
    m = eu.shape[0]
    total = 1 << m
    labels = np.empty((total, n_vertices), dtype=np.int16)
    counts = np.empty(total, dtype=np.int64)
    parent = np.empty(n_vertices, dtype=np.int64)
    for c in range(total):
        for v in range(n_vertices):
            parent[v] = v
        k = n_vertices
        for w in range(wire_u.shape[0]):
            k -= _union(parent, wire_u[w], wire_v[w])
        for e in range(m):
            if include[e] and (c >> e) & 1:
                k -= _union(parent, eu[e], ev[e])
        for v in range(n_vertices):
            labels[c, v] = _find(parent, v)
        counts[c] = k
    return labels, counts


# -- Swendsen-Wang ------------------------------------------------------
@njit(cache=True)
def _sw_sweep(eu, ev, p, spins, parent, open_):
    n = spins.shape[0]
    for v in range(n):
        parent[v] = v
    for e in range(eu.shape[0]):
        u = eu[e]
        v = ev[e]
        if spins[u] == spins[v] and np.random.random() < p[e]:
            open_[e] = 1
            _union(parent, u, v)
        else:
            open_[e] = 0
    # fresh spin per cluster, drawn at the root in index order
    for v in range(n):
        if parent[v] == v:
            spins[v] = 1 if np.random.random() < 0.5 else -1
    for v in range(n):
        spins[v] = spins[_find(parent, v)]


@njit(cache=True)
def _labels_from(eu, ev, open_, mask, parent):
    n = parent.shape[0]
    for v in range(n):
        parent[v] = v
    for e in range(eu.shape[0]):
        if open_[e] and mask[e]:
            _union(parent, eu[e], ev[e])
    for v in range(n):
        parent[v] = _find(parent, v)


@njit(cache=True)
def sw_configs(eu, ev, p, n, spins, n_therm, n_samples, thin, s):
    """Bond configurations after every ``thin`` sweeps, following ``n_therm`` sweeps."""
    np.random.seed(s)
    parent = np.empty(n, dtype=np.int64)
    open_ = np.zeros(eu.shape[0], dtype=np.uint8)
    out = np.empty((n_samples, eu.shape[0]), dtype=np.uint8)
    for _ in range(n_therm):
        _sw_sweep(eu, ev, p, spins, parent, open_)
    for i in range(n_samples):
        for _ in range(thin):
            _sw_sweep(eu, ev, p, spins, parent, open_)
        out[i] = open_
    return out


@njit(cache=True)
def sw_connections(eu, ev, p, n, spins, n_therm, n_sweeps, s, mask, set_ptr, set_idx, qa, qb):
    """Per-sweep indicators of ``set[qa[k]] <-> set[qb[k]]`` using edges in ``mask``."""
    np.random.seed(s)
    parent = np.empty(n, dtype=np.int64)
    lab = np.empty(n, dtype=np.int64)
    open_ = np.zeros(eu.shape[0], dtype=np.uint8)
    mark = np.zeros(n, dtype=np.int64)
    nq = qa.shape[0]
    out = np.zeros((n_sweeps, nq), dtype=np.uint8)
    stamp = 0
    for _ in range(n_therm):
        _sw_sweep(eu, ev, p, spins, parent, open_)
    for t in range(n_sweeps):
        _sw_sweep(eu, ev, p, spins, parent, open_)
        _labels_from(eu, ev, open_, mask, lab)
        for k in range(nq):
            stamp += 1
            a = qa[k]
            for i in range(set_ptr[a], set_ptr[a + 1]):
                mark[lab[set_idx[i]]] = stamp
            b = qb[k]
            for i in range(set_ptr[b], set_ptr[b + 1]):
                if mark[lab[set_idx[i]]] == stamp:
                    out[t, k] = 1
                    break
    return out


@njit(cache=True)
def sw_cluster_counts(eu, ev, p, n, spins, n_therm, n_sweeps, s, mask, ref, members):
    """Per-sweep number of ``members`` in the cluster of ``ref``."""
    np.random.seed(s)
    parent = np.empty(n, dtype=np.int64)
    lab = np.empty(n, dtype=np.int64)
    open_ = np.zeros(eu.shape[0], dtype=np.uint8)
    out = np.zeros(n_sweeps, dtype=np.int64)
    for _ in range(n_therm):
        _sw_sweep(eu, ev, p, spins, parent, open_)
    for t in range(n_sweeps):
        _sw_sweep(eu, ev, p, spins, parent, open_)
        _labels_from(eu, ev, open_, mask, lab)
        r = lab[ref]
        c = 0
        for i in range(members.shape[0]):
            if lab[members[i]] == r:
                c += 1
        out[t] = c
    return out


@njit(cache=True)
def sw_twopoint(eu, ev, p, n, spins, n_therm, n_sweeps, n_batches, s, mask, ghost_coupling,
                pu, pv):
    """Batch sums of the ghost-integrated two-point estimators.

    With internal clusters ``C`` and ``t(C) = tanh(sum_{x in C} beta h_x)``,
    returns per batch the sums over sweeps of
    ``c_k = 1[u~v] (1 - t_u t_v) + t_u t_v`` for each pair ``k`` and of
    ``t_x`` for each vertex, together with the per-batch sweep count.
    """
    np.random.seed(s)
    parent = np.empty(n, dtype=np.int64)
    lab = np.empty(n, dtype=np.int64)
    open_ = np.zeros(eu.shape[0], dtype=np.uint8)
    nv = ghost_coupling.shape[0]
    csum = np.zeros((n_batches, pu.shape[0]))
    tsum = np.zeros((n_batches, nv))
    cnt = np.zeros(n_batches, dtype=np.int64)
    hsum = np.zeros(n)
    tval = np.zeros(n)
    per = max(1, n_sweeps // n_batches)
    for _ in range(n_therm):
        _sw_sweep(eu, ev, p, spins, parent, open_)
    for t in range(n_sweeps):
        _sw_sweep(eu, ev, p, spins, parent, open_)
        _labels_from(eu, ev, open_, mask, lab)
        b = min(t // per, n_batches - 1)
        cnt[b] += 1
        for v in range(n):
            hsum[v] = 0.0
        for v in range(nv):
            hsum[lab[v]] += ghost_coupling[v]
        for v in range(n):
            tval[v] = np.tanh(hsum[v])
        for v in range(nv):
            tsum[b, v] += tval[lab[v]]
        for k in range(pu.shape[0]):
            tu = tval[lab[pu[k]]]
            tv = tval[lab[pv[k]]]
            if lab[pu[k]] == lab[pv[k]]:
                csum[b, k] += 1.0
            else:
                csum[b, k] += tu * tv
    return csum, tsum, cnt


# -- worm ---------------------------------------------------------------
ZERO, EVEN, ODD = 0, 1, 2


@njit(cache=True)
def _worm_until_record(indptr, inc_edge, inc_nbr, th, even_p, classes, head, tail, target,
                       thin, n_burn, p_heat, steps, visits, max_steps):
    """Advance the worm to its next recorded configuration.

    Returns ``(head, tail, steps, visits, ok)``; ``ok`` is false when
    ``max_steps`` ran out first.
    """
    m = th.shape[0]
    nv = indptr.shape[0] - 1
    closed = target < 0
    while True:
        steps += 1
        if steps > max_steps:
            return head, tail, steps, visits, False
        u = np.random.random()
        if u < p_heat:
            e = np.random.randint(m)
            if classes[e] != ODD:
                classes[e] = EVEN if np.random.random() < even_p[e] else ZERO
        elif closed and head == tail and u < 2.0 * p_heat:
            tail = np.random.randint(nv)
            head = tail
        else:
            deg = indptr[head + 1] - indptr[head]
            if deg == 0:
                continue
            k = indptr[head] + np.random.randint(deg)
            e = inc_edge[k]
            w = inc_nbr[k]
            ratio = deg / (indptr[w + 1] - indptr[w])
            if classes[e] == ODD:
                acc = ratio / th[e] if th[e] > 0 else 0.0
                if np.random.random() < acc:
                    classes[e] = EVEN if np.random.random() < even_p[e] else ZERO
                    head = w
            else:
                acc = ratio * th[e]
                if np.random.random() < acc:
                    classes[e] = ODD
                    head = w
        hit = head == tail if closed else head == target
        if hit and steps > n_burn:
            visits += 1
            if visits % thin == 0:
                return head, tail, steps, visits, True


@njit(cache=True)
def _worm_tables(coupling):
    m = coupling.shape[0]
    th = np.tanh(coupling)
    even_p = np.empty(m)
    for e in range(m):
        c = np.cosh(coupling[e])
        even_p[e] = (c - 1.0) / c
    return th, even_p


@njit(cache=True)
def worm_chain(indptr, inc_edge, inc_nbr, coupling, tail, head, target, classes, n_samples,
               thin, n_burn, p_heat, s, max_steps):
    """Worm sampler for parity-class currents with sources ``{tail, head}``.

    ``classes`` must have sources ``{tail, head}`` on entry. The
    stationary law on ``(classes, head)`` is proportional to
    ``prod_e f_e(class_e)`` with ``f(zero)=1``, ``f(even)=cosh(b)-1``,
    ``f(odd)=sinh(b)``. The configuration is recorded at every ``thin``-th
    visit of the head to ``target`` after ``n_burn`` steps.

    ``target < 0`` samples source-free currents: the record condition is
    ``head == tail`` and a closed worm may jump to a uniform vertex, which
    keeps every component of the graph reachable.
    """
    np.random.seed(s)
    th, even_p = _worm_tables(coupling)
    out = np.empty((n_samples, coupling.shape[0]), dtype=np.int8)
    steps = 0
    visits = 0
    got = 0
    while got < n_samples:
        head, tail, steps, visits, ok = _worm_until_record(
            indptr, inc_edge, inc_nbr, th, even_p, classes, head, tail, target, thin, n_burn,
            p_heat, steps, visits, max_steps)
        if not ok:
            break
        out[got] = classes
        got += 1
    return out[:got], head, steps


@njit(cache=True)
def _explore_reach(classes, edge_at, nbr, ghost_edge, dist, start, r_stop, seen, touched):
    """Backbone exploration from ``start`` (ghost first, then right, left, straight).

    Stops at the ghost or at the first vertex with ``dist > r_stop``.
    Returns ``(largest dist visited, hit ghost)``.
    """
    u = start
    came = -1
    reach = dist[u]
    nt = 0
    hit_ghost = False
    while True:
        nxt = -1
        e0 = ghost_edge[u]
        if not seen[e0]:
            seen[e0] = True
            touched[nt] = e0
            nt += 1
        if classes[e0] == ODD:
            hit_ghost = True
            break
        for j in range(4):
            if came < 0:
                k = j
            elif j == 0:
                k = (came + 3) % 4
            elif j == 1:
                k = (came + 1) % 4
            elif j == 2:
                k = came
            else:
                break
            e = edge_at[u, k]
            if e < 0 or (seen[e] and classes[e] == ODD):
                continue
            if not seen[e]:
                seen[e] = True
                touched[nt] = e
                nt += 1
            if classes[e] == ODD:
                nxt = k
                break
        if nxt < 0:
            reach = -1  # malformed current
            break
        u = nbr[u, nxt]
        came = nxt
        if dist[u] > reach:
            reach = dist[u]
        if dist[u] > r_stop:
            break
    for i in range(nt):
        seen[touched[i]] = False
    return reach, hit_ghost


@njit(cache=True)
def worm_backbone_reach(indptr, inc_edge, inc_nbr, coupling, tail, head, target, classes,
                        n_samples, thin, n_burn, p_heat, s, max_steps, edge_at, nbr, ghost_edge,
                        dist, start, r_stop):
    """Worm chain that explores the backbone of every recorded current.

    Per sample: the largest ``dist`` reached before stopping and whether the
    backbone ended at the ghost.
    """
    np.random.seed(s)
    th, even_p = _worm_tables(coupling)
    reach = np.empty(n_samples, dtype=np.int64)
    ghost = np.zeros(n_samples, dtype=np.uint8)
    seen = np.zeros(coupling.shape[0], dtype=np.bool_)
    touched = np.empty(coupling.shape[0], dtype=np.int64)
    steps = 0
    visits = 0
    got = 0
    while got < n_samples:
        head, tail, steps, visits, ok = _worm_until_record(
            indptr, inc_edge, inc_nbr, th, even_p, classes, head, tail, target, thin, n_burn,
            p_heat, steps, visits, max_steps)
        if not ok:
            break
        r, gh = _explore_reach(classes, edge_at, nbr, ghost_edge, dist, start, r_stop, seen,
                               touched)
        reach[got] = r
        ghost[got] = gh
        got += 1
    return reach[:got], ghost[:got], steps


@njit(cache=True)
def sw_twopoint_bulk(eu, ev, p, n, spins, n_therm, n_sweeps, n_batches, s, mask,
                     ghost_coupling, grid, lo, hi, rs):
    """Translation-averaged version of :func:`sw_twopoint` on a grid window.

    ``grid[i, j]`` is the vertex at offset ``(i, j)``; pairs are
    ``(u, u + r e)`` for both axes with both ends inside ``[lo, hi)^2``.
    Returns per-batch sums of the pair average ``c(r)``, the window
    average of ``t`` and the sweep counts.
    """
    np.random.seed(s)
    parent = np.empty(n, dtype=np.int64)
    lab = np.empty(n, dtype=np.int64)
    open_ = np.zeros(eu.shape[0], dtype=np.uint8)
    nv = ghost_coupling.shape[0]
    nr = rs.shape[0]
    csum = np.zeros((n_batches, nr))
    tsum = np.zeros(n_batches)
    cnt = np.zeros(n_batches, dtype=np.int64)
    hsum = np.zeros(n)
    tval = np.zeros(n)
    per = max(1, n_sweeps // n_batches)
    w = hi - lo
    for _ in range(n_therm):
        _sw_sweep(eu, ev, p, spins, parent, open_)
    for t in range(n_sweeps):
        _sw_sweep(eu, ev, p, spins, parent, open_)
        _labels_from(eu, ev, open_, mask, lab)
        b = min(t // per, n_batches - 1)
        cnt[b] += 1
        for v in range(n):
            hsum[v] = 0.0
        for v in range(nv):
            hsum[lab[v]] += ghost_coupling[v]
        for v in range(n):
            tval[v] = np.tanh(hsum[v])
        acc = 0.0
        for i in range(lo, hi):
            for j in range(lo, hi):
                acc += tval[lab[grid[i, j]]]
        tsum[b] += acc / (w * w)
        for k in range(nr):
            r = rs[k]
            acc = 0.0
            npair = 0
            for i in range(lo, hi - r):
                for j in range(lo, hi):
                    for ax in range(2):
                        if ax == 0:
                            u = grid[i, j]
                            v = grid[i + r, j]
                        else:
                            u = grid[j, i]
                            v = grid[j, i + r]
                        lu = lab[u]
                        lv = lab[v]
                        if lu == lv:
                            acc += 1.0
                        else:
                            acc += tval[lu] * tval[lv]
                        npair += 1
            csum[b, k] += acc / npair
    return csum, tsum, cnt


# -- conditioned FK heat bath --------------------------------------------
@njit(cache=True)
def _bfs_flags(start, stop, indptr, adj_e, adj_v, open_, skip, side, wired, mark, stamp, queue):
    """Cluster of ``start`` without edge ``skip``: (reaches stop, side flags, touches wired)."""
    mark[start] = stamp
    queue[0] = start
    qh, qt = 0, 1
    fl = side[start]
    wd = wired[start]
    found = False
    while qh < qt:
        x = queue[qh]
        qh += 1
        for k in range(indptr[x], indptr[x + 1]):
            e = adj_e[k]
            if e == skip or not open_[e]:
                continue
            y = adj_v[k]
            if mark[y] == stamp:
                continue
            mark[y] = stamp
            if y == stop:
                found = True
            fl |= side[y]
            wd |= wired[y]
            queue[qt] = y
            qt += 1
    return found, fl, wd


@njit(cache=True)
def _log_cosh_weights(eu, ev, open_, n, wired, parent, size, betaH, out_row):
    """``sum_C log cosh(betaH |C|)`` over clusters, the wired set counting as one."""
    for i in range(n):
        parent[i] = i
    root = -1
    for i in range(n):
        if wired[i]:
            if root < 0:
                root = i
            else:
                _union(parent, root, i)
    for e in range(eu.shape[0]):
        if open_[e]:
            _union(parent, eu[e], ev[e])
    for i in range(n):
        size[i] = 0
    for i in range(n):
        size[_find(parent, i)] += 1
    for j in range(betaH.shape[0]):
        t = 0.0
        for i in range(n):
            if size[i] > 0:
                x = betaH[j] * size[i]
                # log cosh without overflow
                t += x + np.log1p(np.exp(-2.0 * x)) - np.log(2.0)
        out_row[j] = t


@njit(cache=True)
def fk_glauber_logw(eu, ev, p, n, indptr, adj_e, adj_v, side, wired, forbid, n_therm,
                    n_samples, thin, s, betaH):
    """Single-edge heat bath for wired FK at zero field.

    Vertices with ``wired`` set are identified. With ``forbid`` the chain is
    conditioned on no open internal path joining a ``side == 1`` vertex to a
    ``side == 2`` vertex. Every ``thin`` sweeps it records the log cluster
    weight for each entry of ``betaH``.
    """
    np.random.seed(s)
    m = eu.shape[0]
    open_ = np.zeros(m, np.bool_)
    mark = np.zeros(n, np.int64)
    queue = np.empty(n, np.int64)
    parent = np.empty(n, np.int64)
    size = np.empty(n, np.int64)
    out = np.zeros((n_samples, betaH.shape[0]))
    stamp = 0
    rec = 0
    sweep = 0
    while rec < n_samples:
        for _ in range(m):
            e = np.random.randint(m)
            u = eu[e]
            v = ev[e]
            stamp += 1
            found, fu, wu = _bfs_flags(u, v, indptr, adj_e, adj_v, open_, e, side, wired,
                                       mark, stamp, queue)
            fv = 0
            wv = False
            if not found:
                stamp += 1
                _, fv, wv = _bfs_flags(v, -1, indptr, adj_e, adj_v, open_, e, side, wired,
                                       mark, stamp, queue)
            pe = p[e] if (found or (wu and wv)) else p[e] / (2.0 - p[e])
            if np.random.random() < pe:
                open_[e] = not (forbid and not found and (fu | fv) == 3)
            else:
                open_[e] = False
        sweep += 1
        if sweep > n_therm and (sweep - n_therm) % thin == 0:
            _log_cosh_weights(eu, ev, open_, n, wired, parent, size, betaH, out[rec])
            rec += 1
    return out


@njit(cache=True)
def sw_logw(eu, ev, p, n, n_count, spins, wired, n_therm, n_samples, thin, s, betaH):
    """Swendsen-Wang counterpart of :func:`fk_glauber_logw` without conditioning.

    Only the first ``n_count`` vertices and the first ``eu``-listed edges
    enter the weight; wiring must already be present as ``p = 1`` edges.
    """
    np.random.seed(s)
    parent = np.empty(n, dtype=np.int64)
    open_ = np.zeros(eu.shape[0], dtype=np.uint8)
    size = np.empty(n_count, np.int64)
    par2 = np.empty(n_count, np.int64)
    out = np.zeros((n_samples, betaH.shape[0]))
    for _ in range(n_therm):
        _sw_sweep(eu, ev, p, spins, parent, open_)
    for i in range(n_samples):
        for _ in range(thin):
            _sw_sweep(eu, ev, p, spins, parent, open_)
        _log_cosh_weights(eu, ev, open_, n_count, wired, par2, size, betaH, out[i])
    return out
