"""Compiled event loop for the continuous-time dynamics.

Bond rates ``m_b * c_b(eta)`` live in the leaves of a complete binary tree
whose internal nodes hold the sum of their two children.  An event redraws the
leaves of the bonds touching the two updated sites and recomputes their
ancestors from the children, so the root never accumulates rounding drift.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _leaf_rate(b, spins, bx, by, mult, table):
    return mult[b] * table[(spins[bx[b]] + 1) * 3 + spins[by[b]] + 1]


@njit(cache=True, nogil=True)
def _set_leaf(tree, size, b, value):
    node = size + b
    tree[node] = value
    node >>= 1
    while node >= 1:
        tree[node] = tree[2 * node] + tree[2 * node + 1]
        node >>= 1


@njit(cache=True, nogil=True)
def _pick(tree, size, u):
    node = 1
    while node < size:
        left = 2 * node
        if u < tree[left]:
            node = left
        else:
            u -= tree[left]
            node = left + 1
    return node - size


@njit(cache=True, nogil=True)
def _bond_drift(b, spins, bx, by, mult, table, move_x, move_y, hvals, k):
    a = spins[bx[b]]
    c = spins[by[b]]
    key = (a + 1) * 3 + c + 1
    rate = mult[b] * table[key]
    if rate == 0.0:
        return 0.0
    dx = move_x[key] - a
    dy = move_y[key] - c
    return rate * (hvals[k, bx[b]] * dx + hvals[k, by[b]] * dy)


@njit(cache=True, nogil=True)
def run_kernel(
    spins,  # int8[n], modified in place
    bx,
    by,
    mult,  # int64[B]
    table,  # float64[9]
    move_x,
    move_y,  # int8[9]
    inc_ptr,
    inc_idx,  # CSR incidence site -> bonds
    clock,  # N^2
    scale,  # N^-d, weight of one site in <pi, H>
    T,
    snap_times,  # float64[S], sorted
    hvals,  # float64[nH, n]
    seed,
    max_events,
    snapshots,  # int8[S, n] output
    pairings,  # float64[S, nH] output
    integrals,  # float64[S, nH] output
):
    np.random.seed(seed)
    nb = bx.shape[0]
    n_h = hvals.shape[0]
    size = 1
    while size < nb:
        size *= 2
    tree = np.zeros(2 * size)
    for b in range(nb):
        tree[size + b] = _leaf_rate(b, spins, bx, by, mult, table)
    for node in range(size - 1, 0, -1):
        tree[node] = tree[2 * node] + tree[2 * node + 1]

    # per-bond drift contributions and their sums, one row per test function
    contrib = np.zeros((n_h, nb))
    drift = np.zeros(n_h)
    pair = np.zeros(n_h)
    integ = np.zeros(n_h)
    for k in range(n_h):
        for x in range(spins.shape[0]):
            pair[k] += scale * hvals[k, x] * spins[x]
        for b in range(nb):
            contrib[k, b] = _bond_drift(b, spins, bx, by, mult, table, move_x, move_y, hvals, k)
            drift[k] += contrib[k, b]

    n_snap = snap_times.shape[0]
    s = 0
    t = 0.0
    events = 0
    touched = np.empty(inc_idx.shape[0], dtype=np.int64)
    while True:
        total = tree[1]
        if total > 0.0:
            dt = -np.log(1.0 - np.random.random()) / (clock * total)
            t_next = t + dt
        else:
            t_next = np.inf
        while s < n_snap and snap_times[s] < t_next:
            snapshots[s, :] = spins
            for k in range(n_h):
                # integral is piecewise linear between events
                pairings[s, k] = pair[k]
                integrals[s, k] = integ[k] + clock * scale * drift[k] * (snap_times[s] - t)
            s += 1
        if t_next > T:
            break
        if events >= max_events:
            return -1
        for k in range(n_h):
            integ[k] += clock * scale * drift[k] * dt
        t = t_next

        b = nb
        while True:
            b = _pick(tree, size, np.random.random() * tree[1])
            if b < nb and tree[size + b] > 0.0:
                break
        x = bx[b]
        y = by[b]
        key = (spins[x] + 1) * 3 + spins[y] + 1
        old_x = spins[x]
        old_y = spins[y]
        spins[x] = move_x[key]
        spins[y] = move_y[key]
        events += 1

        for k in range(n_h):
            pair[k] += scale * (hvals[k, x] * (spins[x] - old_x) + hvals[k, y] * (spins[y] - old_y))

        n_touch = 0
        for site in (x, y):
            for j in range(inc_ptr[site], inc_ptr[site + 1]):
                touched[n_touch] = inc_idx[j]
                n_touch += 1
        for j in range(n_touch):
            bb = touched[j]
            _set_leaf(tree, size, bb, _leaf_rate(bb, spins, bx, by, mult, table))
            for k in range(n_h):
                new = _bond_drift(bb, spins, bx, by, mult, table, move_x, move_y, hvals, k)
                drift[k] += new - contrib[k, bb]
                contrib[k, bb] = new

        # refresh running sums occasionally to keep incremental error bounded
        if events % 65536 == 0:
            for k in range(n_h):
                acc = 0.0
                for bb in range(nb):
                    acc += contrib[k, bb]
                drift[k] = acc
    return events
