"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public functions dispatch on :func:`bosemeasure._backend.use_numba`, which
reads the ``BOSEMEASURE_BACKEND`` environment variable at call time. The
``*_numba`` and ``*_numpy`` variants are importable directly for testing and
benchmarking.

Occupation vectors are stored as rows of an int64 array. A truncated
("at most N particles") space over m modes is handled as a fixed-N sector
over m + 1 modes whose last column is a slack mode; lexicographic order of
the real modes is then the lexicographic order of the padded rows.
"""
import numpy as np
from scipy.special import comb

from ._backend import njit, use_numba


# ---------------------------------------------------------------------------
# occupation basis enumeration and ranking
# ---------------------------------------------------------------------------

def sector_dimension(modes, total):
    """Number of occupation vectors of ``modes`` modes summing to ``total``."""
    if modes == 0:
        return int(total == 0)
    return int(comb(total + modes - 1, modes - 1, exact=True))


@njit
def _enumerate_numba(modes, total, dim):
    out = np.zeros((dim, modes), dtype=np.int64)
    cur = np.zeros(modes, dtype=np.int64)
    cur[modes - 1] = total
    for row in range(dim):
        out[row, :] = cur
        tail = 0
        i = modes - 1
        while i > 0:
            tail += cur[i]
            i -= 1
            if tail > 0:
                break
        if tail == 0:
            break
        cur[i] += 1
        for k in range(i + 1, modes):
            cur[k] = 0
        cur[modes - 1] = tail - 1
    return out


def _enumerate_numpy(modes, total, dim=None):
    if modes == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for first in range(total + 1):
        rest = _enumerate_numpy(modes - 1, total - first)
        head = np.full((rest.shape[0], 1), first, dtype=np.int64)
        blocks.append(np.hstack([head, rest]))
    return np.vstack(blocks)


def enumerate_sector(modes, total):
    """All occupation vectors of a fixed-total sector, lexicographic order."""
    if modes < 1 or total < 0:
        raise ValueError("need modes >= 1 and total >= 0")
    dim = sector_dimension(modes, total)
    if use_numba():
        return _enumerate_numba(modes, total, dim)
    return _enumerate_numpy(modes, total)


def rank_offsets(modes, total):
    """Offset table ``off[i, t, v]`` for lexicographic ranking.

    ``off[i, t, v]`` counts the vectors that precede any vector whose entry
    ``i`` equals ``v`` given that ``t`` particles remain for entries ``i..``.
    The rank of a vector is the sum of ``off[i, t_i, n_i]`` over ``i < modes-1``.
    """
    count = np.zeros((modes + 1, total + 1), dtype=np.int64)
    count[0, 0] = 1
    for m in range(1, modes + 1):
        for t in range(total + 1):
            count[m, t] = sector_dimension(m, t)
    off = np.zeros((modes, total + 1, total + 1), dtype=np.int64)
    for i in range(modes - 1):
        tail_modes = modes - i - 1
        for t in range(total + 1):
            acc = 0
            for v in range(t + 1):
                off[i, t, v] = acc
                acc += count[tail_modes, t - v]
    return off


@njit
def _rank_one(state, total, off):
    r = 0
    remaining = total
    for i in range(state.shape[0] - 1):
        r += off[i, remaining, state[i]]
        remaining -= state[i]
    return r


@njit
def _rank_numba(states, total, off):
    out = np.empty(states.shape[0], dtype=np.int64)
    for row in range(states.shape[0]):
        out[row] = _rank_one(states[row], total, off)
    return out


def _rank_numpy(states, total, off):
    states = np.asarray(states, dtype=np.int64)
    remaining = total - np.concatenate(
        [np.zeros((states.shape[0], 1), dtype=np.int64),
         np.cumsum(states[:, :-1], axis=1)], axis=1)
    cols = np.arange(states.shape[1] - 1)
    return off[cols[None, :], remaining[:, :-1], states[:, :-1]].sum(axis=1)


def rank_states(states, total, off):
    """Lexicographic index of each row of ``states`` within its sector."""
    states = np.ascontiguousarray(states, dtype=np.int64)
    if use_numba():
        return _rank_numba(states, total, off)
    return _rank_numpy(states, total, off)


# ---------------------------------------------------------------------------
# ladder-operator monomials in coordinate format
# ---------------------------------------------------------------------------

@njit
def _monomial_coo_numba(states, total, off, term_modes, daggers, coeffs, slack_col):
    n_terms, length = term_modes.shape
    dim, width = states.shape
    rows = np.empty(n_terms * dim, dtype=np.int64)
    cols = np.empty(n_terms * dim, dtype=np.int64)
    vals = np.empty(n_terms * dim, dtype=np.complex128)
    work = np.empty(width, dtype=np.int64)
    nnz = 0
    for t in range(n_terms):
        c = coeffs[t]
        if c == 0:
            continue
        for s in range(dim):
            for k in range(width):
                work[k] = states[s, k]
            amp = 1.0
            ok = True
            # rightmost operator acts first
            for j in range(length - 1, -1, -1):
                mode = term_modes[t, j]
                if daggers[j]:
                    if slack_col >= 0:
                        if work[slack_col] == 0:
                            ok = False
                            break
                        work[slack_col] -= 1
                    work[mode] += 1
                    amp *= np.sqrt(work[mode])
                else:
                    if work[mode] == 0:
                        ok = False
                        break
                    amp *= np.sqrt(work[mode])
                    work[mode] -= 1
                    if slack_col >= 0:
                        work[slack_col] += 1
            if not ok:
                continue
            rows[nnz] = _rank_one(work, total, off)
            cols[nnz] = s
            vals[nnz] = c * amp
            nnz += 1
    return rows[:nnz], cols[:nnz], vals[:nnz]


def _monomial_coo_numpy(states, total, off, term_modes, daggers, coeffs, slack_col):
    dim = states.shape[0]
    source = np.arange(dim)
    rows, cols, vals = [], [], []
    for t in range(term_modes.shape[0]):
        c = coeffs[t]
        if c == 0:
            continue
        work = states.copy()
        amp = np.ones(dim)
        ok = np.ones(dim, dtype=bool)
        for j in range(term_modes.shape[1] - 1, -1, -1):
            mode = term_modes[t, j]
            if daggers[j]:
                if slack_col >= 0:
                    ok &= work[:, slack_col] > 0
                    work[:, slack_col] -= 1
                work[:, mode] += 1
                amp = amp * np.sqrt(np.maximum(work[:, mode], 0))
            else:
                ok &= work[:, mode] > 0
                amp = amp * np.sqrt(np.maximum(work[:, mode], 0))
                work[:, mode] -= 1
                if slack_col >= 0:
                    work[:, slack_col] += 1
        if not ok.any():
            continue
        good = work[ok]
        rows.append(_rank_numpy(good, total, off))
        cols.append(source[ok])
        vals.append(c * amp[ok])
    if not rows:
        return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                np.zeros(0, dtype=np.complex128))
    return (np.concatenate(rows), np.concatenate(cols),
            np.concatenate(vals).astype(np.complex128))


def monomial_coo(states, total, off, term_modes, daggers, coeffs, slack_col=-1):
    """Coordinate entries of ``sum_t coeffs[t] * op_t`` on an occupation basis.

    Each term is a product of ladder operators ``term_modes[t, 0..L-1]`` with
    creation/annihilation flags ``daggers`` shared by all terms, written left
    to right (the rightmost acts first). ``slack_col >= 0`` marks a padded
    slack column that absorbs particle-number changes. Duplicate coordinates
    are left for the caller to sum.
    """
    states = np.ascontiguousarray(states, dtype=np.int64)
    term_modes = np.ascontiguousarray(np.atleast_2d(term_modes), dtype=np.int64)
    daggers = np.ascontiguousarray(daggers, dtype=np.bool_)
    coeffs = np.ascontiguousarray(np.atleast_1d(coeffs), dtype=np.complex128)
    if use_numba():
        return _monomial_coo_numba(states, total, off, term_modes, daggers,
                                   coeffs, slack_col)
    return _monomial_coo_numpy(states, total, off, term_modes, daggers,
                               coeffs, slack_col)


# ---------------------------------------------------------------------------
# one-dimensional transport on sorted atoms
# ---------------------------------------------------------------------------

@njit
def _w1_cdf_numba(xa, wa, xb, wb):
    i = 0
    j = 0
    fa = 0.0
    fb = 0.0
    total = 0.0
    na = xa.shape[0]
    nb = xb.shape[0]
    prev = 0.0
    started = False
    while i < na or j < nb:
        if j >= nb or (i < na and xa[i] <= xb[j]):
            z = xa[i]
        else:
            z = xb[j]
        if started:
            total += (z - prev) * abs(fa - fb)
        while i < na and xa[i] == z:
            fa += wa[i]
            i += 1
        while j < nb and xb[j] == z:
            fb += wb[j]
            j += 1
        prev = z
        started = True
    return total


def _w1_cdf_numpy(xa, wa, xb, wb):
    grid = np.union1d(xa, xb)
    fa = np.concatenate([[0.0], np.cumsum(wa)])[np.searchsorted(xa, grid, side="right")]
    fb = np.concatenate([[0.0], np.cumsum(wb)])[np.searchsorted(xb, grid, side="right")]
    return float(np.sum(np.diff(grid) * np.abs(fa[:-1] - fb[:-1])))


def w1_cdf_sorted(xa, wa, xb, wb):
    """Exact integral of ``|F_a - F_b|`` for measures on sorted atoms."""
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (xa, wa, xb, wb)]
    if use_numba():
        return float(_w1_cdf_numba(*args))
    return _w1_cdf_numpy(*args)


@njit
def _wp_quantile_numba(xa, wa, xb, wb, p):
    # walk the merged cumulative-weight grid of both measures
    i = 0
    j = 0
    ca = wa[0]
    cb = wb[0]
    t = 0.0
    total = 0.0
    na = xa.shape[0]
    nb = xb.shape[0]
    while True:
        nxt = min(ca, cb)
        if nxt > t:
            total += (nxt - t) * abs(xa[i] - xb[j]) ** p
            t = nxt
        if ca <= cb:
            i += 1
            if i >= na:
                break
            ca += wa[i]
        else:
            j += 1
            if j >= nb:
                break
            cb += wb[j]
    # absorb round-off slack at the top of [0, 1]
    if t < 1.0:
        total += (1.0 - t) * abs(xa[min(i, na - 1)] - xb[min(j, nb - 1)]) ** p
    return total


def _wp_quantile_numpy(xa, wa, xb, wb, p):
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    ts = np.union1d(ca, cb)
    ts = np.concatenate([[0.0], ts[ts > 0.0]])
    if ts[-1] < 1.0:
        ts = np.append(ts, 1.0)
    mids = 0.5 * (ts[:-1] + ts[1:])
    qa = xa[np.minimum(np.searchsorted(ca, mids, side="right"), xa.size - 1)]
    qb = xb[np.minimum(np.searchsorted(cb, mids, side="right"), xb.size - 1)]
    return float(np.sum(np.diff(ts) * np.abs(qa - qb) ** p))


def wp_quantile_sorted(xa, wa, xb, wb, p):
    """Exact ``int_0^1 |Q_a(t) - Q_b(t)|^p dt`` (not yet p-th rooted)."""
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (xa, wa, xb, wb)]
    if use_numba():
        return float(_wp_quantile_numba(*args, float(p)))
    return _wp_quantile_numpy(*args, float(p))


@njit
def _w1_counts_numba(counts, n, grid, ref_cdf):
    reps, k = counts.shape
    out = np.empty(reps, dtype=np.float64)
    for r in range(reps):
        cum = 0
        acc = 0.0
        for i in range(k - 1):
            cum += counts[r, i]
            acc += (grid[i + 1] - grid[i]) * abs(cum / n - ref_cdf[i])
        out[r] = acc
    return out


def _w1_counts_numpy(counts, n, grid, ref_cdf):
    cum = np.cumsum(counts, axis=1)[:, :-1] / n
    return np.abs(cum - ref_cdf[None, :-1]) @ np.diff(grid)


def w1_counts_batch(counts, n, grid, ref_cdf):
    """W1 between many empirical measures and one reference on a shared grid.

    ``counts[r, i]`` is the number of outcomes equal to ``grid[i]`` in
    replica ``r``; ``ref_cdf[i]`` is the reference CDF at ``grid[i]``.
    """
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    ref_cdf = np.ascontiguousarray(ref_cdf, dtype=np.float64)
    if use_numba():
        return _w1_counts_numba(counts, float(n), grid, ref_cdf)
    return _w1_counts_numpy(counts, float(n), grid, ref_cdf)


# ---------------------------------------------------------------------------
# radial ODE
# ---------------------------------------------------------------------------

@njit
def _rk4_radial_numba(r, v_node, v_mid, lam):
    n = r.shape[0]
    u = np.zeros(n)
    du = np.zeros(n)
    u[0] = 0.0
    du[0] = 1.0
    for i in range(n - 1):
        h = r[i + 1] - r[i]
        q0 = 0.5 * v_node[i] - lam
        qm = 0.5 * v_mid[i] - lam
        q1 = 0.5 * v_node[i + 1] - lam
        y0 = u[i]
        z0 = du[i]
        k1y = z0
        k1z = q0 * y0
        k2y = z0 + 0.5 * h * k1z
        k2z = qm * (y0 + 0.5 * h * k1y)
        k3y = z0 + 0.5 * h * k2z
        k3z = qm * (y0 + 0.5 * h * k2y)
        k4y = z0 + h * k3z
        k4z = q1 * (y0 + h * k3y)
        u[i + 1] = y0 + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        du[i + 1] = z0 + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    return u, du


_rk4_radial_numpy = _rk4_radial_numba.py_func if hasattr(_rk4_radial_numba, "py_func") \
    else _rk4_radial_numba


def rk4_radial(r, v_node, v_mid, lam=0.0):
    """Integrate ``u'' = (V/2 - lam) u`` with ``u(0) = 0, u'(0) = 1``.

    Classical fourth-order Runge-Kutta on the (possibly nonuniform) node
    array ``r``; ``v_node`` holds V at the nodes and ``v_mid`` at interval
    midpoints. Returns ``(u, u')`` at the nodes.
    """
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (r, v_node, v_mid)]
    if use_numba():
        return _rk4_radial_numba(*args, float(lam))
    return _rk4_radial_numpy(*args, float(lam))
