"""Pure NumPy versions of the hot kernels (fallback for ``_ckernels``).

Reductions use the same ordering as the compiled versions (row by row,
left to right), so the two backends agree to round-off and usually bit for
bit on assembly and row sums.
"""
import numpy as np

INDICATOR, BUMP = 0, 1
EDGE_TOL = 1e-9

_BLOCK_BYTES = 32 * 2**20
_MAX_ITER = 200


def _profile(s, family):
    out = np.zeros_like(s)
    inside = s < 1.0
    if family == INDICATOR:
        out[s < 1.0 - EDGE_TOL] = 1.0
    else:
        si = s[inside]
        out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


def _rows_per_block(n):
    return max(1, _BLOCK_BYTES // (8 * max(n, 1)))


def _distances(centers, rows):
    if centers.shape[1] == 1:
        return np.abs(centers[rows, 0][:, None] - centers[None, :, 0])
    dx = centers[rows, 0][:, None] - centers[None, :, 0]
    dy = centers[rows, 1][:, None] - centers[None, :, 1]
    return np.sqrt(dx * dx + dy * dy)


def assemble_dense(centers, family, eps, amplitude, cell_volume):
    """Return ``(K, row_sums)`` with ``K_ij = rho_eps(r_ij) / r_ij^2 * h^d``."""
    centers = np.ascontiguousarray(centers, dtype=float)
    n, dim = centers.shape
    scale = amplitude * eps ** (-dim) * cell_volume
    K = np.empty((n, n))
    row_sums = np.empty(n)
    step = _rows_per_block(n)
    for start in range(0, n, step):
        rows = np.arange(start, min(n, start + step))
        r = _distances(centers, rows)
        rho = _profile(r / eps, family)
        with np.errstate(divide="ignore", invalid="ignore"):
            blk = np.where(r > 0.0, scale * rho / (r * r), 0.0)
        K[rows] = blk
        row_sums[rows] = np.cumsum(blk, axis=1)[:, -1]
    return K, row_sums


def pair_energy_sum(K, phi):
    """``sum_i sum_j K_ij (phi_i - phi_j)^2``, rows then columns, left to right."""
    phi = np.ascontiguousarray(phi, dtype=float)
    n = phi.size
    totals = np.empty(n)
    step = _rows_per_block(n)
    for start in range(0, n, step):
        stop = min(n, start + step)
        d = phi[start:stop, None] - phi[None, :]
        totals[start:stop] = np.cumsum(K[start:stop] * (d * d), axis=1)[:, -1]
    return float(np.cumsum(totals)[-1])


def resolvent_poly(r, lam):
    """Yosida data for ``gamma(s) = s^3``: returns ``(J, gamma_lam, gamma_lam')``.

    Newton on ``J + lam J^3 = |r|`` started from an upper bound, so the
    iterates decrease monotonically onto the root.
    """
    shape = np.shape(r)
    r = np.atleast_1d(np.asarray(r, dtype=float)).ravel()
    s = np.abs(r)
    J = np.minimum(s, np.cbrt(s / lam))
    active = s > 0.0
    for _ in range(_MAX_ITER):
        if not active.any():
            break
        Ja = J[active]
        f = Ja + lam * Ja**3 - s[active]
        step = f / (1.0 + 3.0 * lam * Ja * Ja)
        J[active] = Ja - step
        done = (step <= 4.0e-16 * Ja) | (J[active] <= 0.0)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    J = np.copysign(J, r)
    g = J**3
    dg = 3.0 * J * J / (1.0 + 3.0 * lam * J * J)
    return J.reshape(shape), g.reshape(shape), dg.reshape(shape)


def _sech2(t):
    e = np.exp(-2.0 * t)
    return 4.0 * e / ((1.0 + e) ** 2)


def resolvent_log(r, lam, theta):
    """Yosida data for ``gamma(s) = theta * artanh(s)``.

    Solved in ``t = artanh(J)``: ``tanh t + lam theta t = |r|`` is concave and
    increasing in ``t``, so Newton from ``t = 0`` climbs monotonically onto
    the root. ``gamma_lam = theta t`` is then exact even where ``tanh t``
    rounds to 1. Returns ``(J, gamma_lam, gamma_lam', t)``.
    """
    shape = np.shape(r)
    r = np.atleast_1d(np.asarray(r, dtype=float)).ravel()
    s = np.abs(r)
    lt = lam * theta
    t = np.zeros_like(s)
    active = s > 0.0
    for _ in range(_MAX_ITER):
        if not active.any():
            break
        ta = t[active]
        f = s[active] - np.tanh(ta) - lt * ta
        step = f / (_sech2(ta) + lt)
        t[active] = ta + step
        done = step <= 4.0e-16 * (ta + step)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    t = np.copysign(t, r).reshape(shape)
    J = np.tanh(t)
    return J, theta * t, theta / (_sech2(np.abs(t)) + lt), t
