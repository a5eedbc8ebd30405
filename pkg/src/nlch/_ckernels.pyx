# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same contract as ``nlch._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt, tanh, cbrt, copysign, fmin

cnp.import_array()

DEF MAX_ITER = 200
DEF EDGE_TOL = 1e-9

INDICATOR = 0
BUMP = 1


cdef inline double _profile(double s, int family) nogil:
    if family == 0:
        return 1.0 if s < 1.0 - EDGE_TOL else 0.0
    if s >= 1.0:
        return 0.0
    return exp(-1.0 / (1.0 - s * s))


def assemble_dense(centers, int family, double eps, double amplitude, double cell_volume):
    cdef const double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], dim = c.shape[1], i, j
    cdef double scale = amplitude * eps ** (-<double>dim) * cell_volume
    cdef double r, dx, dy, v, acc
    K_arr = np.empty((n, n), dtype=np.float64)
    rs_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] K = K_arr
    cdef double[::1] rs = rs_arr
    # full rows keep writes contiguous; r_ij == r_ji exactly since c_i - c_j == -(c_j - c_i)
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(n):
                dx = c[i, 0] - c[j, 0]
                if dim == 1:
                    r = fabs(dx)
                else:
                    dy = c[i, 1] - c[j, 1]
                    r = sqrt(dx * dx + dy * dy)
                v = 0.0
                if r > 0.0 and r < eps:
                    v = scale * _profile(r / eps, family) / (r * r)
                K[i, j] = v
                acc = acc + v
            rs[i] = acc
    return K_arr, rs_arr


def pair_energy_sum(K_in, phi_in):
    cdef const double[:, ::1] K = np.ascontiguousarray(K_in, dtype=np.float64)
    cdef const double[::1] phi = np.ascontiguousarray(phi_in, dtype=np.float64)
    cdef Py_ssize_t n = phi.shape[0], i, j
    cdef double total = 0.0, row, d
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(n):
                d = phi[i] - phi[j]
                row = row + K[i, j] * (d * d)
            total = total + row
    return total


def resolvent_poly(r_in, double lam):
    r_arr = np.ascontiguousarray(r_in, dtype=np.float64)
    shape = np.shape(r_in)
    cdef const double[::1] r = r_arr.ravel()
    cdef Py_ssize_t n = r.shape[0], i, k
    J_arr = np.empty(n)
    g_arr = np.empty(n)
    dg_arr = np.empty(n)
    cdef double[::1] J = J_arr, g = g_arr, dg = dg_arr
    cdef double s, x, f, step
    with nogil:
        for i in range(n):
            s = fabs(r[i])
            x = fmin(s, cbrt(s / lam))
            if s > 0.0:
                for k in range(MAX_ITER):
                    f = x + lam * x * x * x - s
                    step = f / (1.0 + 3.0 * lam * x * x)
                    x = x - step
                    if step <= 4.0e-16 * x or x <= 0.0:
                        break
            x = copysign(x, r[i])
            J[i] = x
            g[i] = x * x * x
            dg[i] = 3.0 * x * x / (1.0 + 3.0 * lam * x * x)
    return J_arr.reshape(shape), g_arr.reshape(shape), dg_arr.reshape(shape)


cdef inline double _sech2(double t) nogil:
    cdef double e = exp(-2.0 * t)
    return 4.0 * e / ((1.0 + e) * (1.0 + e))


def resolvent_log(r_in, double lam, double theta):
    r_arr = np.ascontiguousarray(r_in, dtype=np.float64)
    shape = np.shape(r_in)
    cdef const double[::1] r = r_arr.ravel()
    cdef Py_ssize_t n = r.shape[0], i, k
    J_arr = np.empty(n)
    g_arr = np.empty(n)
    dg_arr = np.empty(n)
    t_arr = np.empty(n)
    cdef double[::1] J = J_arr, g = g_arr, dg = dg_arr, tt = t_arr
    cdef double s, t, f, step, lt = lam * theta
    with nogil:
        for i in range(n):
            s = fabs(r[i])
            t = 0.0
            if s > 0.0:
                for k in range(MAX_ITER):
                    f = s - tanh(t) - lt * t
                    step = f / (_sech2(t) + lt)
                    t = t + step
                    if step <= 4.0e-16 * t:
                        break
            dg[i] = theta / (_sech2(t) + lt)
            t = copysign(t, r[i])
            tt[i] = t
            J[i] = tanh(t)
            g[i] = theta * t
    return (J_arr.reshape(shape), g_arr.reshape(shape),
            dg_arr.reshape(shape), t_arr.reshape(shape))
