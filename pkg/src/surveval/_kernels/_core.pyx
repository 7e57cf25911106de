# cython: language_level=3
"""Compiled integration kernels (see _fallback.py for the reference semantics)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, fabs, hypot, sin

cnp.import_array()

cdef enum:
    _BUDGET = 0
    _EXIT = 1
    _CROSSED = 2

STOP_BUDGET = _BUDGET
STOP_EXIT = _EXIT
STOP_CROSSED = _CROSSED


cdef inline double _ue_switch(double s, double scale, double carry) nogil:
    cdef double tol = 1e-12 * scale
    if s > tol:
        return 1.0
    if s < -tol:
        return -1.0
    return carry


def trace_characteristic(
    double x0,
    double y0,
    double lx0,
    double ly0,
    double ue0,
    double dtau,
    int n_max,
    double ve,
    double vp,
    double we,
    double rho,
    double lift_guard=1e-9,
):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n_max + 1, 6), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double x = x0, y = y0, lx = lx0, ly = ly0, ue = ue0
    cdef double rho2 = rho * rho
    cdef bint lifted = x0 > lift_guard
    cdef double x_sign = 1.0 if x0 >= 0.0 else -1.0
    cdef int status = _BUDGET
    cdef int n = 0, i
    cdef bint stopped = False
    cdef double s, lam, h
    cdef double k1x, k1y, k1lx, k1ly, k2x, k2y, k2lx, k2ly
    cdef double k3x, k3y, k3lx, k3ly, k4x, k4y, k4lx, k4ly
    cdef double xs, ys, lxs, lys

    with nogil:
        for i in range(n_max):
            s = lx * y - ly * x
            ue = _ue_switch(s, (fabs(lx) + fabs(ly)) * (fabs(x) + fabs(y)), ue)
            o[n, 0] = x
            o[n, 1] = y
            o[n, 2] = lx
            o[n, 3] = ly
            o[n, 4] = ue
            o[n, 5] = atan2(lx, ly)
            n += 1

            h = 0.5 * dtau
            lam = hypot(lx, ly)
            k1x = -(-we * y * ue + vp * lx / lam)
            k1y = -(we * x * ue - ve + vp * ly / lam)
            k1lx = we * ue * ly
            k1ly = -we * ue * lx

            xs = x + h * k1x
            ys = y + h * k1y
            lxs = lx + h * k1lx
            lys = ly + h * k1ly
            ue = _ue_switch(lxs * ys - lys * xs, (fabs(lxs) + fabs(lys)) * (fabs(xs) + fabs(ys)), ue)
            lam = hypot(lxs, lys)
            k2x = -(-we * ys * ue + vp * lxs / lam)
            k2y = -(we * xs * ue - ve + vp * lys / lam)
            k2lx = we * ue * lys
            k2ly = -we * ue * lxs

            xs = x + h * k2x
            ys = y + h * k2y
            lxs = lx + h * k2lx
            lys = ly + h * k2ly
            ue = _ue_switch(lxs * ys - lys * xs, (fabs(lxs) + fabs(lys)) * (fabs(xs) + fabs(ys)), ue)
            lam = hypot(lxs, lys)
            k3x = -(-we * ys * ue + vp * lxs / lam)
            k3y = -(we * xs * ue - ve + vp * lys / lam)
            k3lx = we * ue * lys
            k3ly = -we * ue * lxs

            xs = x + dtau * k3x
            ys = y + dtau * k3y
            lxs = lx + dtau * k3lx
            lys = ly + dtau * k3ly
            ue = _ue_switch(lxs * ys - lys * xs, (fabs(lxs) + fabs(lys)) * (fabs(xs) + fabs(ys)), ue)
            lam = hypot(lxs, lys)
            k4x = -(-we * ys * ue + vp * lxs / lam)
            k4y = -(we * xs * ue - ve + vp * lys / lam)
            k4lx = we * ue * lys
            k4ly = -we * ue * lxs

            x += dtau / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y += dtau / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            lx += dtau / 6.0 * (k1lx + 2.0 * k2lx + 2.0 * k3lx + k4lx)
            ly += dtau / 6.0 * (k1ly + 2.0 * k2ly + 2.0 * k3ly + k4ly)

            if x * x + y * y > rho2:
                status = _EXIT
                stopped = True
                break
            if not lifted and x * x_sign > lift_guard:
                lifted = True
            if lifted and x * x_sign < 0.0:
                status = _CROSSED
                stopped = True
                break

        if not stopped:
            s = lx * y - ly * x
            ue = _ue_switch(s, (fabs(lx) + fabs(ly)) * (fabs(x) + fabs(y)), ue)
            o[n, 0] = x
            o[n, 1] = y
            o[n, 2] = lx
            o[n, 3] = ly
            o[n, 4] = ue
            o[n, 5] = atan2(lx, ly)
            n += 1

    return out[:n].copy(), status


def flow_values(
    object x0,
    object y0,
    object ue,
    object up,
    double delta,
    double dt_target,
    mlp,
    double ve,
    double vp,
    double we,
    double rho,
):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(y0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uea = np.ascontiguousarray(ue, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] upa = np.ascontiguousarray(up, dtype=np.float64)
    w1a, b1a, w2a, b2a, w3a, b3a, wva, bva = mlp
    cdef double[:, ::1] w1 = np.ascontiguousarray(w1a, dtype=np.float64)
    cdef double[::1] b1 = np.ascontiguousarray(b1a, dtype=np.float64)
    cdef double[:, ::1] w2 = np.ascontiguousarray(w2a, dtype=np.float64)
    cdef double[::1] b2 = np.ascontiguousarray(b2a, dtype=np.float64)
    cdef double[:, ::1] w3 = np.ascontiguousarray(w3a, dtype=np.float64)
    cdef double[::1] b3 = np.ascontiguousarray(b3a, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(wva, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(bva, dtype=np.float64)
    cdef int h1 = w1.shape[0], h2 = w2.shape[0], h3 = w3.shape[0]

    cdef Py_ssize_t nrows = xa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vals = np.zeros(nrows, dtype=np.float64)
    cdef double[::1] v = vals
    cdef double[::1] xv = xa, yv = ya, uev = uea, upv = upa

    cdef int n_steps = <int> (delta / dt_target - 1e-12) + 1
    if n_steps < 1:
        n_steps = 1
    cdef double dt = delta / n_steps
    cdef double rho2 = rho * rho

    cdef cnp.ndarray[cnp.float64_t, ndim=1] scratch = np.empty(h1 + h2 + h3, dtype=np.float64)
    cdef double[::1] zbuf = scratch

    cdef Py_ssize_t r
    cdef int i, j, k
    cdef double x, y, a, bx, by, acc
    cdef double k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y, xs, ys
    cdef bint alive

    with nogil:
        for r in range(nrows):
            x = xv[r]
            y = yv[r]
            a = we * uev[r]
            bx = vp * sin(upv[r])
            by = vp * cos(upv[r]) - ve
            alive = x * x + y * y <= rho2
            for i in range(n_steps):
                if not alive:
                    break
                k1x = -a * y + bx
                k1y = a * x + by
                xs = x + 0.5 * dt * k1x
                ys = y + 0.5 * dt * k1y
                k2x = -a * ys + bx
                k2y = a * xs + by
                xs = x + 0.5 * dt * k2x
                ys = y + 0.5 * dt * k2y
                k3x = -a * ys + bx
                k3y = a * xs + by
                xs = x + dt * k3x
                ys = y + dt * k3y
                k4x = -a * ys + bx
                k4y = a * xs + by
                x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
                if x * x + y * y > rho2:
                    alive = False
            if not alive:
                v[r] = 0.0
                continue
            # value head of the network at the endpoint
            for j in range(h1):
                acc = w1[j, 0] * x + w1[j, 1] * y + b1[j]
                zbuf[j] = acc if acc > 0.0 else 0.0
            for j in range(h2):
                acc = b2[j]
                for k in range(h1):
                    acc += w2[j, k] * zbuf[k]
                zbuf[h1 + j] = acc if acc > 0.0 else 0.0
            for j in range(h3):
                acc = b3[j]
                for k in range(h2):
                    acc += w3[j, k] * zbuf[h1 + k]
                zbuf[h1 + h2 + j] = acc if acc > 0.0 else 0.0
            acc = bv[0]
            for k in range(h3):
                acc += wv[0, k] * zbuf[h1 + h2 + k]
            v[r] = acc if acc > 0.0 else 0.0

    return vals
