"""Batched Dormand-Prince 8(5,3) stepping for complex linear systems.

All members of a batch share one step-size sequence: the step is accepted
only when every component of every member meets ``atol + rtol * |y|``
(max norm). Sharing the mesh is what makes finite differences across batch
members smooth.
"""

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import NonFinite, StepFailure

N_STAGES = _dop.N_STAGES
A = _dop.A[:N_STAGES, :N_STAGES]
B = _dop.B
C = _dop.C[:N_STAGES]
E3 = _dop.E3
E5 = _dop.E5

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ORDER_EXP = -1.0 / 8.0


def _error_norm(K, h, scale):
    err5 = np.tensordot(E5, K, axes=1) / scale
    err3 = np.tensordot(E3, K, axes=1) / scale
    e5 = np.abs(err5) ** 2
    e3 = np.abs(err3) ** 2
    denom = e5 + 0.01 * e3
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(denom > 0, e5 / np.sqrt(np.where(denom > 0, denom, 1.0)), 0.0)
    return abs(h) * float(np.max(ratio))


def integrate(fun, x0, x1, y0, rtol, atol, max_step, h0=None, f0=None):
    """Advance ``y' = fun(x, y)`` from ``x0`` to ``x1``.

    ``y0`` is a complex array of any shape; ``fun`` must return the same
    shape. Returns ``(y1, h_last, n_steps)``; ``h_last`` is a reasonable
    first step for a following segment.
    """
    y = np.array(y0, dtype=complex)
    span = x1 - x0
    if span == 0.0:
        return y, h0, 0
    direction = 1.0 if span > 0 else -1.0
    length = abs(span)
    h = min(max_step, length) if h0 is None else min(abs(h0), max_step, length)
    if h <= 0:
        h = min(max_step, length)
    x = x0
    f = fun(x, y) if f0 is None else f0
    K = np.empty((N_STAGES + 1,) + y.shape, dtype=complex)
    n_steps = 0
    min_h = 1e-14 * max(1.0, abs(x0), abs(x1))
    while True:
        remaining = abs(x1 - x)
        if remaining <= 1e-15 * max(1.0, abs(x1)):
            break
        last = h >= remaining
        if last:
            h = remaining
        while True:
            hs = direction * h
            K[0] = f
            for s in range(1, N_STAGES):
                dy = np.tensordot(A[s, :s], K[:s], axes=1)
                K[s] = fun(x + C[s] * hs, y + hs * dy)
            y_new = y + hs * np.tensordot(B, K[:N_STAGES], axes=1)
            x_new = x1 if last else x + hs
            f_new = fun(x_new, y_new)
            K[N_STAGES] = f_new
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _error_norm(K, h, scale)
            if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
                if h <= min_h:
                    raise NonFinite(f"solution overflow near x={x:.6g}")
                h *= MIN_FACTOR
                last = False
                continue
            if err <= 1.0:
                factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** ORDER_EXP)
                break
            h *= max(MIN_FACTOR, SAFETY * err ** ORDER_EXP)
            last = False
            if h < min_h:
                raise StepFailure(f"step size underflow at x={x:.6g}")
        y, f, x = y_new, f_new, x_new
        n_steps += 1
        if last:
            break
        h = min(h * factor, max_step)
    return y, h, n_steps


# --------------------------------------------------------------------------
# compiled kernel for the pencil system
#
# state rows: y, y', and (with derivative) dy/dlam, dy'/dlam
# potentials: kind 0 = stack of cosine series (rows 1 or B), kind 1 = one
# shared piecewise cubic on a uniform grid

import numba as nb  # noqa: E402

_A = np.ascontiguousarray(A, dtype=np.float64)
_B = np.ascontiguousarray(B, dtype=np.float64)
_C = np.ascontiguousarray(C, dtype=np.float64)
_E3 = np.ascontiguousarray(E3, dtype=np.float64)
_E5 = np.ascontiguousarray(E5, dtype=np.float64)


@nb.njit(cache=True)
def _potentials_at(x, kind, cos_p, cos_q, modes, origin, nodes, pp_p, pp_q, out_p, out_q):
    if kind == 0:
        rows = cos_p.shape[0]
        for j in range(rows):
            out_p[j] = 0.0
            out_q[j] = 0.0
        for k in range(modes.shape[0]):
            c = np.cos(modes[k] * (x - origin))
            for j in range(rows):
                out_p[j] += cos_p[j, k] * c
                out_q[j] += cos_q[j, k] * c
    else:
        n = pp_p.shape[0]
        h = nodes[1] - nodes[0]
        i = int((x - nodes[0]) / h)
        if i < 0:
            i = 0
        if i > n - 1:
            i = n - 1
        t = x - nodes[i]
        out_p[0] = ((pp_p[i, 0] * t + pp_p[i, 1]) * t + pp_p[i, 2]) * t + pp_p[i, 3]
        out_q[0] = ((pp_q[i, 0] * t + pp_q[i, 1]) * t + pp_q[i, 2]) * t + pp_q[i, 3]


@nb.njit(cache=True)
def _pencil_rhs(x, s, out, lams, delta, kind, cos_p, cos_q, modes, origin, nodes,
                pp_p, pp_q, pbuf, qbuf):
    _potentials_at(x, kind, cos_p, cos_q, modes, origin, nodes, pp_p, pp_q, pbuf, qbuf)
    m, nbatch = s.shape
    shared = pbuf.shape[0] == 1 or kind == 1
    for j in range(nbatch):
        jj = 0 if shared else j
        p = pbuf[jj]
        q = qbuf[jj]
        lam = lams[j]
        g = 2.0 * lam * p + q - lam * lam * delta
        out[0, j] = s[1, j]
        out[1, j] = g * s[0, j]
        if m == 4:
            out[2, j] = s[3, j]
            out[3, j] = g * s[2, j] + (2.0 * p - 2.0 * lam * delta) * s[0, j]


@nb.njit(cache=True)
def integrate_pencil(x0, x1, s0, lams, delta, kind, cos_p, cos_q, modes, origin, nodes,
                     pp_p, pp_q, rtol, atol, max_step, h0,
                     a_tab, b_tab, c_tab, e3_tab, e5_tab):
    """Compiled twin of :func:`integrate` specialised to the pencil system.

    Returns ``(state, h_last, n_steps, status)``; status 0 = ok,
    1 = step-size underflow, 2 = overflow.
    """
    m, nbatch = s0.shape
    y = s0.copy()
    span = x1 - x0
    if span == 0.0:
        return y, h0, 0, 0
    direction = 1.0 if span > 0 else -1.0
    length = abs(span)
    h = min(max_step, length)
    if h0 > 0.0:
        h = min(h0, h)
    rows = max(cos_p.shape[0], 1)
    pbuf = np.zeros(rows)
    qbuf = np.zeros(rows)
    ns = b_tab.shape[0]
    K = np.empty((ns + 1, m, nbatch), dtype=np.complex128)
    tmp = np.empty((m, nbatch), dtype=np.complex128)
    y_new = np.empty((m, nbatch), dtype=np.complex128)
    f = np.empty((m, nbatch), dtype=np.complex128)
    x = x0
    _pencil_rhs(x, y, f, lams, delta, kind, cos_p, cos_q, modes, origin, nodes,
                pp_p, pp_q, pbuf, qbuf)
    n_steps = 0
    min_h = 1e-14 * max(1.0, max(abs(x0), abs(x1)))
    while True:
        remaining = abs(x1 - x)
        if remaining <= 1e-15 * max(1.0, abs(x1)):
            break
        last = h >= remaining
        if last:
            h = remaining
        factor = 1.0
        while True:
            hs = direction * h
            K[0] = f
            for st in range(1, ns):
                for r in range(m):
                    for j in range(nbatch):
                        acc = 0.0 + 0.0j
                        for q in range(st):
                            acc += a_tab[st, q] * K[q, r, j]
                        tmp[r, j] = y[r, j] + hs * acc
                _pencil_rhs(x + c_tab[st] * hs, tmp, K[st], lams, delta, kind, cos_p, cos_q,
                            modes, origin, nodes, pp_p, pp_q, pbuf, qbuf)
            for r in range(m):
                for j in range(nbatch):
                    acc = 0.0 + 0.0j
                    for q in range(ns):
                        acc += b_tab[q] * K[q, r, j]
                    y_new[r, j] = y[r, j] + hs * acc
            x_new = x1 if last else x + hs
            _pencil_rhs(x_new, y_new, K[ns], lams, delta, kind, cos_p, cos_q, modes, origin,
                        nodes, pp_p, pp_q, pbuf, qbuf)
            err = 0.0
            finite = True
            for r in range(m):
                for j in range(nbatch):
                    yn = y_new[r, j]
                    if not (np.isfinite(yn.real) and np.isfinite(yn.imag)):
                        finite = False
                    sc = atol + rtol * max(abs(y[r, j]), abs(yn))
                    e5 = 0.0 + 0.0j
                    e3 = 0.0 + 0.0j
                    for q in range(ns + 1):
                        e5 += e5_tab[q] * K[q, r, j]
                        e3 += e3_tab[q] * K[q, r, j]
                    a5 = (abs(e5) / sc) ** 2
                    a3 = (abs(e3) / sc) ** 2
                    den = a5 + 0.01 * a3
                    if den > 0.0:
                        v = a5 / np.sqrt(den)
                        if v > err:
                            err = v
            err *= h
            if not finite or not np.isfinite(err):
                if h <= min_h:
                    return y, h, n_steps, 2
                h *= MIN_FACTOR
                last = False
                continue
            if err <= 1.0:
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * err ** ORDER_EXP)
                break
            h *= max(MIN_FACTOR, SAFETY * err ** ORDER_EXP)
            last = False
            if h < min_h:
                return y, h, n_steps, 1
        y[:, :] = y_new
        f[:, :] = K[ns]
        x = x_new
        n_steps += 1
        if last:
            break
        h = min(h * factor, max_step)
    return y, h, n_steps, 0


def compiled_tables():
    return _A, _B, _C, _E3, _E5
