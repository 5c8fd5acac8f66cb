"""Numerical checks of the identities behind the uniqueness argument.

* ``u_functional`` / ``split_u``: the mismatch integral over ``[0, pi/2]``
  of ``[2 lam P + Q] phi phit`` with ``P = p - pt``, ``Q = q - qt``.
* ``green_identity_residual``: ``|U + phit'(pi) phi(pi) - phi'(pi) phit(pi)|``,
  which vanishes when the two problems share their right halves.
* ``volterra_trivial_check``: Picard iterates of a homogeneous Volterra
  equation of the second kind decay factorially to zero.
* ``wronskian_drift``: the Wronskian of two solutions is constant, also
  across the transmission points.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as C

from . import forward
from ._validation import check_lambda_grid, check_positive_int
from .errors import SpecMismatch, UnboundedKernel, ValidationError
from .model import HALF_PI, PI, CosinePotentials, ProblemSpec, SplicedPotentials

__all__ = [
    "u_functional",
    "split_u",
    "green_identity_residual",
    "green_sweep",
    "write_sweep_csv",
    "wronskian_drift",
    "VolterraProblem",
    "volterra_trivial_check",
    "shared_eigenvalue_partner",
]

GL_PER_PANEL = 20
NODES_PER_WAVELENGTH = 6
OVERFLOW_GUARD = 1e150


def _same_constants(a: ProblemSpec, b: ProblemSpec) -> None:
    if a.weight != b.weight:
        raise SpecMismatch("weights differ")
    for i, (ja, jb) in enumerate(zip(a.jumps, b.jumps)):
        if (ja.location, ja.alpha, ja.gamma) != (jb.location, jb.alpha, jb.gamma):
            raise SpecMismatch(f"jump {i + 1} constants differ")


def _same_right_half(a: ProblemSpec, b: ProblemSpec, n: int = 97) -> None:
    x = np.linspace(HALF_PI, PI, n)[1:]
    for name in ("p", "q"):
        fa = np.asarray(getattr(a.potentials, name)(x), dtype=float)
        fb = np.asarray(getattr(b.potentials, name)(x), dtype=float)
        if np.max(np.abs(fa - fb)) > 1e-12 * max(1.0, np.max(np.abs(fa))):
            raise SpecMismatch(f"right-half {name} differs")


def _left_nodes(spec: ProblemSpec, lam: complex, quad_n: int):
    """Gauss-Legendre nodes/weights on ``[0, pi/2]`` with a panel edge at ``a1``."""
    if quad_n < 50:
        raise ValidationError("quad_n must be >= 50")
    cuts = [0.0, HALF_PI]
    if 0.0 < spec.a1 < HALF_PI:
        cuts = [0.0, spec.a1, HALF_PI]
    wavelength = 2.0 * math.pi / max(abs(lam) * spec.weight.alpha, 1e-300)
    gx, gw = np.polynomial.legendre.leggauss(GL_PER_PANEL)
    xs, ws = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        length = hi - lo
        n_total = max(quad_n * length / HALF_PI, NODES_PER_WAVELENGTH * length / wavelength)
        panels = max(1, int(math.ceil(n_total / GL_PER_PANEL)))
        edges = np.linspace(lo, hi, panels + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            xs.append(0.5 * (b - a) * gx + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * gw)
    return np.concatenate(xs), np.concatenate(ws)


def _products(specA, specB, lam, quad_n, cfg):
    _same_constants(specA, specB)
    lam = complex(lam)
    x, w = _left_nodes(specA, lam, quad_n)
    pa = forward.shoot(specA, [lam], x, cfg).y[:, 0]
    pb = forward.shoot(specB, [lam], x, cfg).y[:, 0]
    P = np.asarray(specA.potentials.p(x)) - np.asarray(specB.potentials.p(x))
    Q = np.asarray(specA.potentials.q(x)) - np.asarray(specB.potentials.q(x))
    return lam, w * pa * pb, P, Q


def split_u(specA: ProblemSpec, specB: ProblemSpec, lam, quad_n: int = 200,
            cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS):
    """``(U1, U2) = (int P phi phit, int Q phi phit)`` over ``[0, pi/2]``."""
    _, wf, P, Q = _products(specA, specB, lam, quad_n, cfg)
    return complex(np.sum(wf * P)), complex(np.sum(wf * Q))


def u_functional(specA: ProblemSpec, specB: ProblemSpec, lam, quad_n: int = 200,
                 cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> complex:
    """``U(lam) = int_0^{pi/2} [2 lam P + Q] phi phit dx``; equals ``2 lam U1 + U2``."""
    u1, u2 = split_u(specA, specB, lam, quad_n, cfg)
    return 2.0 * complex(lam) * u1 + u2


def green_identity_residual(specA: ProblemSpec, specB: ProblemSpec, lam, quad_n: int = 200,
                            cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> float:
    """``|U(lam) + phit'(pi) phi(pi) - phi'(pi) phit(pi)|``.

    ``phi`` belongs to ``specA`` and ``phit`` to ``specB``; both values and
    derivatives at ``pi`` come from the same integration pass.
    """
    _same_constants(specA, specB)
    _same_right_half(specA, specB)
    u = u_functional(specA, specB, lam, quad_n, cfg)
    a = forward.shoot(specA, [lam], [PI], cfg)
    b = forward.shoot(specB, [lam], [PI], cfg)
    boundary = b.dy[0, 0] * a.y[0, 0] - a.dy[0, 0] * b.y[0, 0]
    return float(abs(u + boundary))


def green_sweep(specA: ProblemSpec, specB: ProblemSpec, lams, quad_n: int = 200,
                cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS):
    """Rows ``(re_lambda, im_lambda, residual)``."""
    return [(float(l.real), float(l.imag), green_identity_residual(specA, specB, l, quad_n, cfg))
            for l in check_lambda_grid(lams)]


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re_lambda", "im_lambda", "residual"])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def wronskian_drift(spec: ProblemSpec, lam, n_checkpoints: int = 20,
                    cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> np.ndarray:
    """Relative change of ``W = y1 y2' - y1' y2`` at checkpoints in ``(0, pi]``.

    ``y1`` starts from ``(1, 0)`` and ``y2`` from ``(0, 1)``, so ``W(0) = 1``.
    The checkpoints include both jump locations (sampled after the jump).
    """
    check_positive_int(n_checkpoints, "n_checkpoints")
    xs = set(np.linspace(0.0, PI, n_checkpoints + 1)[1:].tolist())
    xs.update(j.location for j in spec.jumps if j.location > 0.0)
    xs = np.array(sorted(xs))
    lam = complex(lam)
    shot = forward.shoot(spec, [lam, lam], xs, cfg,
                         initial=(np.array([1.0, 0.0]), np.array([0.0, 1.0])))
    w = shot.y[:, 0] * shot.dy[:, 1] - shot.dy[:, 0] * shot.y[:, 1]
    return np.abs(w - 1.0)


# --------------------------------------------------------------------------
# Volterra


@dataclass(frozen=True)
class VolterraProblem:
    """``S(t) + int_t^{t_hi} K(x, t) S(x) dx = 0`` on ``[t_lo, t_hi]``.

    ``kernel(x, t)`` returns a ``dimension x dimension`` matrix (or a scalar
    when ``dimension == 1``). ``rule`` is ``"chebyshev"`` (Clenshaw-Curtis
    cumulative integration on Chebyshev points, exact for polynomials up to
    the grid degree) or ``"trapezoid"`` (composite, uniform grid).
    """

    dimension: int
    kernel: Callable
    interval: tuple = (0.0, HALF_PI)
    grid_n: int = 64
    rule: str = "chebyshev"

    def __post_init__(self):
        check_positive_int(self.dimension, "dimension")
        check_positive_int(self.grid_n, "grid_n")
        if self.grid_n < 2:
            raise ValidationError("grid_n must be >= 2")
        lo, hi = self.interval
        if not hi > lo:
            raise ValidationError("interval must have positive length")
        if self.rule not in ("chebyshev", "trapezoid"):
            raise ValidationError(f"unknown rule {self.rule!r}")

    def grid(self) -> np.ndarray:
        lo, hi = self.interval
        if self.rule == "trapezoid":
            return np.linspace(lo, hi, self.grid_n)
        k = np.arange(self.grid_n)
        u = np.cos(np.pi * k / (self.grid_n - 1))[::-1]
        return 0.5 * (hi - lo) * u + 0.5 * (hi + lo)

    def tail_weights(self) -> np.ndarray:
        """``W[i, j]``: weight of ``g(x_j)`` in ``int_{x_i}^{t_hi} g``."""
        x = self.grid()
        n = x.size
        lo, hi = self.interval
        if self.rule == "trapezoid":
            W = np.zeros((n, n))
            h = np.diff(x)
            for i in range(n - 1):
                W[i, i:-1] += 0.5 * h[i:]
                W[i, i + 1:] += 0.5 * h[i:]
            return W
        u = (2.0 * x - (hi + lo)) / (hi - lo)
        V = C.chebvander(u, n - 1)
        anti = np.column_stack([C.chebval(u, C.chebint(np.eye(n)[k])) for k in range(n)])
        end = np.array([C.chebval(1.0, C.chebint(np.eye(n)[k])) for k in range(n)])
        return 0.5 * (hi - lo) * (end[None, :] - anti) @ np.linalg.inv(V)


def volterra_trivial_check(vp: VolterraProblem, s0, iters: int):
    """Picard iteration ``S_{k+1}(t) = -int_t^{t_hi} K(x, t) S_k(x) dx``.

    ``s0`` is a callable of ``t`` or an array on ``vp.grid()``. Returns
    ``(final_norm, norm_history)`` with sup norms over grid and components;
    ``norm_history[0]`` is the norm of ``s0``.
    """
    check_positive_int(iters, "iters")
    x = vp.grid()
    n, d = x.size, vp.dimension
    K = np.empty((n, n, d, d), dtype=complex)
    for i, t in enumerate(x):
        for j, xx in enumerate(x):
            K[i, j] = np.asarray(vp.kernel(xx, t), dtype=complex).reshape(d, d)
    if not np.all(np.isfinite(K)) or np.max(np.abs(K)) > OVERFLOW_GUARD:
        raise UnboundedKernel("kernel is not bounded on the grid")
    S = np.asarray([s0(t) for t in x] if callable(s0) else s0, dtype=complex).reshape(n, d)
    if not np.all(np.isfinite(S)):
        raise ValidationError("s0 must be finite on the grid")
    W = vp.tail_weights()
    history = [float(np.max(np.abs(S)))]
    for _ in range(iters):
        # S_new[i] = -sum_j W[i, j] K[i, j] S[j]
        S = -np.einsum("ij,ijab,jb->ia", W, K, S)
        history.append(float(np.max(np.abs(S))))
    return history[-1], history


# --------------------------------------------------------------------------
# partner problems with shared eigenvalues


def shared_eigenvalue_partner(spec: ProblemSpec, eigenvalues, shift: float = 0.3,
                              basis_dim: int | None = None,
                              cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS,
                              tol: float = 1e-13, max_iter: int = 50) -> ProblemSpec:
    """A second problem with the same constants and right half whose left-half
    ``q`` differs, chosen so that the given eigenvalues of ``spec`` are also
    its eigenvalues.

    ``spec.potentials`` must be a cosine series in ``cos(k (x - pi/2))``.
    The left ``q`` gets ``shift`` added to its constant coefficient and the
    next ``len(eigenvalues)`` coefficients are solved for by Newton's method
    on ``Delta_partner(lam_n) = 0``.
    """
    pots = spec.potentials
    if not (isinstance(pots, CosinePotentials) and pots.freq == 1.0 and pots.origin == HALF_PI):
        raise ValidationError("partner construction needs cos(k (x - pi/2)) potentials")
    lams = check_lambda_grid(eigenvalues)
    m = lams.size
    dim = max(m + 1, pots.q_coef.size, pots.p_coef.size) if basis_dim is None else basis_dim
    if dim < m + 1:
        raise ValidationError("basis_dim must exceed the number of shared eigenvalues")
    p = np.zeros(dim)
    p[:pots.p_coef.size] = pots.p_coef
    q0 = np.zeros(dim)
    q0[:pots.q_coef.size] = pots.q_coef
    q0[0] += shift

    def make(d):
        q = q0.copy()
        q[1:m + 1] += d
        left = CosinePotentials(p, q, origin=HALF_PI, domain=(0.0, HALF_PI))
        return SplicedPotentials(left, pots)

    def values(ds):
        members = [make(d) for d in ds]
        batch = [pc for pc in members for _ in range(m)]
        out = forward.char_fn_batch(spec, np.tile(lams, len(ds)), cfg, potentials=batch)
        return out.reshape(len(ds), m)

    d = np.zeros(m)
    h = 1e-7
    for _ in range(max_iter):
        rows = values([d] + [d + h * e for e in np.eye(m)])
        f = rows[0]
        if np.max(np.abs(f)) <= tol:
            break
        J = ((rows[1:] - f) / h).T
        Jr = np.vstack([J.real, J.imag])
        fr = np.concatenate([f.real, f.imag])
        d = d + np.linalg.lstsq(Jr, -fr, rcond=None)[0]
    else:
        raise ValidationError("partner construction did not converge")
    return spec.replace(potentials=make(d))
