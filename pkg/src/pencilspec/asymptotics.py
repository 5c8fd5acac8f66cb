"""Leading-order solution ``phi0``, its characteristic function ``Delta0``,
and remainder diagnostics against the integrated ``Delta``.

The closed forms are kept literally, including the unscaled ``a1``
offsets in the phase maps; they are not forced to agree with the shooting
solver (for trivial jumps ``Delta0(0) = 2 alpha_2`` while ``Delta(0) = 1``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import forward
from .errors import DomainError, ScanExhausted, ValidationError
from .model import HALF_PI, PI, ProblemSpec

__all__ = [
    "PhaseMaps",
    "AsymptoticCoefficients",
    "PhaseIntegrals",
    "Estimates",
    "phi0",
    "char_fn0",
    "eigenvalue_estimates",
    "remainder_report",
    "write_remainder_csv",
]


@dataclass(frozen=True)
class PhaseMaps:
    """Affine phase maps ``xi+-``, ``k+-``, ``s+-``."""

    alpha: float
    beta: float
    a1: float
    a2: float

    @classmethod
    def of(cls, spec: ProblemSpec) -> "PhaseMaps":
        return cls(spec.weight.alpha, spec.weight.beta, spec.a1, spec.a2)

    def xi_plus(self, x):
        return self.alpha * x - self.alpha * self.a1 + self.a1

    def xi_minus(self, x):
        return -self.alpha * x + self.alpha * self.a1 + self.a1

    def k_plus(self, x):
        return self.xi_plus(self.a2) + self.beta * x - self.beta * self.a2

    def k_minus(self, x):
        return self.xi_plus(self.a2) - self.beta * x + self.beta * self.a2

    def s_plus(self, x):
        return self.xi_minus(self.a2) + self.beta * x - self.beta * self.a2

    def s_minus(self, x):
        return self.xi_minus(self.a2) - self.beta * x + self.beta * self.a2


@dataclass(frozen=True)
class AsymptoticCoefficients:
    beta1_plus: float
    beta1_minus: float
    beta2_plus: float
    beta2_minus: float
    gamma1_shift: float
    gamma2_shift: float

    @classmethod
    def of(cls, spec: ProblemSpec) -> "AsymptoticCoefficients":
        al, be = spec.weight.alpha, spec.weight.beta
        j1, j2 = spec.jumps
        return cls(
            beta1_plus=0.5 * (j1.alpha + j1.beta / al),
            beta1_minus=0.5 * (j1.alpha - j1.beta / al),
            beta2_plus=0.5 * (j2.alpha + al * j2.beta / be),
            beta2_minus=0.5 * (j2.alpha - al * j2.beta / be),
            gamma1_shift=j1.gamma / (2.0 * al),
            gamma2_shift=j2.gamma / (2.0 * be),
        )

    def right_amplitudes(self) -> tuple[float, float, float, float]:
        """Amplitudes of the ``k+, k-, s+, s-`` cosines right of ``pi/2``."""
        g = self.gamma2_shift
        return (self.beta2_plus + g, self.beta2_minus + g,
                self.beta2_minus - g, self.beta2_plus - g)


@dataclass(frozen=True)
class PhaseIntegrals:
    """Integrals of ``p`` entering the phases.

    ``beta_of_x`` is the running integral from 0, named after its symbol in
    the literature; it is unrelated to the weight constant ``beta``.
    """

    spec: ProblemSpec

    def v(self, x):
        return self.spec.potentials.integrate_p(self.spec.a1, x)

    def t(self, x):
        return self.spec.potentials.integrate_p(self.spec.a2, x)

    def beta_of_x(self, x):
        return self.spec.potentials.integrate_p(0.0, x)

    def omega(self, x):
        pots = self.spec.potentials
        return pots.integrate_p(self.spec.a2, x) + pots.integrate_p(0.0, self.spec.a1)

    def w_pi(self):
        return self.t(PI)


def phi0(spec: ProblemSpec, lam, x: float, follow_x: bool = False):
    """Leading term of ``phi(x, lam)``.

    Left of ``pi/2`` this is the two-cosine combination. Right of ``pi/2``
    the four-cosine combination has its arguments pinned at
    ``pi`` (``k+-(pi)``, ``s+-(pi)``, ``int_{a2}^{pi} p``), so it does not
    depend on ``x``; ``follow_x=True`` substitutes ``x`` for ``pi``
    instead. ``lam`` may be an array.
    """
    x = float(x)
    if not 0.0 < x <= PI:
        raise DomainError(f"phi0 needs x in (0, pi], got {x}")
    if x == HALF_PI:
        raise DomainError("phi0 switches formula at x = pi/2")
    lam = np.asarray(lam, dtype=complex)
    maps = PhaseMaps.of(spec)
    co = AsymptoticCoefficients.of(spec)
    ints = PhaseIntegrals(spec)
    al, be = spec.weight.alpha, spec.weight.beta
    if x < HALF_PI:
        v = ints.v(x)
        g = co.gamma1_shift
        out = ((co.beta1_plus + g) * np.cos(lam * maps.xi_plus(x) - v / al)
               + (co.beta1_minus - g) * np.cos(lam * maps.xi_minus(x) + v / al))
    else:
        xe = x if follow_x else PI
        t = ints.t(xe) / be
        c1, c2, c3, c4 = co.right_amplitudes()
        out = (c1 * np.cos(lam * maps.k_plus(xe) - t)
               + c2 * np.cos(lam * maps.k_minus(xe) - t)
               + c3 * np.cos(lam * maps.s_plus(xe) + t)
               + c4 * np.cos(lam * maps.s_minus(xe) + t))
    return complex(out) if out.ndim == 0 else out


def char_fn0(spec: ProblemSpec, lam):
    """``Delta0(lam) = phi0(pi, lam)``."""
    return phi0(spec, lam, PI)


class Estimates(list):
    """Ascending real zero estimates; ``source`` records how they were found."""

    source = "asymptotic"


def _coefficient_mass(spec: ProblemSpec) -> float:
    return float(sum(abs(c) for c in AsymptoticCoefficients.of(spec).right_amplitudes()))


def _bisect(f, a, b, fa, tol=1e-13, max_iter=200):
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
        if b - a <= tol * max(1.0, abs(m)):
            break
    return 0.5 * (a + b)


def _scan_zeros(values_on, n_max, step, hi0, max_steps):
    """Sign-change scan of a real function on ``[0, hi]``, doubling ``hi``."""
    hi = hi0
    while True:
        n = int(math.ceil(hi / step))
        if n > max_steps:
            raise ScanExhausted(f"found fewer than {n_max} zeros within {max_steps} steps")
        grid = np.linspace(0.0, n * step, n + 1)
        vals = values_on(grid)
        sign = np.sign(vals)
        idx = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
        zeros = []
        for i in idx:
            if sign[i] == 0:
                z = grid[i]
            elif sign[i + 1] == 0:
                continue
            else:
                z = _bisect(lambda t: float(values_on(np.array([t]))[0]),
                            grid[i], grid[i + 1], vals[i])
            if not zeros or z - zeros[-1] > 0.5 * step:
                zeros.append(float(z))
        if len(zeros) >= n_max:
            return zeros[:n_max]
        hi *= 2.0


def eigenvalue_estimates(spec: ProblemSpec, n_max: int, exact: bool = False,
                         cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> Estimates:
    """First ``n_max`` nonnegative real zeros of ``Delta0`` (or of ``Delta``).

    ``exact=True`` scans the integrated ``Delta`` instead (oracle mode); the
    same happens automatically when ``Delta0`` degenerates to zero.
    """
    if n_max < 0:
        raise ValidationError("n_max must be nonnegative")
    out = Estimates()
    if n_max == 0:
        return out
    maps = PhaseMaps.of(spec)
    kp = maps.k_plus(PI)
    spacing = PI / kp
    step = min(0.01, spacing / 20.0)
    hi0 = (n_max + 1) * spacing + 1.0
    max_steps = 10_000 * n_max

    degenerate = _coefficient_mass(spec) < 1e-12
    if not exact and not degenerate:
        zeros = _scan_zeros(lambda g: np.real(char_fn0(spec, g)), n_max, step, hi0, max_steps)
        probe = np.abs(char_fn0(spec, np.linspace(0.0, hi0, 4001)))
        if np.max(probe) > 1e-12:
            out.extend(zeros)
            return out
        degenerate = True

    # scan Delta itself; sample along the real axis and use sign changes of
    # Re Delta when Delta is real there, |Delta| dips otherwise
    hi = n_max * PI / kp + 5.0
    step = 0.01
    while True:
        n = int(math.ceil(hi / step))
        if n > max_steps:
            raise ScanExhausted(f"found fewer than {n_max} zeros of Delta within {max_steps} steps")
        grid = np.linspace(0.0, n * step, n + 1)
        vals = forward.char_fn_batch(spec, grid, cfg)
        if np.max(np.abs(vals.imag)) <= 1e-8 * max(1.0, np.max(np.abs(vals.real))):
            re = vals.real
            sign = np.sign(re)
            idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
            zeros = [float(grid[i] - re[i] * step / (re[i + 1] - re[i])) for i in idx]
            zeros += [float(grid[i]) for i in np.nonzero(sign == 0)[0]]
            zeros.sort()
        else:
            mag = np.abs(vals)
            idx = np.nonzero((mag[1:-1] < mag[:-2]) & (mag[1:-1] <= mag[2:]))[0] + 1
            zeros = [float(grid[i]) for i in idx]
        if len(zeros) >= n_max:
            out.extend(zeros[:n_max])
            out.source = "exact-fallback" if degenerate and not exact else "exact"
            return out
        hi *= 2.0


def remainder_report(spec: ProblemSpec, lambdas: Iterable[float],
                     cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS):
    """Rows ``(lam, |Delta - Delta0|, |lam| |Delta - Delta0|)``, one per input."""
    lams = np.asarray(list(lambdas), dtype=float)
    if lams.size == 0:
        return []
    diff = np.abs(forward.char_fn_batch(spec, lams, cfg) - char_fn0(spec, lams))
    return [(float(l), float(d), float(abs(l) * d)) for l, d in zip(lams, diff)]


def write_remainder_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "abs_diff", "scaled_diff"])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
