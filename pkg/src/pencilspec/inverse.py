"""Half-inverse reconstruction: recover ``p, q`` on ``[0, pi/2]`` from one
spectrum when the constants and the right-half potentials are known.

The unknowns are cosine coefficients of ``p`` and ``q`` in the basis
``cos(k (x - pi/2))``, ``k = 0 .. basis_dim - 1``, on ``[0, pi/2]`` (even
about ``pi/2``, so no boundary value is imposed there). The data misfit is
``Delta_candidate(lam_n)`` at the target eigenvalues, minimised by a
Levenberg-Marquardt loop whose finite-difference Jacobian columns ride in
the same integrator batch as the base point.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import forward
from ._validation import check_eigenvalues, check_positive_int, check_spec
from .errors import AllDiverged, IllConditioned, MaxIterations, NonFinite, StepFailure, ValidationError
from .model import HALF_PI, CosinePotentials, Potentials, ProblemSpec, SplicedPotentials

__all__ = [
    "ReconstructionConfig",
    "ReconstructionReport",
    "LMResult",
    "left_basis",
    "candidate_potentials",
    "residual_vector",
    "levenberg_marquardt",
    "reconstruct",
    "uniqueness_probe",
    "constants_probe",
    "l2_distance",
    "HalfInverseReconstructor",
]

COND_LIMIT = 1e12
FD_STEP = 1e-6


@dataclass(frozen=True)
class ReconstructionConfig:
    basis_dim: int = 6
    n_eigen: int = 24
    regularization: float = 1e-12
    max_iter: int = 100
    grad_tol: float = 1e-10
    step_tol: float = 1e-12
    multistart: int = 1
    seed: int | None = None
    continuity_penalty: float = 0.0

    def __post_init__(self):
        check_positive_int(self.basis_dim, "basis_dim")
        check_positive_int(self.n_eigen, "n_eigen")
        check_positive_int(self.max_iter, "max_iter")
        check_positive_int(self.multistart, "multistart")
        if self.n_eigen < 2 * self.basis_dim:
            raise ValidationError(
                f"n_eigen={self.n_eigen} < 2*basis_dim={2 * self.basis_dim}: "
                "p and q together need at least that many eigenvalues")
        for name in ("regularization", "grad_tol", "step_tol", "continuity_penalty"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be finite and nonnegative")

    @property
    def n_params(self) -> int:
        return 2 * self.basis_dim


@dataclass
class ReconstructionReport:
    recovered: CosinePotentials
    objective_history: list
    final_residual: float
    jacobian_condition: float
    multistart_distances: np.ndarray
    converged: bool
    seed: int | None = None
    iterations: int = 0
    reason: str = ""
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    runs: list = field(default_factory=list)

    def summary(self) -> dict:
        d = self.multistart_distances
        return {
            "converged": bool(self.converged),
            "reason": self.reason,
            "iterations": int(self.iterations),
            "final_residual": float(self.final_residual),
            "final_objective": float(self.objective_history[-1]) if self.objective_history else None,
            "jacobian_condition": float(self.jacobian_condition),
            "max_pairwise_distance": float(d.max()) if d.size else 0.0,
            "seed": self.seed,
            "p_coefficients": [float(v) for v in self.recovered.p_coef],
            "q_coefficients": [float(v) for v in self.recovered.q_coef],
        }


# --------------------------------------------------------------------------
# parameterisation


def left_basis(p_coef, q_coef) -> CosinePotentials:
    """Left-half candidate in the ``cos(k (x - pi/2))`` basis."""
    return CosinePotentials(p_coef, q_coef, freq=1.0, origin=HALF_PI, domain=(0.0, HALF_PI))


def _split(theta, basis_dim):
    theta = np.asarray(theta, dtype=float)
    return theta[:basis_dim], theta[basis_dim:]


def candidate_potentials(theta, known_right: Potentials, basis_dim: int) -> SplicedPotentials:
    p, q = _split(theta, basis_dim)
    return SplicedPotentials(left_basis(p, q), known_right)


def residual_vector(candidate: Potentials, known_right: Potentials, spec_template: ProblemSpec,
                    target, cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> np.ndarray:
    """``Delta`` of the spliced candidate problem at each target eigenvalue.

    Only the candidate's values on ``[0, pi/2]`` and the known values on
    ``[pi/2, pi]`` enter.
    """
    lams = check_eigenvalues(target, allow_empty=True)
    if lams.size == 0:
        return np.zeros(0, dtype=complex)
    spec = spec_template.replace(potentials=SplicedPotentials(candidate, known_right))
    return forward.char_fn_batch(spec, lams, cfg)


def _batched_residuals(thetas, known_right, spec_template, lams, basis_dim, cfg):
    """Residual vectors for several parameter vectors in one integrator batch."""
    pots = []
    for th in thetas:
        pc = candidate_potentials(th, known_right, basis_dim)
        pots.extend([pc] * lams.size)
    all_lams = np.tile(lams, len(thetas))
    vals = forward.char_fn_batch(spec_template, all_lams, cfg, potentials=pots)
    return vals.reshape(len(thetas), lams.size)


def _real_residual(r_complex, theta, reg, penalty_row=None):
    parts = [r_complex.real, r_complex.imag, math.sqrt(reg) * np.asarray(theta)]
    if penalty_row is not None:
        parts.append(penalty_row)
    return np.concatenate(parts)


# --------------------------------------------------------------------------
# generic Levenberg-Marquardt


@dataclass
class LMResult:
    x: np.ndarray
    history: list
    converged: bool
    reason: str
    iterations: int
    condition: float
    residual: np.ndarray


def levenberg_marquardt(residual: Callable[[np.ndarray], np.ndarray],
                        residual_and_jacobian: Callable[[np.ndarray], tuple],
                        x0, max_iter: int = 100, grad_tol: float = 1e-10,
                        step_tol: float = 1e-12, objective_floor: float = 0.0) -> LMResult:
    """Minimise ``||r(x)||^2`` with Marquardt-scaled damping.

    Only steps that lower the objective are accepted, so the history is
    non-increasing. Warns :class:`IllConditioned` when the Jacobian's
    condition number exceeds 1e12 (damping is then raised) and
    :class:`MaxIterations` when the budget runs out.
    """
    x = np.array(x0, dtype=float)
    r, J = residual_and_jacobian(x)
    f = float(r @ r)
    history = [f]
    mu = 1e-3
    cond = float("nan")
    if f <= objective_floor:
        return LMResult(x, history, True, "objective floor", 0, cond, r)
    for it in range(1, max_iter + 1):
        g = J.T @ r
        if np.max(np.abs(g)) <= grad_tol:
            return LMResult(x, history, True, "gradient tolerance", it - 1, cond, r)
        JtJ = J.T @ J
        sv = np.linalg.svd(J, compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
        if cond > COND_LIMIT:
            warnings.warn(f"Jacobian condition {cond:.3g} exceeds {COND_LIMIT:.0e}",
                          IllConditioned, stacklevel=2)
            mu = max(mu, 1e-2)
        scale = np.maximum(np.diag(JtJ), 1e-30)
        accepted = False
        while mu < 1e16:
            try:
                step = np.linalg.solve(JtJ + mu * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            x_try = x + step
            try:
                r_try = residual(x_try)
                f_try = float(r_try @ r_try)
            except (NonFinite, StepFailure):
                f_try = math.inf
            if f_try < f:
                accepted = True
                mu = max(mu / 3.0, 1e-12)
                break
            if np.linalg.norm(step) <= step_tol * (np.linalg.norm(x) + step_tol):
                break
            mu *= 4.0
        if not accepted:
            return LMResult(x, history, True, "step tolerance", it - 1, cond, r)
        small = np.linalg.norm(step) <= step_tol * (np.linalg.norm(x) + step_tol)
        x = x_try
        r, J = residual_and_jacobian(x)
        f = float(r @ r)
        history.append(f)
        if small:
            return LMResult(x, history, True, "step tolerance", it, cond, r)
        if f <= objective_floor:
            return LMResult(x, history, True, "objective floor", it, cond, r)
    warnings.warn(f"Levenberg-Marquardt stopped after {max_iter} iterations", MaxIterations,
                  stacklevel=2)
    return LMResult(x, history, False, "max iterations", max_iter, cond, r)


# --------------------------------------------------------------------------
# reconstruction


def _problem(known_right, spec_template, target, cfg: ReconstructionConfig,
             icfg: forward.IntegratorSettings):
    check_spec(spec_template)
    lams = check_eigenvalues(target)
    if lams.size < cfg.n_eigen:
        raise ValidationError(f"target has {lams.size} eigenvalues, n_eigen={cfg.n_eigen}")
    lams = lams[:cfg.n_eigen]
    D = cfg.basis_dim
    reg = cfg.regularization
    pen = math.sqrt(cfg.continuity_penalty)
    right_p0 = float(known_right.p(HALF_PI))
    right_q0 = float(known_right.q(HALF_PI))

    def penalty(theta):
        if pen == 0.0:
            return None
        p, q = _split(theta, D)
        # the basis is even about pi/2, so its value there is the coefficient sum
        return pen * np.array([p.sum() - right_p0, q.sum() - right_q0])

    def residual(theta):
        r = _batched_residuals([theta], known_right, spec_template, lams, D, icfg)[0]
        return _real_residual(r, theta, reg, penalty(theta))

    def residual_and_jacobian(theta):
        theta = np.asarray(theta, dtype=float)
        steps = FD_STEP * np.maximum(np.abs(theta), 1.0)
        thetas = [theta] + [theta + s * e for s, e in zip(steps, np.eye(theta.size))]
        rows = _batched_residuals(thetas, known_right, spec_template, lams, D, icfg)
        base = _real_residual(rows[0], theta, reg, penalty(theta))
        cols = [(_real_residual(rows[k + 1], thetas[k + 1], reg, penalty(thetas[k + 1])) - base)
                / steps[k] for k in range(theta.size)]
        return base, np.column_stack(cols)

    return residual, residual_and_jacobian, lams


def jacobian_fd(known_right, spec_template, target, theta, cfg: ReconstructionConfig,
                central: bool = False, step_scale: float = 1.0,
                icfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> np.ndarray:
    """Complex Jacobian of ``residual_vector`` in the coefficients.

    Forward differences with the production step, or central differences
    at ``step_scale`` times it; exposed for smoothness checks.
    """
    lams = check_eigenvalues(target)[:cfg.n_eigen]
    theta = np.asarray(theta, dtype=float)
    steps = step_scale * FD_STEP * np.maximum(np.abs(theta), 1.0)
    eye = np.eye(theta.size)
    if central:
        thetas = [theta + s * e for s, e in zip(steps, eye)] + \
                 [theta - s * e for s, e in zip(steps, eye)]
        rows = _batched_residuals(thetas, known_right, spec_template, lams, cfg.basis_dim, icfg)
        n = theta.size
        return ((rows[:n] - rows[n:]) / (2.0 * steps[:, None])).T
    thetas = [theta] + [theta + s * e for s, e in zip(steps, eye)]
    rows = _batched_residuals(thetas, known_right, spec_template, lams, cfg.basis_dim, icfg)
    return ((rows[1:] - rows[0]) / steps[:, None]).T


def reconstruct(known_right: Potentials, spec_template: ProblemSpec, target,
                cfg: ReconstructionConfig, initial=None,
                icfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> ReconstructionReport:
    """Least-squares recovery of the left-half coefficients from ``target``.

    ``initial`` is the starting coefficient vector ``[p_0..p_{D-1},
    q_0..q_{D-1}]`` (zeros by default).
    """
    residual, res_jac, lams = _problem(known_right, spec_template, target, cfg, icfg)
    x0 = np.zeros(cfg.n_params) if initial is None else np.asarray(initial, dtype=float)
    if x0.shape != (cfg.n_params,):
        raise ValidationError(f"initial must have {cfg.n_params} entries")
    floor = 1e-30
    out = levenberg_marquardt(residual, res_jac, x0, cfg.max_iter, cfg.grad_tol, cfg.step_tol,
                              objective_floor=floor)
    p, q = _split(out.x, cfg.basis_dim)
    data = out.residual[:2 * lams.size]
    final = float(np.max(np.abs(data[:lams.size] + 1j * data[lams.size:]))) if lams.size else 0.0
    return ReconstructionReport(
        recovered=left_basis(p, q),
        objective_history=out.history,
        final_residual=final,
        jacobian_condition=out.condition,
        multistart_distances=np.zeros((1, 1)),
        converged=out.converged,
        seed=cfg.seed,
        iterations=out.iterations,
        reason=out.reason,
        coefficients=out.x,
    )


def l2_distance(a: Potentials, b: Potentials, lo: float = 0.0, hi: float = HALF_PI,
                which: str = "both", n: int = 400) -> float:
    """L2 distance on ``[lo, hi]`` of ``p`` (``which='p'``), ``q``, or both combined."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * w
    total = 0.0
    if which in ("p", "both"):
        total += float(w @ (np.asarray(a.p(x)) - np.asarray(b.p(x))) ** 2)
    if which in ("q", "both"):
        total += float(w @ (np.asarray(a.q(x)) - np.asarray(b.q(x))) ** 2)
    return math.sqrt(total)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PENCILSPEC_THREADS", "1")))
    except ValueError:
        return 1


def uniqueness_probe(known_right: Potentials, spec_template: ProblemSpec, target,
                     cfg: ReconstructionConfig, converge_residual: float = 1e-6,
                     icfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> ReconstructionReport:
    """Reconstruct from ``cfg.multistart`` seeded random starts.

    Starts are uniform in ``[-0.5, 0.5]`` per coefficient. A run counts as
    converged when LM reports convergence and its largest ``|Delta(lam_n)|``
    is below ``converge_residual``. The returned report is the best
    converged run, with the pairwise L2 distances among converged runs.
    """
    check_positive_int(cfg.multistart, "multistart")
    rng = np.random.default_rng(cfg.seed)
    starts = rng.uniform(-0.5, 0.5, size=(cfg.multistart, cfg.n_params))

    def run(x0):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MaxIterations)
            try:
                return reconstruct(known_right, spec_template, target, cfg, x0, icfg)
            except (NonFinite, StepFailure):
                return None

    if _threads() > 1 and cfg.multistart > 1:
        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            runs = list(pool.map(run, starts))
    else:
        runs = [run(x0) for x0 in starts]
    good = [r for r in runs if r is not None and r.converged
            and r.final_residual <= converge_residual]
    if not good:
        raise AllDiverged(f"none of {cfg.multistart} starts converged")
    n = len(good)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = l2_distance(good[i].recovered, good[j].recovered)
    best = min(good, key=lambda r: r.objective_history[-1])
    best.multistart_distances = dist
    best.runs = runs
    return best


# --------------------------------------------------------------------------
# constants landscape

AXES = ("alpha", "beta", "alpha1", "alpha2", "gamma1", "gamma2")


def _vary(spec: ProblemSpec, axis: str, value: float) -> ProblemSpec:
    from .model import PiecewiseWeight
    w = spec.weight
    if axis == "alpha":
        out = spec.replace(weight=PiecewiseWeight(value, w.beta), mode="relaxed")
    elif axis == "beta":
        out = spec.replace(weight=PiecewiseWeight(w.alpha, value), mode="relaxed")
    else:
        idx = int(axis[-1]) - 1
        key = "alpha" if axis.startswith("alpha") else "gamma"
        out = spec.replace(mode="relaxed").with_jump(idx, **{key: value})
    return out


def _axis_value(spec: ProblemSpec, axis: str) -> float:
    if axis == "alpha":
        return spec.weight.alpha
    if axis == "beta":
        return spec.weight.beta
    j = spec.jumps[int(axis[-1]) - 1]
    return j.alpha if axis.startswith("alpha") else j.gamma


@dataclass
class AxisScan:
    axis: str
    truth: float
    offsets: np.ndarray
    objective: np.ndarray
    relative: bool
    degenerate: bool
    argmin_offset: float
    unique_interior_min: bool
    symmetric: bool | None


def constants_probe(spec: ProblemSpec, target, n_points: int = 41, span: float = 0.2,
                    axes: Sequence[str] = AXES,
                    icfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> list[AxisScan]:
    """Scan ``||Delta(lam_n)||^2`` along each constant with the others fixed.

    Offsets are relative (``value * (1 + t)``, ``t`` in ``[-span, span]``)
    unless the true value is zero, in which case they are absolute. Scans
    run in relaxed mode, since moving one constant can break the ordering
    constraints.
    """
    lams = check_eigenvalues(target)
    if lams.size < 10:
        raise ValidationError("constants_probe needs at least 10 eigenvalues")
    check_positive_int(n_points, "n_points")
    offsets = np.linspace(-span, span, n_points) if n_points > 1 else np.zeros(1)
    out = []
    for axis in axes:
        if axis not in AXES:
            raise ValidationError(f"unknown axis {axis!r}")
        truth = _axis_value(spec, axis)
        relative = truth != 0.0
        obj = np.empty(offsets.size)
        for i, t in enumerate(offsets):
            value = truth * (1.0 + t) if relative else truth + t
            try:
                r = forward.char_fn_batch(_vary(spec, axis, value), lams, icfg)
                obj[i] = float(np.sum(np.abs(r) ** 2))
            except (ValidationError, NonFinite, StepFailure):
                obj[i] = math.inf
        k = int(np.argmin(obj))
        degenerate = offsets.size < 3
        interior = 0 < k < offsets.size - 1
        unique = (not degenerate and interior
                  and bool(np.all(np.delete(obj, k) > obj[k])))
        symmetric = None
        if not relative and offsets.size > 1:
            rev = obj[::-1]
            symmetric = bool(np.allclose(obj, rev, rtol=1e-6, atol=1e-14))
        out.append(AxisScan(axis, truth, offsets, obj, relative, degenerate,
                            float(offsets[k]), unique, symmetric))
    return out


def landscape_rows(scans: Sequence[AxisScan]):
    """``(axis, offset, objective)`` rows for CSV output."""
    return [(s.axis, float(t), float(v)) for s in scans for t, v in zip(s.offsets, s.objective)]


# --------------------------------------------------------------------------
# estimator wrapper


class HalfInverseReconstructor(BaseEstimator):
    """Estimator-style front end to :func:`reconstruct` / :func:`uniqueness_probe`.

    ``fit(target, spec_template)`` takes the eigenvalues (a ``Spectrum`` or
    array) and a spec whose constants and right-half potentials are known.
    ``predict(x)`` returns ``[p(x), q(x)]`` of the recovered left half;
    ``score`` is the negative data misfit on a spectrum.
    """

    def __init__(self, basis_dim=6, n_eigen=24, regularization=1e-12, max_iter=100,
                 grad_tol=1e-10, step_tol=1e-12, multistart=1, seed=None,
                 continuity_penalty=0.0):
        self.basis_dim = basis_dim
        self.n_eigen = n_eigen
        self.regularization = regularization
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.step_tol = step_tol
        self.multistart = multistart
        self.seed = seed
        self.continuity_penalty = continuity_penalty

    def _config(self) -> ReconstructionConfig:
        return ReconstructionConfig(**self.get_params())

    def fit(self, target, spec_template: ProblemSpec):
        cfg = self._config()
        check_spec(spec_template)
        right = spec_template.potentials
        if cfg.multistart > 1:
            rep = uniqueness_probe(right, spec_template, target, cfg)
        else:
            rep = reconstruct(right, spec_template, target, cfg)
        self.report_ = rep
        self.recovered_ = rep.recovered
        self.coef_ = rep.coefficients
        self.spec_template_ = spec_template
        self.converged_ = rep.converged
        return self

    def _check_fitted(self):
        if not hasattr(self, "recovered_"):
            raise ValidationError("estimator is not fitted")

    def predict(self, x):
        self._check_fitted()
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x > HALF_PI)) or not np.all(np.isfinite(x)):
            raise ValidationError("positions must lie in [0, pi/2]")
        return np.stack([self.recovered_.p(x), self.recovered_.q(x)], axis=-1)

    def recovered_spec(self) -> ProblemSpec:
        self._check_fitted()
        t = self.spec_template_
        return t.replace(potentials=SplicedPotentials(self.recovered_, t.potentials))

    def score(self, target, spec_template: ProblemSpec | None = None) -> float:
        self._check_fitted()
        t = self.spec_template_ if spec_template is None else spec_template
        r = residual_vector(self.recovered_, t.potentials, t, target)
        return -float(np.sum(np.abs(r) ** 2))
