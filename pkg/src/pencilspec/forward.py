"""Initial-value shooting for the pencil through the transmission points.

``phi(x, lam)`` is the solution with ``phi(0) = 1``, ``phi'(0) = 0``; the
characteristic function is ``Delta(lam) = phi(pi, lam)``. Everything is
batched over ``lam`` (and optionally over potentials) so that a whole grid
of spectral parameters shares a single step-size sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _rk
from .errors import DomainError, ValidationError
from .errors import NonFinite, StepFailure
from .model import (HALF_PI, PI, CosinePotentials, GridPotentials, JumpCondition,
                    Potentials, ProblemSpec, State)

__all__ = [
    "IntegratorSettings",
    "Shot",
    "evolve",
    "apply_jump",
    "phi",
    "shoot",
    "char_fn",
    "char_fn_derivative",
    "char_fn_batch",
]


@dataclass(frozen=True)
class IntegratorSettings:
    """Tolerances for the embedded 8(5,3) Runge-Kutta pair.

    ``max_step=None`` selects ``0.1 / (|lam| * max(alpha, beta) + 1)``; an
    explicit value only tightens that cap.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float | None = None
    method: str = "DOP853"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValidationError("integrator tolerances must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise ValidationError("max_step must be positive")
        if self.method.upper() != "DOP853":
            raise ValidationError(f"unsupported method {self.method!r}")

    def step_cap(self, lam_abs: float, root: float) -> float:
        cap = 0.1 / (lam_abs * root + 1.0)
        return cap if self.max_step is None else min(cap, self.max_step)


DEFAULT_SETTINGS = IntegratorSettings()


class Shot(NamedTuple):
    """Solution samples, each of shape ``(len(xs), len(lams))``."""

    y: np.ndarray
    dy: np.ndarray
    y_lam: np.ndarray | None = None
    dy_lam: np.ndarray | None = None


# --------------------------------------------------------------------------
# potential evaluation for a batch


def _stack_evaluator(pieces: Sequence[Potentials]):
    """Return ``f(x) -> (p, q)`` for a list of smooth pieces.

    The result broadcasts against the batch axis: scalars when all members
    share one object, ``(B,)`` arrays otherwise.
    """
    first = pieces[0]
    if all(piece is first for piece in pieces):
        return lambda x: (float(first.p(x)), float(first.q(x)))
    if all(isinstance(piece, CosinePotentials) and piece.freq == first.freq
           and piece.origin == first.origin for piece in pieces):
        n = max(max(pc.p_coef.size, pc.q_coef.size) for pc in pieces)
        P = np.zeros((len(pieces), n))
        Q = np.zeros((len(pieces), n))
        for i, pc in enumerate(pieces):
            P[i, :pc.p_coef.size] = pc.p_coef
            Q[i, :pc.q_coef.size] = pc.q_coef
        modes = np.arange(n) * first.freq
        origin = first.origin

        def evaluate(x):
            basis = np.cos(modes * (x - origin))
            return P @ basis, Q @ basis

        return evaluate

    def evaluate(x):
        p = np.array([float(pc.p(x)) for pc in pieces])
        q = np.array([float(pc.q(x)) for pc in pieces])
        return p, q

    return evaluate


_EMPTY2 = np.zeros((0, 4))
_EMPTY1 = np.zeros(2)


def _compiled_pack(pieces: Sequence[Potentials]):
    """Arguments for the compiled kernel, or ``None`` if it cannot take them."""
    first = pieces[0]
    if all(piece is first for piece in pieces):
        if isinstance(first, GridPotentials):
            return (1, np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1), 0.0,
                    first.nodes, first._pc_arr, first._qc_arr)
        pieces = [first]
    if not all(isinstance(pc, CosinePotentials) and pc.freq == first.freq
               and pc.origin == first.origin for pc in pieces):
        return None
    n = max(max(pc.p_coef.size, pc.q_coef.size) for pc in pieces)
    P = np.zeros((len(pieces), n))
    Q = np.zeros((len(pieces), n))
    for i, pc in enumerate(pieces):
        P[i, :pc.p_coef.size] = pc.p_coef
        Q[i, :pc.q_coef.size] = pc.q_coef
    return (0, P, Q, np.arange(n) * float(first.freq), float(first.origin),
            _EMPTY1, _EMPTY2, _EMPTY2)


def _advance(lams, delta, pieces, derivative, lo, hi, state, cfg, max_step, h):
    """One smooth segment; compiled when the potentials allow it."""
    pack = _compiled_pack(pieces)
    if pack is None:
        fun = _make_rhs(lams, delta, _stack_evaluator(pieces), derivative)
        state, h, _ = _rk.integrate(fun, lo, hi, state, cfg.rtol, cfg.atol, max_step, h)
        return state, h
    kind, P, Q, modes, origin, nodes, pp_p, pp_q = pack
    out, h, _, status = _rk.integrate_pencil(
        float(lo), float(hi), np.ascontiguousarray(state, dtype=complex),
        np.ascontiguousarray(lams, dtype=complex), float(delta), kind, P, Q, modes, origin,
        nodes, pp_p, pp_q, float(cfg.rtol), float(cfg.atol), float(max_step),
        -1.0 if h is None else float(h), *_rk.compiled_tables())
    if status == 1:
        raise StepFailure(f"step size underflow between x={lo:.6g} and x={hi:.6g}")
    if status == 2:
        raise NonFinite(f"solution overflow between x={lo:.6g} and x={hi:.6g}")
    return out, h


def _make_rhs(lams, delta, pq, derivative):
    lam2 = lams * lams

    if derivative:
        def fun(x, s):
            p, q = pq(x)
            g = 2.0 * lams * p + q - lam2 * delta
            h = 2.0 * p - 2.0 * lams * delta
            return np.stack((s[1], g * s[0], s[3], g * s[2] + h * s[0]))
    else:
        def fun(x, s):
            p, q = pq(x)
            g = 2.0 * lams * p + q - lam2 * delta
            return np.stack((s[1], g * s[0]))
    return fun


def _jump_batch(s, jump: JumpCondition, lams):
    a, b = jump.alpha, jump.beta
    kick = 1j * lams * jump.gamma
    y = s[0]
    out = np.empty_like(s)
    out[0] = a * y
    out[1] = b * s[1] + kick * y
    if s.shape[0] == 4:
        out[2] = a * s[2]
        out[3] = b * s[3] + kick * s[2] + 1j * jump.gamma * y
    return out


# --------------------------------------------------------------------------
# batched driver


def shoot(spec: ProblemSpec, lams, xs=(PI,), cfg: IntegratorSettings = DEFAULT_SETTINGS,
          derivative: bool = False, potentials: Sequence[Potentials] | None = None,
          initial=(1.0, 0.0)) -> Shot:
    """Integrate from ``x = 0`` and sample the solution at ``xs``.

    ``potentials`` optionally gives one potential object per ``lam``
    (overriding ``spec.potentials``); this is how Jacobian columns ride in
    the same batch as the base point. ``initial`` is ``(y(0), y'(0))``,
    scalars or per-member arrays. Samples at a jump location are taken
    after the jump is applied.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if xs.size and (xs.min() < 0.0 or xs.max() > PI):
        raise DomainError("sample positions must lie in [0, pi]")
    nb = lams.size
    pots = [spec.potentials] if potentials is None else list(potentials)
    if len(pots) not in (1, nb):
        raise ValidationError("need one potentials object or one per lambda")
    if len(pots) == 1:
        pots = pots * nb
    m = 4 if derivative else 2
    shape = (xs.size, nb)
    ys = np.zeros(shape, dtype=complex)
    dys = np.zeros(shape, dtype=complex)
    ysl = np.zeros(shape, dtype=complex) if derivative else None
    dysl = np.zeros(shape, dtype=complex) if derivative else None
    if nb == 0 or xs.size == 0:
        return Shot(ys, dys, ysl, dysl)

    state = np.zeros((m, nb), dtype=complex)
    state[0] = initial[0]
    state[1] = initial[1]

    x_end = float(xs.max())
    jumps = sorted(spec.jumps, key=lambda j: j.location)
    nodes = {0.0, x_end}
    nodes.update(float(x) for x in xs)
    nodes.update(j.location for j in jumps if j.location <= x_end)
    if HALF_PI < x_end:
        nodes.add(HALF_PI)
    nodes = sorted(nodes)
    wanted: dict[float, list[int]] = {}
    for i, x in enumerate(xs):
        wanted.setdefault(float(x), []).append(i)

    def settle(x, state):
        for j in jumps:
            if j.location == x:
                state = _jump_batch(state, j, lams)
        for i in wanted.get(x, ()):
            ys[i], dys[i] = state[0], state[1]
            if derivative:
                ysl[i], dysl[i] = state[2], state[3]
        return state

    state = settle(nodes[0], state)
    lam_abs = float(np.max(np.abs(lams)))
    w = spec.weight
    max_step = cfg.step_cap(lam_abs, max(w.alpha, w.beta))
    h = None
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        mid = 0.5 * (lo + hi)
        delta = w.alpha**2 if mid < HALF_PI else w.beta**2
        state, h = _advance(lams, delta, [pc.piece(lo, hi) for pc in pots], derivative,
                            lo, hi, state, cfg, max_step, h)
        state = settle(hi, state)
    return Shot(ys, dys, ysl, dysl)


def char_fn_batch(spec: ProblemSpec, lams, cfg: IntegratorSettings = DEFAULT_SETTINGS,
                  derivative: bool = False, potentials=None):
    """``Delta`` (and ``dDelta/dlam`` when asked) at every entry of ``lams``."""
    lams = np.asarray(lams, dtype=complex)
    flat = lams.ravel()
    shot = shoot(spec, flat, (PI,), cfg, derivative=derivative, potentials=potentials)
    delta = shot.y[0].reshape(lams.shape)
    if derivative:
        return delta, shot.y_lam[0].reshape(lams.shape)
    return delta


# --------------------------------------------------------------------------
# scalar operations


def apply_jump(s: State, j: JumpCondition, lam: complex) -> State:
    """Transmission map at ``j.location``: ``(y, y') -> (a y, y'/a + 1j lam g y)``."""
    if not math.isclose(s.x, j.location, rel_tol=0.0, abs_tol=1e-12):
        raise DomainError(f"state at x={s.x} is not at the jump location {j.location}")
    return State(j.alpha * s.y, j.beta * s.dy + 1j * lam * j.gamma * s.y, s.x)


def evolve(spec: ProblemSpec, lam: complex, x0: float, x1: float, s: State,
           cfg: IntegratorSettings = DEFAULT_SETTINGS) -> State:
    """Carry ``s`` from ``x0`` to ``x1`` across a smooth stretch.

    No nontrivial jump may lie strictly between ``x0`` and ``x1``; identity
    jumps are ignored. The weight switch at ``pi/2`` is handled internally
    as a mesh node.
    """
    lo, hi = min(x0, x1), max(x0, x1)
    if lo < 0.0 or hi > PI:
        raise DomainError("evolve endpoints must lie in [0, pi]")
    for j in spec.jumps:
        if lo < j.location < hi and not j.is_trivial:
            raise DomainError(f"jump at {j.location} lies inside ({lo}, {hi})")
    lams = np.array([complex(lam)])
    nodes = [x0, x1]
    if lo < HALF_PI < hi:
        nodes = [x0, HALF_PI, x1]
    state = np.array([[s.y], [s.dy]], dtype=complex)
    w = spec.weight
    max_step = cfg.step_cap(abs(lam), max(w.alpha, w.beta))
    h = None
    for a, b in zip(nodes[:-1], nodes[1:]):
        mid = 0.5 * (a + b)
        delta = w.alpha**2 if mid < HALF_PI else w.beta**2
        piece = spec.potentials.piece(min(a, b), max(a, b))
        state, h = _advance(lams, delta, [piece], False, a, b, state, cfg, max_step, h)
    return State(state[0, 0], state[1, 0], x1)


def phi(spec: ProblemSpec, lam: complex, x: float,
        cfg: IntegratorSettings = DEFAULT_SETTINGS) -> State:
    """``(phi(x, lam), phi'(x, lam))`` with jumps at locations ``<= x`` applied."""
    shot = shoot(spec, [lam], [x], cfg)
    return State(shot.y[0, 0], shot.dy[0, 0], x)


def char_fn(spec: ProblemSpec, lam: complex, cfg: IntegratorSettings = DEFAULT_SETTINGS) -> complex:
    return complex(char_fn_batch(spec, [lam], cfg)[0])


def char_fn_derivative(spec: ProblemSpec, lam: complex,
                       cfg: IntegratorSettings = DEFAULT_SETTINGS) -> complex:
    """``dDelta/dlam`` from the variational system integrated alongside ``phi``."""
    _, d = char_fn_batch(spec, [lam], cfg, derivative=True)
    return complex(d[0])
