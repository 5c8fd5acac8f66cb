"""Problem definition: weight, jump conditions, potentials, and the problem file.

The pencil is ``-y'' + (2 lam p(x) + q(x)) y = lam**2 delta(x) y`` on
``[0, pi]`` with ``y'(0) = 0``, ``y(pi) = 0`` and two transmission conditions

    y(a_i + 0)  = alpha_i y(a_i - 0)
    y'(a_i + 0) = (1 / alpha_i) y'(a_i - 0) + 1j lam gamma_i y(a_i - 0)

The weight ``delta`` equals ``alpha**2`` left of ``pi/2`` and ``beta**2``
right of it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError, NonFinite, ParseError, ValidationError

PI = math.pi
HALF_PI = 0.5 * math.pi
MODES = ("strict", "relaxed")

__all__ = [
    "PiecewiseWeight",
    "JumpCondition",
    "Potentials",
    "CosinePotentials",
    "GridPotentials",
    "SplicedPotentials",
    "ProblemSpec",
    "State",
    "load_problem",
    "save_problem",
    "problem_from_dict",
    "eval_potentials",
    "integrate_p",
]


@dataclass(frozen=True)
class PiecewiseWeight:
    """Weight roots: ``delta = alpha**2`` on (0, pi/2), ``beta**2`` on (pi/2, pi)."""

    alpha: float
    beta: float

    @property
    def breakpoint(self) -> float:
        return HALF_PI

    def delta(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < HALF_PI, self.alpha**2, self.beta**2)
        return float(out) if out.ndim == 0 else out

    def root(self, x) -> float:
        """Local frequency factor sqrt(delta) at ``x``."""
        return self.alpha if x < HALF_PI else self.beta


@dataclass(frozen=True)
class JumpCondition:
    location: float
    alpha: float
    gamma: float = 0.0

    @property
    def beta(self) -> float:
        # never stored, so alpha * beta == 1 up to one rounding
        return 1.0 / self.alpha

    @property
    def is_trivial(self) -> bool:
        return (self.alpha - 1.0) ** 2 + self.gamma**2 == 0.0


# --------------------------------------------------------------------------
# potentials


class Potentials:
    """Base class for representations of ``(p, q)``.

    Subclasses provide vectorised ``p``, ``q``, ``dp`` and an exact or
    representation-consistent ``integrate_p``.
    """

    kind = "abstract"
    domain: tuple[float, float] = (0.0, PI)

    def p(self, x):
        raise NotImplementedError

    def q(self, x):
        raise NotImplementedError

    def dp(self, x):
        raise NotImplementedError

    def integrate_p(self, x0: float, x1: float) -> float:
        raise NotImplementedError

    def piece(self, lo: float, hi: float) -> "Potentials":
        """Representation that is smooth on ``[lo, hi]``."""
        return self

    def to_dict(self) -> dict:
        raise NotImplementedError


def _as_coef(values) -> np.ndarray:
    arr = np.array(values, dtype=float).ravel()
    if arr.size == 0:
        arr = np.zeros(1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("potential data must be finite")
    arr.setflags(write=False)
    return arr


class CosinePotentials(Potentials):
    """Truncated cosine series ``sum_k c_k cos(k * freq * (x - origin))``.

    With the defaults this is the canonical basis ``cos(k x)`` on ``[0, pi]``.
    """

    kind = "cosine"

    def __init__(self, p, q, freq: float = 1.0, origin: float = 0.0,
                 domain: tuple[float, float] = (0.0, PI)):
        self.p_coef = _as_coef(p)
        self.q_coef = _as_coef(q)
        self.freq = float(freq)
        self.origin = float(origin)
        self.domain = (float(domain[0]), float(domain[1]))
        if self.freq <= 0:
            raise ValidationError("cosine frequency must be positive")

    def _modes(self, n):
        return np.arange(n) * self.freq

    def _series(self, coef, x):
        x = np.asarray(x, dtype=float)
        arg = np.multiply.outer(x - self.origin, self._modes(coef.size))
        return np.cos(arg) @ coef

    def p(self, x):
        return self._series(self.p_coef, x)

    def q(self, x):
        return self._series(self.q_coef, x)

    def dp(self, x):
        x = np.asarray(x, dtype=float)
        k = self._modes(self.p_coef.size)
        return -np.sin(np.multiply.outer(x - self.origin, k)) @ (k * self.p_coef)

    def integrate_p(self, x0, x1):
        c = self.p_coef
        total = c[0] * (x1 - x0)
        if c.size > 1:
            k = self._modes(c.size)[1:]
            s1 = np.sin(k * (x1 - self.origin))
            s0 = np.sin(k * (x0 - self.origin))
            total += np.sum(c[1:] * (s1 - s0) / k)
        return float(total)

    def to_dict(self):
        out = {"kind": "cosine", "p": self.p_coef.tolist(), "q": self.q_coef.tolist()}
        if self.freq != 1.0 or self.origin != 0.0 or self.domain != (0.0, PI):
            out.update(freq=self.freq, origin=self.origin, domain=list(self.domain))
        return out

    def __repr__(self):
        return f"CosinePotentials(p={self.p_coef.tolist()}, q={self.q_coef.tolist()})"


class GridPotentials(Potentials):
    """Samples on a uniform grid over ``[0, pi]`` with cubic-spline interpolation."""

    kind = "grid"

    def __init__(self, p, q):
        self.p_samples = _as_coef(p)
        self.q_samples = _as_coef(q)
        n = self.p_samples.size
        if n < 4 or self.q_samples.size != n:
            raise ValidationError("grid potentials need equal-length samples, grid_n >= 4")
        self.nodes = np.linspace(0.0, PI, n)
        self._p = CubicSpline(self.nodes, self.p_samples)
        self._q = CubicSpline(self.nodes, self.q_samples)
        self._dp = self._p.derivative()
        self._h = self.nodes[1] - self.nodes[0]
        self._x = self.nodes.tolist()
        self._pc = self._p.c.T.tolist()
        self._qc = self._q.c.T.tolist()
        self._pc_arr = np.ascontiguousarray(self._p.c.T)
        self._qc_arr = np.ascontiguousarray(self._q.c.T)

    def _scalar(self, coefs, x):
        # fast path for the integrator, which queries one point at a time
        i = min(max(int(x / self._h), 0), len(coefs) - 1)
        t = x - self._x[i]
        c0, c1, c2, c3 = coefs[i]
        return ((c0 * t + c1) * t + c2) * t + c3

    @classmethod
    def from_functions(cls, p, q, grid_n: int = 2049) -> "GridPotentials":
        x = np.linspace(0.0, PI, grid_n)
        return cls(np.broadcast_to(p(x), x.shape), np.broadcast_to(q(x), x.shape))

    @property
    def grid_n(self) -> int:
        return self.p_samples.size

    def p(self, x):
        if isinstance(x, float):
            return self._scalar(self._pc, x)
        return self._p(x)

    def q(self, x):
        if isinstance(x, float):
            return self._scalar(self._qc, x)
        return self._q(x)

    def dp(self, x):
        return self._dp(x)

    def integrate_p(self, x0, x1):
        return float(self._p.integrate(x0, x1))

    def to_dict(self):
        return {"kind": "grid", "grid_n": self.grid_n,
                "p": self.p_samples.tolist(), "q": self.q_samples.tolist()}


class SplicedPotentials(Potentials):
    """``left`` on ``[0, split)`` and ``right`` on ``[split, pi]``.

    Used by the half-inverse solver, where a candidate on the left half is
    glued to the known right half. No continuity is imposed at ``split``.
    """

    kind = "spliced"

    def __init__(self, left: Potentials, right: Potentials, split: float = HALF_PI):
        self.left = left
        self.right = right
        self.split = float(split)

    def _pick(self, x, attr):
        x = np.asarray(x, dtype=float)
        lv = getattr(self.left, attr)(x)
        rv = getattr(self.right, attr)(x)
        out = np.where(x < self.split, lv, rv)
        return float(out) if out.ndim == 0 else out

    def p(self, x):
        return self._pick(x, "p")

    def q(self, x):
        return self._pick(x, "q")

    def dp(self, x):
        return self._pick(x, "dp")

    def integrate_p(self, x0, x1):
        if x1 < x0:
            return -self.integrate_p(x1, x0)
        s = self.split
        total = 0.0
        if x0 < s:
            total += self.left.integrate_p(x0, min(x1, s))
        if x1 > s:
            total += self.right.integrate_p(max(x0, s), x1)
        return float(total)

    def piece(self, lo, hi):
        mid = 0.5 * (lo + hi)
        side = self.left if mid < self.split else self.right
        return side.piece(lo, hi)

    def to_dict(self):
        return {"kind": "spliced", "split": self.split,
                "left": self.left.to_dict(), "right": self.right.to_dict()}


def potentials_from_dict(d: dict) -> Potentials:
    kind = d.get("kind")
    if kind == "cosine":
        extra = {}
        if "freq" in d:
            extra["freq"] = d["freq"]
        if "origin" in d:
            extra["origin"] = d["origin"]
        if "domain" in d:
            extra["domain"] = tuple(d["domain"])
        return CosinePotentials(d.get("p", [0.0]), d.get("q", [0.0]), **extra)
    if kind == "grid":
        pots = GridPotentials(d["p"], d["q"])
        if "grid_n" in d and d["grid_n"] is not None and int(d["grid_n"]) != pots.grid_n:
            raise ValidationError(
                f"grid_n={d['grid_n']} does not match {pots.grid_n} samples")
        return pots
    if kind == "spliced":
        return SplicedPotentials(potentials_from_dict(d["left"]),
                                 potentials_from_dict(d["right"]),
                                 d.get("split", HALF_PI))
    raise ValidationError(f"unknown potentials kind {kind!r}")


# --------------------------------------------------------------------------
# problem


@dataclass(frozen=True)
class ProblemSpec:
    """A validated pencil instance. Immutable; safe to share between threads."""

    weight: PiecewiseWeight
    potentials: Potentials
    jumps: tuple[JumpCondition, JumpCondition]
    mode: str = "strict"
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple(self.jumps))
        _validate(self)
        if self.mode == "relaxed" and not self.notes:
            object.__setattr__(self, "notes", ("relaxed validation",))

    @property
    def a1(self) -> float:
        return self.jumps[0].location

    @property
    def a2(self) -> float:
        return self.jumps[1].location

    @property
    def relaxed(self) -> bool:
        return self.mode == "relaxed"

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    def with_jump(self, index: int, **changes) -> "ProblemSpec":
        jumps = list(self.jumps)
        jumps[index] = replace(jumps[index], **changes)
        return replace(self, jumps=tuple(jumps))

    def optical_length(self) -> float:
        """``int_0^pi sqrt(delta)``: sets the asymptotic eigenvalue spacing."""
        return HALF_PI * (self.weight.alpha + self.weight.beta)

    def to_dict(self) -> dict:
        return {
            "weight": {"alpha": self.weight.alpha, "beta": self.weight.beta},
            "jumps": [{"location": j.location, "alpha": j.alpha, "gamma": j.gamma}
                      for j in self.jumps],
            "potentials": self.potentials.to_dict(),
            "mode": self.mode,
        }


def _finite(*vals):
    return all(math.isfinite(v) for v in vals)


def _validate(spec: ProblemSpec) -> None:
    if spec.mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {spec.mode!r}")
    w = spec.weight
    if not _finite(w.alpha, w.beta):
        raise ValidationError("weight constants must be finite")
    if w.alpha <= 0 or w.beta <= 0:
        raise ValidationError("weight constants must be positive")
    if len(spec.jumps) != 2:
        raise ValidationError("exactly two jump conditions are required")
    strict = spec.mode == "strict"
    if strict:
        if not w.alpha < w.beta:
            raise ValidationError("alpha < beta violated")
        if not w.beta < 1.0:
            raise ValidationError("beta < 1 violated")
        if not w.alpha + w.beta > 1.0:
            raise ValidationError("alpha + beta > 1 violated")
    for i, j in enumerate(spec.jumps, start=1):
        if not _finite(j.location, j.alpha, j.gamma):
            raise ValidationError(f"jump {i} has non-finite constants")
        if j.alpha <= 0:
            raise ValidationError(f"jump {i}: alpha > 0 violated")
        if strict and j.is_trivial:
            raise ValidationError(f"jump {i} is trivial")
    a1, a2 = spec.jumps[0].location, spec.jumps[1].location
    if not 0.0 <= a1 <= HALF_PI:
        raise ValidationError("jump 1 location must lie in [0, pi/2]")
    if not HALF_PI <= a2 <= PI:
        raise ValidationError("jump 2 location must lie in [pi/2, pi]")
    if a1 == a2:
        raise ValidationError("jump locations coincide")
    if not isinstance(spec.potentials, Potentials):
        raise ValidationError("potentials must be a Potentials instance")


def problem_from_dict(d: dict) -> ProblemSpec:
    try:
        weight = PiecewiseWeight(float(d["weight"]["alpha"]), float(d["weight"]["beta"]))
        jumps = tuple(JumpCondition(float(j["location"]), float(j["alpha"]),
                                    float(j.get("gamma", 0.0)))
                      for j in d["jumps"])
        pots_d = d.get("potentials", {"kind": "cosine", "p": [0.0], "q": [0.0]})
        mode = d.get("mode", "strict")
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"problem file does not match schema: {exc!r}") from exc
    if len(jumps) != 2:
        raise ValidationError("exactly two jump conditions are required")
    try:
        pots = potentials_from_dict(pots_d)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad potentials block: {exc!r}") from exc
    return ProblemSpec(weight, pots, jumps, mode)


def load_problem(path) -> ProblemSpec:
    """Read and validate a JSON problem file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be an object")
    return problem_from_dict(data)


def save_problem(spec: ProblemSpec, path) -> None:
    # repr-exact floats so that load(save(s)) == s field by field
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")


# --------------------------------------------------------------------------
# state and potential queries


@dataclass(frozen=True)
class State:
    """Solution pair ``(y, y')`` at position ``x``."""

    y: complex
    dy: complex
    x: float

    def __post_init__(self):
        if not (np.isfinite(self.y) and np.isfinite(self.dy)):
            raise NonFinite(f"non-finite state at x={self.x}")
        object.__setattr__(self, "y", complex(self.y))
        object.__setattr__(self, "dy", complex(self.dy))
        object.__setattr__(self, "x", float(self.x))


def _check_x(x: float) -> float:
    x = float(x)
    if not 0.0 <= x <= PI:
        raise DomainError(f"x={x} outside [0, pi]")
    return x


def eval_potentials(spec: ProblemSpec, x: float) -> tuple[float, float]:
    x = _check_x(x)
    pots = spec.potentials
    return float(pots.p(x)), float(pots.q(x))


def integrate_p(spec: ProblemSpec, x0: float, x1: float) -> float:
    """``int_{x0}^{x1} p``; exact for cosine series and splines."""
    x0, x1 = _check_x(x0), _check_x(x1)
    return spec.potentials.integrate_p(x0, x1)


def make_spec(alpha: float, beta: float, jumps: Sequence[tuple[float, float, float]],
              potentials: Potentials | None = None, mode: str = "strict") -> ProblemSpec:
    """Shorthand constructor; ``jumps`` is ``[(location, alpha_i, gamma_i), ...]``."""
    if potentials is None:
        potentials = CosinePotentials([0.0], [0.0])
    return ProblemSpec(PiecewiseWeight(alpha, beta),
                       potentials,
                       tuple(JumpCondition(*j) for j in jumps),
                       mode)
