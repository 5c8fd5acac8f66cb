"""Eigenvalue enumeration: asymptotic bracketing, Newton refinement on
``Delta``, and argument-principle completeness audits.

The search region is the strip ``|Im lam| <= strip_height`` from
``Re lam = 0`` to the outer edge of the last bracketing window, pushed to
the right until it holds ``n_max`` roots. Roots are treated as complex and
possibly clustered; nothing assumes self-adjointness.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import forward
from .asymptotics import eigenvalue_estimates
from .errors import BoundaryRoot, IncompleteSpectrum, NonConvergence, ValidationError
from .model import ProblemSpec

__all__ = [
    "SpectrumEntry",
    "Spectrum",
    "Window",
    "bracket_windows",
    "refine_root",
    "compute_spectrum",
    "argument_principle_count",
    "SpectrumSolver",
]

MERGE_RADIUS = 1e-8
MAX_NEWTON = 50
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class Window:
    center: float
    half_width: float

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width

    def __contains__(self, lam) -> bool:
        return self.lo <= complex(lam).real <= self.hi


@dataclass(frozen=True)
class SpectrumEntry:
    """``residual`` is ``|Delta| / max(1, |Delta'|)``, roughly the distance to the root."""

    n: int
    lam: complex
    residual: float
    iterations: int
    window: tuple[float, float]
    flags: str = ""


@dataclass
class Spectrum:
    entries: list[SpectrumEntry]
    tol: float = 1e-10
    merge_radius: float = MERGE_RADIUS
    flags: tuple[str, ...] = field(default=())

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries], dtype=complex)

    def truncated(self, k: int) -> "Spectrum":
        return replace(self, entries=list(self.entries[:k]))

    @classmethod
    def from_values(cls, values, tol: float = 1e-10) -> "Spectrum":
        entries = [SpectrumEntry(i, complex(v), 0.0, 0, (math.nan, math.nan), "given")
                   for i, v in enumerate(values)]
        return cls(entries, tol)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "re_lambda", "im_lambda", "residual", "iterations", "flags"])
            for e in self.entries:
                w.writerow([e.n, repr(e.lam.real), repr(e.lam.imag), repr(e.residual),
                            e.iterations, e.flags])

    @classmethod
    def from_csv(cls, path) -> "Spectrum":
        entries = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                entries.append(SpectrumEntry(
                    int(row["n"]),
                    complex(float(row["re_lambda"]), float(row["im_lambda"])),
                    float(row.get("residual") or 0.0),
                    int(row.get("iterations") or 0),
                    (math.nan, math.nan),
                    row.get("flags") or ""))
        entries.sort(key=lambda e: e.n)
        return cls(entries)


# --------------------------------------------------------------------------
# bracketing


def bracket_windows(spec: ProblemSpec, n_max: int,
                    cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> list[Window]:
    """Disjoint windows centred on the zero estimates, half-width 0.45 x local gap."""
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    est = eigenvalue_estimates(spec, n_max + 1, cfg=cfg)
    c = np.asarray(est, dtype=float)
    gaps = np.diff(c)
    out = []
    for i in range(n_max):
        near = [gaps[i]]
        if i > 0:
            near.append(gaps[i - 1])
        out.append(Window(float(c[i]), 0.45 * float(min(near))))
    return out


# --------------------------------------------------------------------------
# refinement


def _muller_step(xs, fs):
    x0, x1, x2 = xs
    f0, f1, f2 = fs
    h1, h2 = x1 - x0, x2 - x1
    if h1 == 0 or h2 == 0 or h1 + h2 == 0:
        return None
    d1, d2 = (f1 - f0) / h1, (f2 - f1) / h2
    a = (d2 - d1) / (h2 + h1)
    b = a * h2 + d2
    disc = np.sqrt(b * b - 4.0 * a * f2 + 0j)
    den = b + disc if abs(b + disc) >= abs(b - disc) else b - disc
    if den == 0:
        return None
    return -2.0 * f2 / den


@dataclass
class _Track:
    lam: complex
    best: complex = 0j
    best_res: float = math.inf
    iters: int = 0
    stagnant: int = 0
    prev_res: float = math.inf
    xs: list = field(default_factory=list)
    fs: list = field(default_factory=list)
    done: bool = False
    ok: bool = False
    why: str = ""


def _refine_many(spec, starts, tol, cfg, max_iter=MAX_NEWTON, max_step=None):
    """Lockstep Newton on every start; Muller takes over after 3 stagnations.

    Steps are capped at ``max_step`` (default: a few mean root spacings) and
    a derivative below the integrator noise floor ends the track.
    """
    if max_step is None:
        max_step = 4.0 * math.pi / spec.optical_length()
    flat = 100.0 * cfg.rtol
    tracks = [_Track(complex(s)) for s in starts]
    while True:
        live = [t for t in tracks if not t.done]
        if not live:
            break
        lams = np.array([t.lam for t in live])
        d, dd = forward.char_fn_batch(spec, lams, cfg, derivative=True)
        for t, f, fp in zip(live, d, dd):
            res = abs(f) / max(1.0, abs(fp))
            if res < t.best_res:
                t.best, t.best_res = t.lam, res
            if res <= tol:
                t.done, t.ok = True, True
                continue
            if t.iters >= max_iter:
                t.done, t.why = True, "iteration cap"
                continue
            t.stagnant = t.stagnant + 1 if res >= 0.5 * t.prev_res else 0
            t.prev_res = res
            t.xs = (t.xs + [t.lam])[-3:]
            t.fs = (t.fs + [f])[-3:]
            step = None
            if t.stagnant >= 3 and len(t.xs) == 3:
                step = _muller_step(t.xs, t.fs)
            if step is None:
                if abs(fp) <= flat * max(1.0, abs(f)):
                    t.done, t.why = True, "derivative vanishes"
                    continue
                step = -f / fp
            if abs(step) > max_step:
                step *= max_step / abs(step)
            if not np.isfinite(step):
                t.done, t.why = True, "non-finite step"
                continue
            t.lam = t.lam + step
            t.iters += 1
    return tracks


def refine_root(spec: ProblemSpec, lambda0: complex, tol: float = 1e-10,
                cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS):
    """Newton on ``Delta`` from ``lambda0``.

    Returns ``(lam, residual, iterations)`` with
    ``|Delta(lam)| <= tol * max(1, |Delta'(lam)|)``. Raises
    :class:`NonConvergence` (with ``.best``) otherwise.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if not np.isfinite(lambda0):
        raise ValidationError("lambda0 must be finite")
    (t,) = _refine_many(spec, [lambda0], tol, cfg)
    if not t.ok:
        raise NonConvergence(f"no root from {lambda0}: {t.why}",
                             best=(t.best, t.best_res, t.iters))
    return t.lam, t.best_res, t.iters


# --------------------------------------------------------------------------
# argument principle


def _contour(rect):
    x0, x1, y0, y1 = rect
    return [(complex(x0, y0), complex(x1, y0)), (complex(x1, y0), complex(x1, y1)),
            (complex(x1, y1), complex(x0, y1)), (complex(x0, y1), complex(x0, y0))]


def _panel_nodes(a, b):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * GL_NODES, half * GL_WEIGHTS


def _log_derivative_integral(spec, rect, quad_n, cfg, tol=1e-4, max_rounds=40):
    sides = _contour(rect)
    lengths = [abs(b - a) for a, b in sides]
    perim = sum(lengths)
    panels = []
    for (a, b), ln in zip(sides, lengths):
        n = max(1, int(math.ceil(max(quad_n / 16.0 * ln / perim, ln / 0.5))))
        edges = [a + (b - a) * k / n for k in range(n + 1)]
        panels.extend(zip(edges[:-1], edges[1:]))

    def integrate(panel_list):
        nodes, weights = zip(*(_panel_nodes(a, b) for a, b in panel_list))
        z = np.concatenate(nodes)
        d, dd = forward.char_fn_batch(spec, z, cfg, derivative=True)
        vals = (dd / d) * np.concatenate(weights)
        return vals.reshape(len(panel_list), -1).sum(axis=1)

    whole = integrate(panels)
    total = 0j
    rounds = 0
    while panels:
        rounds += 1
        halves = []
        for a, b in panels:
            m = 0.5 * (a + b)
            halves.extend([(a, m), (m, b)])
        parts = integrate(halves)
        pair = parts[0::2] + parts[1::2]
        good = np.abs(pair - whole) <= tol * max(1.0, quad_n / 64.0)
        total += pair[good].sum()
        if rounds >= max_rounds:
            total += pair[~good].sum()
            break
        panels = [h for i, ok in enumerate(good) if not ok for h in halves[2 * i:2 * i + 2]]
        whole = np.array([parts[2 * i + j] for i, ok in enumerate(good) if not ok
                          for j in range(2)])
    return total


def argument_principle_count(spec: ProblemSpec, rect: Sequence[float], quad_n: int = 64,
                             cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS) -> int:
    """Number of zeros of ``Delta`` inside ``rect = (re_lo, re_hi, im_lo, im_hi)``.

    ``(1/2 pi i) * contour integral of Delta'/Delta`` by adaptively refined
    composite 16-point Gauss-Legendre panels. Raises :class:`BoundaryRoot`
    when the raw value is not within 0.1 of an integer.
    """
    if quad_n < 64:
        raise ValidationError("quad_n must be >= 64")
    x0, x1, y0, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise ValidationError("rectangle must have positive width and height")
    raw = _log_derivative_integral(spec, (x0, x1, y0, y1), quad_n, cfg) / (2j * math.pi)
    n = round(raw.real)
    if abs(raw - n) >= 0.1:
        raise BoundaryRoot(f"winding integral {raw:.4f} is not near an integer", raw=raw)
    return int(n)


def _robust_count(spec, rect, cfg, quad_n=64, attempts=4):
    x0, x1, y0, y1 = rect
    for k in range(attempts):
        shift = 1e-3 * k
        try:
            r = (x0 - shift, x1 + shift, y0 - shift, y1 + shift)
            return argument_principle_count(spec, r, quad_n, cfg), r
        except BoundaryRoot:
            continue
    raise BoundaryRoot(f"could not place a root-free contour around {rect}")


# --------------------------------------------------------------------------
# assembly


def _merge(found, radius):
    """Collapse roots closer than ``radius``; keep the smallest residual."""
    out = []
    for cand in sorted(found, key=lambda c: (c[0].real, c[0].imag)):
        for i, kept in enumerate(out):
            if abs(kept[0] - cand[0]) < radius:
                if cand[1] < kept[1]:
                    out[i] = cand
                break
        else:
            out.append(cand)
    return out


def _inside(lam, rect):
    x0, x1, y0, y1 = rect
    return x0 <= lam.real <= x1 and y0 <= lam.imag <= y1


def _fill_box(spec, box, need, tol, cfg, merge_radius):
    """Newton from ever denser start grids until ``need`` roots show up."""
    x0, x1, y0, y1 = box
    found = []
    for nx, ny in ((4, 3), (8, 5), (16, 9)):
        xs = np.linspace(x0, x1, nx + 2)[1:-1]
        ys = np.linspace(y0, y1, ny + 2)[1:-1]
        starts = (xs[None, :] + 1j * ys[:, None]).ravel()
        step_cap = 0.5 * (x1 - x0)
        for t in _refine_many(spec, starts, tol, cfg, max_step=step_cap):
            if t.ok and _inside(t.lam, box):
                found.append((t.lam, t.best_res, t.iters, "fallback"))
        found = _merge(found, merge_radius)
        if len(found) >= need:
            break
    return found


def _audit(spec, rect, found, tol, cfg, merge_radius, leaf_width, flags, depth=0):
    """Make ``found`` complete inside ``rect`` by recursive bisection.

    Returns the updated list of roots (all of them, not only those in
    ``rect``).
    """
    count, rect = _robust_count(spec, rect, cfg)
    have = [f for f in found if _inside(f[0], rect)]
    if count == len(have):
        return found
    if count < len(have):
        flags.add("audit-surplus")
        return found
    x0, x1, y0, y1 = rect
    if x1 - x0 <= leaf_width or depth > 12:
        extra = _fill_box(spec, rect, count, tol, cfg, merge_radius)
        found = _merge(found + extra, merge_radius)
        if sum(_inside(f[0], rect) for f in found) < count:
            flags.add("audit-deficit")
        else:
            flags.add("fallback")
        return found
    mid = 0.5 * (x0 + x1)
    # keep the cut away from known roots
    for f in found:
        if abs(f[0].real - mid) < 1e-4:
            mid += 2e-4
    found = _audit(spec, (x0, mid, y0, y1), found, tol, cfg, merge_radius, leaf_width,
                   flags, depth + 1)
    found = _audit(spec, (mid, x1, y0, y1), found, tol, cfg, merge_radius, leaf_width,
                   flags, depth + 1)
    return found


def compute_spectrum(spec: ProblemSpec, n_max: int, tol: float = 1e-10,
                     cfg: forward.IntegratorSettings = forward.DEFAULT_SETTINGS,
                     complex_probe: bool | None = None, probe_offset: float = 0.1,
                     audit: bool = True, strip_height: float = 1.0,
                     merge_radius: float = MERGE_RADIUS) -> Spectrum:
    """First ``n_max`` eigenvalues by ascending real part.

    ``complex_probe`` (default: on when a ``gamma_i`` is nonzero) adds
    starts at ``center +- probe_offset * 1j`` in every window. With
    ``audit`` on, the argument principle counts zeros in the search strip;
    where Newton missed some, the strip is bisected down to boxes that are
    searched from start grids (entries flagged ``fallback``), and the strip
    is extended to the right until it holds ``n_max`` roots.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    if complex_probe is None:
        complex_probe = any(j.gamma != 0.0 for j in spec.jumps)
    windows = bracket_windows(spec, n_max, cfg)
    starts, owner = [], []
    offsets = (0.0, probe_offset, -probe_offset) if complex_probe else (0.0,)
    for wi, w in enumerate(windows):
        for off in offsets:
            starts.append(complex(w.center, off))
            owner.append(wi)
    lo, hi = 0.0, windows[-1].hi
    spacing = math.pi / spec.optical_length()
    # the leading-order zeros can be far off for generic data; a uniform
    # comb at half the mean spacing catches most of what they miss
    comb = np.arange(0.25 * spacing, hi, 0.5 * spacing)
    for c in comb:
        for off in offsets:
            starts.append(complex(c, off))
            owner.append(-1)
    tracks = _refine_many(spec, starts, tol, cfg, max_step=spacing)

    found = []
    window_ok = [False] * n_max
    for t, wi in zip(tracks, owner):
        if t.ok:
            if wi >= 0:
                window_ok[wi] = True
            if t.lam.real >= lo:
                found.append((t.lam, t.best_res, t.iters, ""))
    found = _merge(found, merge_radius)
    flags: set[str] = set()

    if audit:
        leaf = 0.6 * spacing
        checked = lo
        for _ in range(16):
            found = _audit(spec, (checked, hi, -strip_height, strip_height), found, tol, cfg,
                           merge_radius, leaf, flags)
            checked = hi
            n_in = sum(_inside(f[0], (lo, hi, -strip_height, strip_height)) for f in found)
            if n_in >= n_max:
                break
            hi += (n_max - n_in + 1) * spacing
    rect = (lo, hi, -strip_height, strip_height)
    found = [f for f in found if _inside(f[0], rect)]
    found.sort(key=lambda f: (f[0].real, f[0].imag))
    entries = []
    for n, (lam, res, iters, flag) in enumerate(found[:n_max]):
        win = next((w for w in windows if lam in w), None)
        span = (win.lo, win.hi) if win else (math.nan, math.nan)
        entries.append(SpectrumEntry(n, complex(lam), float(res), int(iters), span, flag))
    spectrum = Spectrum(entries, tol, merge_radius, tuple(sorted(flags)))
    failed = [i for i, ok in enumerate(window_ok) if not ok]
    if len(entries) < n_max or "audit-deficit" in flags:
        raise IncompleteSpectrum(
            f"found {len(entries)} of {n_max} eigenvalues (unconverged windows: {failed})",
            partial=spectrum)
    if failed and not audit:
        raise IncompleteSpectrum(f"windows {failed} did not converge", partial=spectrum)
    return spectrum


class SpectrumSolver(BaseEstimator):
    """Estimator-style wrapper: ``fit(spec)`` computes the spectrum.

    Fitted attributes: ``spectrum_`` and ``eigenvalues_``.
    """

    def __init__(self, n_max=10, tol=1e-10, rtol=1e-10, atol=1e-12,
                 complex_probe=None, audit=True):
        self.n_max = n_max
        self.tol = tol
        self.rtol = rtol
        self.atol = atol
        self.complex_probe = complex_probe
        self.audit = audit

    def fit(self, spec: ProblemSpec, y=None):
        cfg = forward.IntegratorSettings(rtol=self.rtol, atol=self.atol)
        self.spectrum_ = compute_spectrum(spec, self.n_max, self.tol, cfg,
                                          complex_probe=self.complex_probe, audit=self.audit)
        self.eigenvalues_ = self.spectrum_.eigenvalues
        return self
