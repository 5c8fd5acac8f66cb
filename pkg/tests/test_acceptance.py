"""One test per acceptance criterion, each recording a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import (GENERIC_JUMPS, l2_left, record_criterion, truth_potentials)
from oracles import TWO_PIECE_ROOTS, constant_weight_roots, two_piece_roots
from pencilspec.asymptotics import remainder_report
from pencilspec.forward import IntegratorSettings, char_fn, char_fn_batch, char_fn_derivative
from pencilspec.inverse import ReconstructionConfig, constants_probe, reconstruct, uniqueness_probe
from pencilspec.model import HALF_PI, PI, CosinePotentials, make_spec
from pencilspec.spectrum import argument_principle_count, bracket_windows, compute_spectrum
from pencilspec.verify import (VolterraProblem, green_identity_residual,
                               shared_eigenvalue_partner, split_u, u_functional,
                               volterra_trivial_check, wronskian_drift)


def test_criterion_01_constant_weight(trivial_spec):
    t0 = time.perf_counter()
    spec = compute_spectrum(trivial_spec, 20)
    elapsed = time.perf_counter() - t0
    err = float(np.max(np.abs(spec.eigenvalues - constant_weight_roots(20))))
    ok = err <= 1e-8 and elapsed < 10.0
    record_criterion(1, ok, f"max error {err:.2e} (limit 1e-8), runtime {elapsed:.1f} s (< 10 s)")
    assert ok


def test_criterion_02_two_piece(two_piece_spec):
    oracle = two_piece_roots(10)
    first_ok = abs(oracle[0] - 0.7776) < 1e-4 and np.allclose(oracle, TWO_PIECE_ROOTS, atol=1e-13)
    err = float(np.max(np.abs(compute_spectrum(two_piece_spec, 10).eigenvalues - oracle)))
    ok = first_ok and err <= 1e-8
    record_criterion(2, ok, f"oracle first root {oracle[0]:.9f}, max error {err:.2e} (limit 1e-8)")
    assert ok


def test_criterion_03_wronskian(generic_spec):
    drifts = {lam: float(np.max(wronskian_drift(generic_spec, lam, n_checkpoints=20)))
              for lam in (1.0, 5.0, 20 + 0.3j)}
    worst = max(drifts.values())
    ok = worst <= 1e-8
    record_criterion(3, ok, f"max relative drift {worst:.2e} over 3 lambdas (limit 1e-8)")
    assert ok


def test_criterion_04_green_identity(gamma0_spec):
    ev = compute_spectrum(gamma0_spec, 10).eigenvalues
    shared = ev[np.abs(ev.imag) < 1e-9].real[:5]
    assert shared.size == 5
    partner = shared_eigenvalue_partner(gamma0_spec, shared)
    worst_ratio = 0.0
    for re in np.linspace(0.5, 10.0, 5):
        for im in np.linspace(0.0, 0.5, 5):
            lam = complex(re, im)
            r = green_identity_residual(gamma0_spec, partner, lam)
            worst_ratio = max(worst_ratio, r / (1e-7 * math.exp(abs(im) * PI)))
    worst_u = worst_split = 0.0
    for lam in shared:
        u1, u2 = split_u(gamma0_spec, partner, lam)
        worst_u = max(worst_u, abs(u_functional(gamma0_spec, partner, lam)))
        worst_split = max(worst_split, abs(2 * lam * u1 + u2))
    ok = worst_ratio <= 1.0 and worst_u <= 1e-6 and worst_split <= 1e-6
    record_criterion(4, ok, f"sweep residual/limit {worst_ratio:.2e}, |U(l_n)| {worst_u:.2e}, "
                            f"|2l_n U1+U2| {worst_split:.2e} (limits 1, 1e-6, 1e-6)")
    assert ok


def test_criterion_05_conjugate_symmetries(gamma0_spec):
    grid = np.array([complex(a, b) for a in np.linspace(0.5, 10, 5)
                     for b in np.linspace(-1.0, 1.0, 5)])
    a = float(np.max(np.abs(char_fn_batch(gamma0_spec, grid.conj())
                            - char_fn_batch(gamma0_spec, grid).conj())))
    p_zero = make_spec(0.6, 0.8, GENERIC_JUMPS,
                       potentials=CosinePotentials([0.0], [0.0, 0.0, -1.0], origin=HALF_PI))
    b = float(np.max(np.abs(char_fn_batch(p_zero, -grid.conj())
                            - char_fn_batch(p_zero, grid).conj())))
    ok = a <= 1e-9 and b <= 1e-9
    record_criterion(5, ok, f"gamma=0 conj gap {a:.2e}, p=0 reflection gap {b:.2e} (limit 1e-9)")
    assert ok


def test_criterion_06_argument_principle(trivial_spec, two_piece_spec):
    counts = []
    for spec in (trivial_spec, two_piece_spec):
        ws = bracket_windows(spec, 10)
        counts.append(argument_principle_count(spec, (ws[0].lo, ws[-1].hi, -1.0, 1.0)))
    ok = counts == [10, 10]
    record_criterion(6, ok, f"counts {counts} (expected [10, 10])")
    assert ok


def test_criterion_07_round_trip(generic_spec, generic_spectrum):
    t0 = time.perf_counter()
    right = generic_spec.potentials
    rep = reconstruct(right, generic_spec, generic_spectrum, ReconstructionConfig())
    probe = uniqueness_probe(right, generic_spec, generic_spectrum,
                             ReconstructionConfig(multistart=5, seed=42))
    elapsed = time.perf_counter() - t0
    truth = truth_potentials()
    ep = l2_left(rep.recovered.p, truth.p)
    eq = l2_left(rep.recovered.q, truth.q)
    dist = float(probe.multistart_distances.max())
    n_conv = probe.multistart_distances.shape[0]
    ok = ep < 1e-3 and eq < 1e-3 and dist < 1e-3 and elapsed < 600
    record_criterion(7, ok, f"L2 error p {ep:.2e}, q {eq:.2e}; max pairwise {dist:.2e} over "
                            f"{n_conv}/5 converged starts; runtime {elapsed:.0f} s")
    assert ok


def test_criterion_08_constants_landscape(generic_spec, generic_spectrum):
    scans = constants_probe(generic_spec, generic_spectrum, n_points=41)
    bad = [s.axis for s in scans if not (s.argmin_offset == 0.0 and s.unique_interior_min)]
    ok = not bad and len(scans) == 6
    record_criterion(8, ok, "minimum at truth on every axis" if ok else f"off-truth axes {bad}")
    assert ok


def test_criterion_09_volterra():
    vp = VolterraProblem(1, lambda x, t: 1.0)
    _, hist = volterra_trivial_check(vp, lambda t: 1.0, 20)
    excess = max(h - HALF_PI**k / math.factorial(k) for k, h in enumerate(hist))
    rng = np.random.default_rng(7)
    R = rng.uniform(-0.25, 0.25, (3, 3))
    vp3 = VolterraProblem(3, lambda x, t: R * (1.0 + np.cos(x - t)) / 2.0)
    final, hist3 = volterra_trivial_check(vp3, lambda t: np.ones(3), 15)
    ok = excess <= 1e-12 and final < 1e-10 * hist3[0]
    record_criterion(9, ok, f"scalar bound excess {excess:.2e} (limit 1e-12), 3x3 final norm "
                            f"{final:.2e} (limit 1e-10)")
    assert ok


def _random_spec(rng):
    alpha = rng.uniform(0.3, 0.7)
    beta = rng.uniform(max(alpha, 1.0 - alpha) + 0.05, 0.97)
    jumps = [(rng.uniform(0.2, 1.4), rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5)),
             (rng.uniform(1.8, 3.0), rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5))]
    pots = CosinePotentials(rng.uniform(-0.3, 0.3, 3), rng.uniform(-1.0, 1.0, 3))
    return make_spec(alpha, beta, jumps, potentials=pots)


def test_criterion_10_derivative_consistency():
    rng = np.random.default_rng(10)
    fine = IntegratorSettings(rtol=1e-13, atol=1e-15)
    h = 1e-5
    worst = 0.0
    for _ in range(10):
        spec = _random_spec(rng)
        lam = complex(rng.uniform(0.5, 15.0), rng.uniform(-0.5, 0.5))
        d = char_fn_derivative(spec, lam)
        fd = (char_fn(spec, lam + h, fine) - char_fn(spec, lam - h, fine)) / (2 * h)
        worst = max(worst, abs(d - fd) / abs(d))
    ok = worst <= 1e-6
    record_criterion(10, ok, f"max relative error {worst:.2e} over 10 pairs (limit 1e-6)")
    assert ok


def test_criterion_11_remainder_diagnostic(two_piece_spec):
    rows = remainder_report(two_piece_spec, np.arange(10.0, 201.0, 10.0))
    scaled = np.array([r[2] for r in rows])
    ok = len(rows) == 20 and bool(np.all(np.isfinite(scaled)))
    ratio = float(scaled.max() / np.median(scaled))
    record_criterion(11, ok, f"diagnostic only: scaled remainder max/median {ratio:.2f}, "
                             f"max {scaled.max():.3g}")
    assert ok
