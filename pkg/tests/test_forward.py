import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import two_piece_delta, two_piece_delta_prime
from pencilspec.errors import DomainError, NonFinite, ValidationError
from pencilspec.forward import (DEFAULT_SETTINGS, IntegratorSettings, apply_jump, char_fn,
                                char_fn_batch, char_fn_derivative, evolve, phi, shoot)
from pencilspec.model import HALF_PI, PI, CosinePotentials, JumpCondition, State, make_spec

from conftest import TRIVIAL_JUMPS


@pytest.fixture(scope="module")
def q_one_spec():
    return make_spec(1.0, 1.0, TRIVIAL_JUMPS, potentials=CosinePotentials([0.0], [1.0]),
                     mode="relaxed")


class TestEvolve:
    def test_cosine(self, trivial_spec):
        s = evolve(trivial_spec, 1.0, 0.0, PI, State(1, 0, 0.0))
        assert abs(s.y + 1) < 1e-9 and abs(s.dy) < 1e-9 and s.x == PI

    def test_lambda_zero_linear(self, trivial_spec):
        s = evolve(trivial_spec, 0.0, 0.0, 1.2, State(1, 0, 0.0))
        assert abs(s.y - 1) < 1e-12 and abs(s.dy) < 1e-12
        s = evolve(trivial_spec, 0.0, 0.0, 1.2, State(0.5, 2.0, 0.0))
        assert abs(s.y - (0.5 + 2.0 * 1.2)) < 1e-12 and abs(s.dy - 2.0) < 1e-12

    def test_cosh(self, q_one_spec):
        s = evolve(q_one_spec, 0.0, 0.0, 1.0, State(1, 0, 0.0))
        assert abs(s.y - math.cosh(1)) < 1e-9 and abs(s.dy - math.sinh(1)) < 1e-9

    def test_backwards_is_inverse(self, generic_spec):
        lam = 2.3 + 0.1j
        s = State(0.4 - 0.2j, 1.1, 1.1)
        f = evolve(generic_spec, lam, 1.1, 2.0, s)
        b = evolve(generic_spec, lam, 2.0, 1.1, f)
        assert abs(b.y - s.y) < 1e-9 and abs(b.dy - s.dy) < 1e-9

    def test_rejects_interior_jump(self, generic_spec):
        with pytest.raises(DomainError):
            evolve(generic_spec, 1.0, 0.5, 1.5, State(1, 0, 0.5))

    def test_rejects_outside(self, trivial_spec):
        with pytest.raises(DomainError):
            evolve(trivial_spec, 1.0, 0.0, 4.0, State(1, 0, 0.0))

    def test_overflow_is_nonfinite(self, trivial_spec):
        with pytest.raises(NonFinite):
            evolve(trivial_spec, 1e3 + 300j, 0.0, PI, State(1, 0, 0.0))


class TestApplyJump:
    def test_identity(self):
        s = apply_jump(State(1.3, -0.2, 1.0), JumpCondition(1.0, 1.0, 0.0), 4.0)
        assert (s.y, s.dy) == (1.3, -0.2)

    def test_substitution(self):
        s = apply_jump(State(1, 0, 1.0), JumpCondition(1.0, 2.0, 0.5), 1.0)
        assert s.y == 2 and s.dy == 0.5j and s.x == 1.0

    def test_lambda_zero(self):
        s = apply_jump(State(1, 1, 1.0), JumpCondition(1.0, 2.0, 0.5), 0.0)
        assert s.y == 2 and s.dy == 0.5

    def test_location_checked(self):
        with pytest.raises(DomainError):
            apply_jump(State(1, 0, 0.5), JumpCondition(1.0, 2.0, 0.5), 1.0)


class TestPhi:
    def test_initial(self, generic_spec):
        s = phi(generic_spec, 3.0 + 1j, 0.0)
        assert (s.y, s.dy) == (1, 0)

    @pytest.mark.parametrize("lam", [0.3, 2.0, 7.5, 1 + 0.5j])
    def test_cos_closed_form(self, trivial_spec, lam):
        for x in (0.4, 1.9, PI):
            assert abs(phi(trivial_spec, lam, x).y - np.cos(lam * x)) < 1e-9

    def test_two_piece_at_pi(self, two_piece_spec):
        for lam in (0.5, 1.0, 3.3):
            assert abs(phi(two_piece_spec, lam, PI).y - two_piece_delta(lam)) < 1e-9

    def test_jump_at_zero_applied_once(self):
        spec = make_spec(1.0, 1.0, [(0.0, 2.0, 0.0), (HALF_PI, 1.0, 0.0)], mode="relaxed")
        s = phi(spec, 1.0, 0.0)
        assert s.y == 2.0 and s.dy == 0.0

    def test_jump_at_pi_applied_before_readout(self):
        spec = make_spec(1.0, 1.0, [(0.0, 1.0, 0.0), (PI, 2.0, 0.0)], mode="relaxed")
        assert abs(char_fn(spec, 0.3) - 2 * math.cos(0.3 * PI)) < 1e-9

    def test_shoot_samples_after_jump(self, generic_spec):
        lam = 1.7
        before = shoot(generic_spec, [lam], [1.0 - 1e-13]).y[0, 0]
        at = shoot(generic_spec, [lam], [1.0]).y[0, 0]
        assert abs(at - 1.5 * before) < 1e-9


class TestCharFn:
    def test_trivial_values(self, trivial_spec):
        assert abs(char_fn(trivial_spec, 0.5)) < 1e-9
        assert abs(char_fn(trivial_spec, 0.0) - 1) < 1e-12

    def test_two_piece_value(self, two_piece_spec):
        assert abs(char_fn(two_piece_spec, 1.0) - (-0.395430)) < 1e-6
        assert abs(char_fn(two_piece_spec, 1.0) - two_piece_delta(1.0)) < 1e-9

    def test_batch_matches_scalar(self, generic_spec):
        lams = np.array([[0.5, 2 + 0.3j], [4.1, -1.0 - 0.2j]])
        batch = char_fn_batch(generic_spec, lams)
        assert batch.shape == lams.shape
        for lam, d in zip(lams.ravel(), batch.ravel()):
            assert abs(char_fn(generic_spec, lam) - d) < 1e-10

    def test_tolerance_convergence(self, two_piece_spec):
        lam = 3.1
        exact = two_piece_delta(lam)
        loose = IntegratorSettings(rtol=1e-6, atol=1e-8)
        tight = IntegratorSettings(rtol=5e-7, atol=5e-9)
        e_loose = abs(char_fn(two_piece_spec, lam, loose) - exact)
        e_tight = abs(char_fn(two_piece_spec, lam, tight) - exact)
        assert e_tight < 10 * e_loose + 1e-14

    def test_settings_validation(self):
        with pytest.raises(ValidationError):
            IntegratorSettings(rtol=0)
        with pytest.raises(ValidationError):
            IntegratorSettings(max_step=-1)
        with pytest.raises(ValidationError):
            IntegratorSettings(method="RK45")

    def test_grid_and_cosine_agree(self, generic_spec, generic_grid_spec):
        for lam in (0.8, 3.0 + 0.4j):
            assert abs(char_fn(generic_spec, lam) - char_fn(generic_grid_spec, lam)) < 1e-7


class TestDerivative:
    def test_trivial(self, trivial_spec):
        assert abs(char_fn_derivative(trivial_spec, 0.5) + PI) < 1e-8

    def test_two_piece(self, two_piece_spec):
        for lam in (0.7, 5.2):
            assert abs(char_fn_derivative(two_piece_spec, lam) - two_piece_delta_prime(lam)) < 1e-8

    @pytest.mark.parametrize("lam", [0.9, 3.4 + 0.2j, 11.0 - 0.5j])
    def test_central_difference(self, generic_spec, lam):
        h = 1e-5
        fd = (char_fn(generic_spec, lam + h) - char_fn(generic_spec, lam - h)) / (2 * h)
        d = char_fn_derivative(generic_spec, lam)
        assert abs(d - fd) <= 1e-6 * abs(d)

    def test_imaginary_step_trend(self, generic_spec):
        lam = 2.2
        d = char_fn_derivative(generic_spec, lam)
        base = char_fn(generic_spec, lam)
        errs = [abs((char_fn(generic_spec, lam + 1j * h) - base) / (1j * h) - d)
                for h in (1e-6, 1e-7)]
        # analytic in lam, so the one-sided quotient converges like h
        assert errs[1] < errs[0] and errs[1] < 1e-5 * abs(d)


class TestSymmetry:
    def test_conjugate_gamma_zero(self, gamma0_spec):
        for lam in (0.7 + 0.3j, 4.0 - 0.8j):
            assert abs(char_fn(gamma0_spec, lam.conjugate())
                       - char_fn(gamma0_spec, lam).conjugate()) < 1e-9

    def test_reflection_p_zero(self):
        spec = make_spec(0.6, 0.8, [(1.0, 1.5, 0.2), (2.2, 0.8, -0.1)],
                         potentials=CosinePotentials([0.0], [0.3, 0.2]))
        for lam in (0.7 + 0.3j, 4.0 - 0.8j):
            assert abs(char_fn(spec, -lam.conjugate()) - char_fn(spec, lam).conjugate()) < 1e-9

    def test_no_symmetry_with_gamma(self, generic_spec):
        lam = 2.0 + 0.5j
        gap = abs(char_fn(generic_spec, lam.conjugate()) - char_fn(generic_spec, lam).conjugate())
        assert gap > 1e-4


@settings(max_examples=10, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(0.1, 8.0), st.floats(-1.0, 1.0))
def test_wronskian_constant(g1, lam_re, lam_im):
    spec = make_spec(0.6, 0.8, [(1.0, 1.5, g1), (2.2, 0.8, -0.1)],
                     potentials=CosinePotentials([0.0, 0.1], [0.0, 0.0, -1.0], origin=HALF_PI))
    lam = complex(lam_re, lam_im)
    xs = np.linspace(0.0, PI, 9)
    u = shoot(spec, [lam, lam], xs, initial=(np.array([1.0, 0.0]), np.array([0.0, 1.0])))
    w = u.y[:, 0] * u.dy[:, 1] - u.dy[:, 0] * u.y[:, 1]
    assert np.max(np.abs(w - w[0])) <= 1e-8 * abs(w[0])


def test_default_settings():
    assert DEFAULT_SETTINGS.rtol == 1e-10 and DEFAULT_SETTINGS.atol == 1e-12
    assert DEFAULT_SETTINGS.step_cap(10.0, 0.8) == pytest.approx(0.1 / 9.0)
