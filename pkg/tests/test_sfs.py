import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from ratmeyer.bump import BumpProfile, make_profile
from ratmeyer.sfs import (SfsError, dual_gramian_residual, eval_fj, eval_tensor, inner_product_1d,
                          inner_product_tensor, orthonormality_check_sfs, required_jmax, support_fj)

PROF = make_profile(0.125)


def test_eval_fj_examples():
    assert eval_fj(0, PROF, 0.0) == 1.0
    assert eval_fj(1, PROF, 0.75) == 1.0
    assert eval_fj(2, PROF, -1.25) == 1.0
    assert eval_fj(1, PROF, -0.75) == -1.0  # odd j flips the left hump


def test_eval_fj_rejects_negative_index():
    with pytest.raises(ValueError):
        eval_fj(-1, PROF, 0.0)


@pytest.mark.parametrize("j", range(6))
def test_eval_fj_vanishes_off_support(j):
    xi = np.linspace(-5, 5, 20001)
    inside = np.zeros_like(xi, dtype=bool)
    for lo, hi in support_fj(j, PROF.delta):
        inside |= (xi >= lo) & (xi <= hi)
    assert np.all(eval_fj(j, PROF, xi[~inside]) == 0)


def test_eval_fj_two_symmetric_humps():
    for j in (1, 2, 3):
        xi = np.linspace(0, 3, 3001)
        a = np.abs(eval_fj(j, PROF, xi))
        b = np.abs(eval_fj(j, PROF, -xi))
        assert np.allclose(a, b, atol=0) and a.max() == 1.0


def test_norm_is_one_by_adaptive_quadrature():
    for j in range(4):
        total = 0.0
        for lo, hi in support_fj(j, PROF.delta):
            v, _ = quad(lambda x: abs(eval_fj(j, PROF, x)) ** 2, lo, hi, limit=200,
                        epsabs=1e-13, epsrel=1e-13)
            total += v
        assert abs(total - 1) < 1e-10


def test_inner_product_matches_scipy_quad():
    # <T_k f_1, f_2> overlaps on two small intervals; oscillatory phase
    j1, j2, dk = 1, 2, 3
    def integrand(x, part):
        v = eval_fj(j1, PROF, x) * np.conj(eval_fj(j2, PROF, x)) * np.exp(-2j * np.pi * dk * x)
        return float(v.real if part == 0 else v.imag)
    ref = 0.0
    for lo, hi in support_fj(j1, PROF.delta):
        for part, unit in ((0, 1), (1, 1j)):
            v, _ = quad(integrand, lo, hi, args=(part,), limit=400, epsabs=1e-14)
            ref += unit * v
    got = inner_product_1d(j1, dk, j2, 0, PROF)
    assert abs(got - ref) < 1e-10
    assert abs(got) < 1e-10


def test_dual_gramian_examples():
    rep = dual_gramian_residual(PROF, 12, (-2.0, 2.0, 4096), k_max=6)
    assert rep.residual < 1e-12 and rep.n_points == 4096
    zero = dual_gramian_residual(PROF, 1, np.array([0.0]), k_max=0)
    assert zero.residual < 1e-15


def test_dual_gramian_k1_cancellation_between_j0_and_j1():
    # near xi = -1/2 only f_0 and f_1 meet both xi and xi + 1
    xi = np.linspace(-0.5 - PROF.delta, -0.5 + PROF.delta, 501)
    t0 = eval_fj(0, PROF, xi) * np.conj(eval_fj(0, PROF, xi + 1))
    t1 = eval_fj(1, PROF, xi) * np.conj(eval_fj(1, PROF, xi + 1))
    assert np.abs(t0).max() > 0.4 and np.abs(t1).max() > 0.4
    assert np.abs(t0 + t1).max() < 1e-12
    for j in range(2, 6):
        assert not np.any(eval_fj(j, PROF, xi) * eval_fj(j, PROF, xi + 1))


def test_dual_gramian_requires_enough_levels():
    with pytest.raises(SfsError):
        dual_gramian_residual(PROF, 1, (-2.0, 2.0, 100))
    assert required_jmax(2.0, 0.125) >= 4


def test_dual_gramian_detects_broken_profile():
    # squaring the profile breaks the power complementarity of the ramps
    broken = BumpProfile(0.125, phase=None)
    class Squared:
        delta = 0.125
        def __call__(self, xi):
            return broken(xi) ** 2
    rep = dual_gramian_residual(Squared(), 6, (-2.0, 2.0, 512), k_max=3)
    assert rep.residual > 1e-3


@pytest.mark.parametrize("phase", [lambda x: 0.3 * np.sin(2 * np.pi * x), lambda x: 0.7 * x])
def test_complex_profiles_exercise_conjugation(phase):
    prof = BumpProfile(0.125, phase=phase)
    assert np.abs(eval_fj(1, prof, np.array([0.6]))).max() > 0
    assert np.iscomplexobj(eval_fj(1, prof, np.array([0.6])))
    assert dual_gramian_residual(prof, 6).residual < 1e-12
    assert orthonormality_check_sfs(prof, 4, trials=40).max_dev < 1e-10


def test_eval_tensor_examples():
    assert eval_tensor((0, 0), np.array([0.0, 0.0]), PROF) == 1.0
    assert eval_tensor((1, 0), np.array([0.75, 0.0]), PROF) == 1.0
    assert eval_tensor((2, 3), np.array([[5.0, 5.0]]), PROF)[0] == 0.0


def test_orthonormality_examples():
    assert abs(inner_product_1d(3, 2, 3, 2, PROF) - 1) < 1e-8
    assert inner_product_1d(0, 1, 5, -4, PROF) == 0.0
    assert abs(inner_product_1d(1, 0, 2, 0, PROF)) < 1e-10
    assert abs(inner_product_tensor((1, 2), (0, 1), (1, 2), (0, 1), PROF) - 1) < 1e-8


def test_tensor_inner_product_factorizes():
    a = inner_product_tensor((1, 2), (0, 3), (2, 2), (1, -1), PROF)
    b = inner_product_1d(1, 0, 2, 1, PROF) * inner_product_1d(2, 3, 2, -1, PROF)
    assert abs(a - b) < 1e-12


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 8), st.integers(-8, 8), st.integers(0, 8), st.integers(-8, 8))
def test_orthonormality_property(j1, k1, j2, k2):
    v = inner_product_1d(j1, k1, j2, k2, PROF)
    target = 1.0 if (j1, k1) == (j2, k2) else 0.0
    assert abs(v - target) < 1e-8
    # conjugate symmetry
    assert abs(v - np.conj(inner_product_1d(j2, k2, j1, k1, PROF))) < 1e-12


def test_orthonormality_report_fields():
    rep = orthonormality_check_sfs(PROF, 8, n=2, trials=20, seed=3)
    assert rep.pairs == 20 and rep.n == 2 and rep.max_dev < 1e-8
    assert set(rep.to_json()) == {"n", "pairs", "max_dev", "worst_pair"}
