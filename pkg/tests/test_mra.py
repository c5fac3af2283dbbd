import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ratmeyer.bump import BoxUnion, mollify_indicator
from ratmeyer.filterbank import make_filterbank
from ratmeyer.mra import (Ellipsoid, EllipsoidChoice, FunctionAtom, Generator, MraError, MraSpec,
                          ScalingVector, StrictExpansiveError, build_mra_ellipsoid, choose_ellipsoid,
                          expanding_ellipsoid, expansion_certificate, index_set,
                          integer_lowpass_se9, orthonormality_residual, refine_to_lattice,
                          rescale_mra, sandwich_slack, strictly_expansive_scaling)
from ratmeyer.ratlat import Lattice, RatMatrix, cayley_rationalize, group_indices
from ratmeyer.sfs import support_fj

F = Fraction


def ball(r, n=1):
    return Ellipsoid(RatMatrix.identity(n), RatMatrix.diag([F(r)] * n))


def brute_index_set(E, delta, jmax=8, samples=41):
    """Indices whose closed support boxes meet E, by sampling each box on a grid.

    The grid contains the box edges and the origin when inside, so tangent
    contacts are caught exactly.
    """
    out = []
    U = E.U.to_numpy()
    for j in itertools.product(range(jmax), repeat=E.dim):
        per_axis = [support_fj(i, delta) for i in j]
        hit = False
        for combo in itertools.product(*per_axis):
            axes = []
            for lo, hi in combo:
                g = np.linspace(lo, hi, samples)
                axes.append(np.append(g, 0.0) if lo <= 0 <= hi else g)
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, E.dim)
            hit |= bool(E.contains(pts @ U, tol=1e-12).any())
        if hit:
            out.append(j)
    return sorted(out)


# ---------------------------------------------------------------- ellipsoids


def test_expanding_ellipsoid_isotropic():
    E, lam = expanding_ellipsoid(np.diag([2.0, 2.0]))
    assert lam > 1.9 and expansion_certificate(E, np.diag([2.0, 2.0]), lam) > 0


def test_expanding_ellipsoid_axis_aligned():
    B = np.diag([1.5, 2.0])
    E, lam = expanding_ellipsoid(B)
    assert E.U == RatMatrix.identity(2)
    assert lam > 1 and expansion_certificate(E, B, lam) >= 0


def test_expanding_ellipsoid_rotated():
    c, s = np.cos(np.pi / 6), np.sin(np.pi / 6)
    B = np.array([[c, -s], [s, c]]) * 1.5
    E, lam = expanding_ellipsoid(B)
    assert 1 < lam < 1.5
    assert expansion_certificate(E, B, lam) >= 0
    # sampled check: boundary of lam E lies inside B(E)
    t = np.linspace(0, 2 * np.pi, 721)
    U = E.U.to_numpy()
    pts = lam * (np.stack([np.cos(t), np.sin(t)], 1) * E.axes) @ U
    pre = pts @ np.linalg.inv(B).T
    assert E.contains(pre, tol=1e-9).all()


def test_expanding_ellipsoid_rejects_contraction():
    with pytest.raises(MraError):
        expanding_ellipsoid(np.diag([0.5, 2.0]))


def test_index_set_examples():
    assert index_set(ball(F(1, 10), 2), 0.1) == [(0, 0)]
    # closed supports with delta: radius below 1 - delta keeps j = 2 out
    assert index_set(ball(F(17, 20)), 0.1) == [(0,), (1,)]
    assert index_set(ball(1), 0.1) == [(0,), (1,), (2,)]


@settings(max_examples=40, deadline=None)
@given(st.fractions(F(1, 10), F(3), max_denominator=20),
       st.fractions(F(1, 10), F(3), max_denominator=20),
       st.sampled_from([0.05, 0.1, 0.2]))
def test_index_set_matches_brute_force(a, b, delta):
    E = Ellipsoid(RatMatrix.identity(2), RatMatrix.diag([a, b]))
    assert index_set(E, delta) == brute_index_set(E, delta)


def test_index_set_rotated_matches_brute_force():
    U = cayley_rationalize(np.array([[0.8, -0.6], [0.6, 0.8]]), 1e-9)
    E = Ellipsoid(U, RatMatrix.diag([F(3, 2), F(7, 10)]))
    J = index_set(E, 0.1)
    assert J == brute_index_set(E, 0.1)
    assert (0, 0) in J and len(J) > 1


def test_sandwich_slack_sign():
    B = np.array([[2.0]])
    J = [(0,), (1,)]
    assert sandwich_slack(ball(F(4, 5)), B, J, 0.05) > 0
    assert sandwich_slack(ball(F(1, 2)), B, J, 0.05) < 0


def test_ellipsoid_validation():
    with pytest.raises(MraError):
        Ellipsoid(RatMatrix([[1, 1], [0, 1]]), RatMatrix.identity(2))
    with pytest.raises(MraError):
        Ellipsoid(RatMatrix.identity(1), RatMatrix([[-1]]))
    E = ball(F(3, 4), 2)
    assert Ellipsoid.from_json(E.to_json()).P == E.P


# ---------------------------------------------------------------- ellipsoid MRAs


def test_build_mra_dyadic_multiplicity_two():
    A = RatMatrix([[2]])
    E = ball(F(4, 5))
    choice = EllipsoidChoice(E, 2.0, index_set(E, 0.05), 0.9)
    spec = build_mra_ellipsoid(A, 0.05, choice=choice)
    assert spec.N == 2 and spec.lattice == Lattice.integer(1)
    assert orthonormality_residual(spec) < 1e-12
    bank = make_filterbank(spec, (64,))
    assert bank.meta["refinement_residual"] < 1e-8


def test_build_mra_isotropic_two_dimensional():
    spec = build_mra_ellipsoid(RatMatrix([[2, 0], [0, 2]]), 0.05)
    assert spec.N == len(spec.meta["J"])
    assert orthonormality_residual(spec, 24) < 1e-12
    assert spec.meta["sandwich_slack"] > 0 and spec.meta["certificate"] >= 0


def test_build_mra_three_halves_is_refinable():
    spec = build_mra_ellipsoid(RatMatrix([[F(3, 2)]]), 0.05)
    assert orthonormality_residual(spec) < 1e-12
    target = group_indices(spec.A).gamma
    s = 2  # common denominator of U * Gamma basis with U = 1
    spec2 = refine_to_lattice(rescale_mra(spec, RatMatrix([[s]])), target)
    bank = make_filterbank(spec2, (128,))
    assert bank.meta["refinement_residual"] < 1e-8


def test_choose_ellipsoid_minimal_not_larger_than_sqn():
    A = RatMatrix([[0, F(1, 2)], [3, 0]])
    small = choose_ellipsoid(A, 0.05)
    big = choose_ellipsoid(A, 0.05, scale="sqn")
    assert len(small.J) <= len(big.J)
    assert sandwich_slack(small.E, A.T.to_numpy(), small.J, 0.05) > 0


def test_build_mra_rejects_non_expansive():
    with pytest.raises(MraError):
        build_mra_ellipsoid(RatMatrix([[1, 0], [0, 2]]), 0.05)


def test_rescale_identity_and_invariance():
    spec = build_mra_ellipsoid(RatMatrix([[F(3, 2)]]), 0.05)
    same = rescale_mra(spec, RatMatrix.identity(1))
    assert same.A == spec.A and same.lattice == spec.lattice
    q = RatMatrix([[2]])
    scaled = rescale_mra(spec, q)
    assert scaled.lattice == Lattice(RatMatrix([[F(1, 2)]]))
    assert scaled.lattice.contains_lattice(Lattice.integer(1))
    assert abs(orthonormality_residual(scaled) - orthonormality_residual(spec)) < 1e-12


def test_refine_to_lattice_doubles_generators():
    A = RatMatrix([[F(3, 2)]])
    gi = group_indices(A)
    spec = strictly_expansive_scaling(A, gi.gamma, BoxUnion.interval(-1, 1), 0.1)
    assert refine_to_lattice(spec, spec.lattice).N == spec.N
    fine = refine_to_lattice(spec, Lattice.integer(1))
    assert fine.N == 2
    assert sorted(g.shift[0] for g in fine.scaling.generators) == [0, F(1, 2)]
    assert orthonormality_residual(fine) < 1e-10
    with pytest.raises(MraError):
        refine_to_lattice(fine, Lattice(RatMatrix([[F(1, 4)]])))


# ---------------------------------------------------------------- strict path


def test_strict_three_halves_plateau():
    A = RatMatrix([[F(3, 2)]])
    gi = group_indices(A)
    spec = strictly_expansive_scaling(A, gi.gamma, BoxUnion.interval(-1, 1), 0.1)
    assert abs(spec.scaling.eval(np.zeros((1, 1)))[0, 0] - np.sqrt(0.5)) < 1e-15
    assert orthonormality_residual(spec) < 1e-12


def test_strict_dyadic_meyer_type():
    A = RatMatrix([[2]])
    gi = group_indices(A)
    spec = strictly_expansive_scaling(A, gi.gamma, BoxUnion.interval(-0.5, 0.5), 0.1)
    xi = np.linspace(-1, 1, 2001)
    ks = np.arange(-3, 4)
    v = spec.scaling.eval((xi[:, None] + ks).reshape(-1, 1))[0].reshape(xi.size, -1)
    assert np.abs((np.abs(v) ** 2).sum(axis=1) - 1).max() < 1e-12


def test_strict_rejects_large_eps_and_non_tiles():
    A = RatMatrix([[F(3, 2)]])
    gi = group_indices(A)
    with pytest.raises(StrictExpansiveError):
        strictly_expansive_scaling(A, gi.gamma, BoxUnion.interval(-1, 1), 0.45)
    with pytest.raises(StrictExpansiveError):
        strictly_expansive_scaling(A, gi.gamma, BoxUnion.interval(-1.5, 1.5), 0.1)


def test_integer_lowpass_se9():
    A = RatMatrix([[2]])
    f = mollify_indicator(BoxUnion.interval(-0.5, 0.5), 0.1)
    m = integer_lowpass_se9(A, f, [-0.6], [0.6])
    assert abs(m(0.0) - 1) < 1e-15 and m(0.5) == 0.0
    xi = np.linspace(0, 1, 10_000, endpoint=False)
    assert np.abs(m(xi) ** 2 + m(xi + 0.5) ** 2 - 1).max() < 1e-10
    dyadic = np.arange(1024) / 1024  # reduction mod 1 is exact on these nodes
    assert np.array_equal(m(dyadic + 1), m(dyadic)) and np.array_equal(m(dyadic - 3), m(dyadic))
    with pytest.raises(MraError):
        integer_lowpass_se9(RatMatrix([[F(3, 2)]]), f, [-0.6], [0.6])


# ---------------------------------------------------------------- serialization


def test_spec_json_round_trip():
    spec = build_mra_ellipsoid(RatMatrix([[2, 0], [0, 2]]), 0.05)
    back = MraSpec.from_json(spec.to_json())
    xi = np.random.default_rng(0).uniform(-2, 2, (200, 2))
    assert np.array_equal(back.scaling.eval(xi), spec.scaling.eval(xi))
    assert back.lattice == spec.lattice


def test_generator_translate_and_dilate():
    atom = FunctionAtom(lambda eta: np.exp(-eta[:, 0] ** 2), [-3], [3])
    g = Generator(atom, RatMatrix.identity(1))
    xi = np.linspace(-2, 2, 9)[:, None]
    t = g.translate([F(1, 3)])
    assert np.allclose(t.eval(xi), g.eval(xi) * np.exp(-2j * np.pi * xi[:, 0] / 3), atol=1e-15)
    d = g.dilate(RatMatrix([[2]]))
    # D_2 f has transform 2^{-1/2} f_hat(xi / 2)
    assert np.allclose(d.eval(xi), g.eval(xi / 2) / np.sqrt(2), atol=1e-15)
