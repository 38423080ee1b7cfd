import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abfoliate.errors import DomainError, FormMismatch, NotUnitVector
from abfoliate.minkowski import (AlphaBetaPoint, PhiFamily, check_minkowski_condition,
                                 fundamental_matrix, fundamental_tensor, hessian_tensor_oracle,
                                 rho_coeffs, sigma_from_coeffs, sigma_g)

from _support import FAMILIES, random_case, unit

A3 = np.array([[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.0]])
BETA3 = np.array([0.2, -0.1, 0.3])
Y3 = np.array([0.3, 0.5, 0.8])
U3 = np.array([1.0, -0.5, 0.2])
V3 = np.array([-0.3, 0.7, 1.1])


def test_families_basic_values():
    r = PhiFamily.randers()
    np.testing.assert_allclose(r.eval(0.25), (1.25, 1.0, 0.0))
    k = PhiFamily.kropina()
    np.testing.assert_allclose(k.eval(0.5), (2.0, -4.0, 16.0))
    g = PhiFamily.generalized_kropina(2.0)
    np.testing.assert_allclose(g.eval(0.5), (4.0, -16.0, 96.0))
    assert PhiFamily.riemannian().eval(0.3)[0] == 1.0


def test_domain_errors():
    with pytest.raises(DomainError):
        PhiFamily.kropina().eval(-0.1)
    with pytest.raises(DomainError):
        PhiFamily.randers().eval(1.0)
    with pytest.raises(DomainError):
        PhiFamily.generalized_kropina(-1.5)


def test_custom_profile_rejects_non_convex():
    bad = lambda s: (1.0 + 2.0 * s, 2.0 + 0 * s, 0 * s)
    with pytest.raises(DomainError):
        PhiFamily.custom(bad, b0=0.9, s_domain=(-0.9, 0.9))
    good = PhiFamily.custom(lambda s: (1.0 + s, 1.0 + 0 * s, 0 * s), b0=1.0, s_domain=(-1.0, 1.0))
    assert good.code is None
    with pytest.raises(ValueError):
        good.to_dict()


def test_rho_coefficients_randers_closed_form():
    s = 0.3
    rho, r0, r1 = rho_coeffs(PhiFamily.randers(), s)
    assert rho == pytest.approx(1.3)
    assert r0 == pytest.approx(1.0)
    assert r1 == pytest.approx(-s + 1.3)


def test_fundamental_tensor_frozen_values():
    # reference values from an independent 40-digit differentiation of F^2
    p = AlphaBetaPoint(A3, BETA3)
    y = unit(p, Y3)
    expected = {"randers": -0.22575383202086817, "kropina": -44.053940736,
                "gen_kropina_2": -1580.22846038016}
    for name, ref in expected.items():
        fam = FAMILIES[name]
        # the reference was computed at the unnormalised y; g_y is 0-homogeneous in y
        assert fundamental_tensor(p, fam, y, U3, V3) == pytest.approx(ref, rel=1e-12)


def test_fundamental_matrix_matches_tensor():
    p = AlphaBetaPoint(A3, BETA3)
    y = unit(p, Y3)
    for fam in FAMILIES.values():
        G = fundamental_matrix(p, fam, y)
        assert U3 @ G @ V3 == pytest.approx(fundamental_tensor(p, fam, y, U3, V3), rel=1e-13)
        np.testing.assert_allclose(G, G.T)


def test_not_unit_vector():
    p = AlphaBetaPoint(A3, BETA3)
    with pytest.raises(NotUnitVector):
        fundamental_matrix(p, PhiFamily.randers(), 2.0 * unit(p, Y3))


def test_point_validation():
    with pytest.raises(ValueError):
        AlphaBetaPoint(np.eye(3) * -1.0, BETA3)
    with pytest.raises(ValueError):
        AlphaBetaPoint(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        AlphaBetaPoint(np.eye(3), BETA3, b=1.0)


def test_randers_b_bound():
    p = AlphaBetaPoint(np.eye(3), np.array([0.0, 0.0, 1.2]))
    with pytest.raises(DomainError):
        fundamental_matrix(p, PhiFamily.randers(), np.array([1.0, 0.0, 0.0]))


def test_minkowski_condition():
    chk = check_minkowski_condition(PhiFamily.randers(), 0.5, np.linspace(-0.5, 0.5, 11))
    assert chk.ok and chk.margin == pytest.approx(1.0)
    with pytest.raises(DomainError):
        check_minkowski_condition(PhiFamily.randers(), 1.0, [0.0])
    with pytest.raises(DomainError):
        check_minkowski_condition(PhiFamily.randers(), 0.5, [0.7])


@pytest.mark.parametrize("name", list(FAMILIES))
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_tensor_properties(name, seed):
    rng = np.random.default_rng(seed)
    fam, p, data, y, u, v = random_case(rng, name)
    G = fundamental_matrix(p, fam, y)
    # g_y(y, y) = F(y)^2 and g_y(y, u) = F(y) dF_y(u)
    F = p.F(fam, y)
    assert y @ G @ y == pytest.approx(F * F, rel=1e-11)
    # strong convexity for admissible b
    assert np.linalg.eigvalsh(G).min() > 0
    assert fundamental_tensor(p, fam, y, u, v) == pytest.approx(
        fundamental_tensor(p, fam, y, v, u), rel=1e-13)


@pytest.mark.parametrize("name", list(FAMILIES))
@given(seed=st.integers(0, 2 ** 32 - 1), lam=st.floats(0.2, 5.0))
def test_norm_is_positively_homogeneous(name, seed, lam):
    rng = np.random.default_rng(seed)
    fam, p, data, y, u, v = random_case(rng, name)
    assert p.F(fam, lam * y) == pytest.approx(lam * p.F(fam, y), rel=1e-13)


@pytest.mark.parametrize("name", list(FAMILIES))
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_hessian_oracle_agrees(name, seed):
    rng = np.random.default_rng(seed)
    fam, p, data, y, u, v = random_case(rng, name)
    g = fundamental_tensor(p, fam, y, u, v)
    o = hessian_tensor_oracle(p, fam, y, u, v)
    scale = max(abs(g), math.sqrt(fundamental_tensor(p, fam, y, u, u)
                                  * fundamental_tensor(p, fam, y, v, v)))
    assert abs(g - o) <= 1e-7 * scale


@pytest.mark.parametrize("name", list(FAMILIES))
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_sigma_forms_and_determinant(name, seed):
    rng = np.random.default_rng(seed)
    fam, p, data, y, u, v = random_case(rng, name)
    s = p.beta_of(y)
    sg = sigma_g(p, fam, s)
    assert sg.rho_form == pytest.approx(sg.phi_form, rel=1e-12)
    ratio = np.linalg.det(fundamental_matrix(p, fam, y)) / np.linalg.det(p.a)
    assert sg.rho_form == pytest.approx(ratio, rel=1e-9)


def test_sigma_mismatch_detected():
    f0, f1, f2 = 1.2, 1.0, 0.0
    r, q = sigma_from_coeffs(2, 0.2, 0.09, f0, f1, f2)
    assert r == pytest.approx(q, rel=1e-12)
    bogus = PhiFamily.custom(lambda s: (1.0 + s, 1.0 + 0 * s, 0.5 + 0 * s), b0=1.0,
                             s_domain=(-1.0, 1.0), name="inconsistent")
    p = AlphaBetaPoint(np.eye(3), np.array([0.3, 0.0, 0.0]))
    # phi'' disagrees with phi, but both forms are still algebraic identities in (phi, phi', phi'')
    sg = sigma_g(p, bogus, 0.1)
    assert sg.rho_form == pytest.approx(sg.phi_form, rel=1e-12)
    with pytest.raises(FormMismatch):
        sigma_g(p, bogus, 0.1, rtol=-1.0)
