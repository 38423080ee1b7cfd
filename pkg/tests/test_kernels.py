import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abfoliate import _kernels
from abfoliate.minkowski import PhiFamily

needs_numba = pytest.mark.skipif(_kernels.numba is None, reason="numba not importable")


@pytest.fixture
def backend():
    saved = _kernels.get_backend()
    yield _kernels.set_backend
    _kernels.set_backend(saved)


def _fd_error(n, backend_name):
    _kernels.set_backend(backend_name)
    x = np.arange(n) / n
    f = np.sin(2 * np.pi * x)[None, :, None] * np.ones((3, 1, 2))
    df = _kernels.fd_derivative(f, 1, 1.0 / n)
    return np.abs(df - 2 * np.pi * np.cos(2 * np.pi * x)[None, :, None]).max()


@pytest.mark.parametrize("name", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_fd_is_fourth_order(backend, name):
    e32, e64 = _fd_error(32, name), _fd_error(64, name)
    assert math.log2(e32 / e64) >= 3.5


@needs_numba
@given(seed=st.integers(0, 2 ** 32 - 1), axis=st.integers(0, 2))
def test_backends_agree_on_fd(seed, axis):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((6, 7, 8))
    saved = _kernels.get_backend()
    try:
        _kernels.set_backend("numpy")
        a = _kernels.fd_derivative(f, axis, 0.1)
        _kernels.set_backend("numba")
        b = _kernels.fd_derivative(f, axis, 0.1)
    finally:
        _kernels.set_backend(saved)
    np.testing.assert_array_equal(a, b)


@needs_numba
@given(n=st.integers(0, 3000), seed=st.integers(0, 2 ** 32 - 1))
def test_pairwise_sum_identical_across_backends(n, seed):
    x = np.random.default_rng(seed).standard_normal(n) * 1e3
    saved = _kernels.get_backend()
    try:
        _kernels.set_backend("numpy")
        a = _kernels.pairwise_sum(x)
        _kernels.set_backend("numba")
        b = _kernels.pairwise_sum(x)
    finally:
        _kernels.set_backend(saved)
    assert a == b
    assert a == pytest.approx(math.fsum(x), abs=1e-9 * max(1.0, np.abs(x).sum()))


def test_pairwise_sum_edge_cases():
    assert _kernels.pairwise_sum(np.array([])) == 0.0
    assert _kernels.pairwise_sum(np.array([2.5])) == 2.5
    assert _kernels.pairwise_sum(np.arange(7.0)) == 21.0


@needs_numba
@pytest.mark.parametrize("fam", [PhiFamily.randers(), PhiFamily.kropina(),
                                 PhiFamily.generalized_kropina(2.0)], ids=lambda f: f.name)
def test_solver_backends_agree(fam):
    rng = np.random.default_rng(7)
    hi = 0.9 if fam.kind == "randers" else 1.2
    b = rng.uniform(0.05, hi, 400)
    bn = b * rng.uniform(-0.95, 0.95, 400)
    lo, up = fam.s_domain
    out = {}
    saved = _kernels.get_backend()
    try:
        for name in ("numpy", "numba"):
            _kernels.set_backend(name)
            out[name] = _kernels.solve_fixed_point(b, bn, phi=fam.eval_unchecked, dom_lo=lo,
                                                   dom_hi=up, code=fam.code, l=fam.l)
    finally:
        _kernels.set_backend(saved)
    np.testing.assert_array_equal(out["numpy"][1], out["numba"][1])
    ok = out["numpy"][1] == _kernels.STATUS_OK
    assert ok.all()
    np.testing.assert_allclose(out["numpy"][0][ok], out["numba"][0][ok], rtol=0, atol=1e-13)


def test_root_next_to_discriminant_edge():
    # beta(N) close to -b puts the Kropina root just past the edge where the residual is defined
    b, bn = math.sqrt(2.2069343266211545), -1.4809477318081572
    fam = PhiFamily.kropina()
    s, st_ = _kernels.solve_fixed_point(np.array([b]), np.array([bn]), phi=fam.eval_unchecked,
                                        dom_lo=0.0, dom_hi=math.inf, code=fam.code, l=fam.l)
    assert st_[0] == _kernels.STATUS_OK
    assert s[0] == pytest.approx(math.sqrt(b * (b + bn) / 2.0), rel=1e-10)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _kernels.set_backend("cuda")
