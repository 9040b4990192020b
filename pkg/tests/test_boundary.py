import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robinlab.boundary import (BoundaryLoop, CauchyData, cauchy_C, in_A, l2_norm, lb_eigenbasis,
                               multiplication_bound_probe, project_W, sobolev_norm, tangential_gradient)
from robinlab.geometry import StarCurve, TAG_GAMMA
from robinlab.spectral import circle_loop

from conftest import RADIAL_ALPHA


@pytest.fixture(scope="module")
def unit_loop():
    return circle_loop(1.0, 256, "S")


@pytest.fixture(scope="module")
def unit_basis(unit_loop):
    return lb_eigenbasis(unit_loop)


def test_circle_eigenvalues(unit_basis):
    expected = np.array([0, 1, 1, 4, 4, 9, 9, 16, 16], dtype=float)
    assert np.allclose(unit_basis.eigenvalues[:9], expected, rtol=1e-3, atol=1e-12)


def test_eigenvalue_scaling():
    small = lb_eigenbasis(StarCurve.circle(1.0), M=8, n_nodes=128).eigenvalues
    large = lb_eigenbasis(StarCurve.circle(2.0), M=8, n_nodes=128).eigenvalues
    assert np.allclose(large, small / 4, atol=1e-12)


def test_constant_eigenfunction_normalization(unit_basis):
    assert np.allclose(np.abs(unit_basis.vectors[:, 0]), 1 / np.sqrt(2 * np.pi), rtol=1e-3)
    assert np.allclose(unit_basis.gram(), np.eye(unit_basis.size), atol=1e-10)


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
def test_constant_field_norm(unit_loop, unit_basis, t):
    assert sobolev_norm(unit_loop.field(-2.0), t, unit_basis) == pytest.approx(2 * np.sqrt(2 * np.pi), rel=1e-3)


def test_cos3_h1_norm(unit_loop, unit_basis):
    f = unit_loop.field(lambda th: np.cos(3 * th))
    assert sobolev_norm(f, 1.0, unit_basis) == pytest.approx(np.sqrt(10 * np.pi), rel=1e-3)
    assert sobolev_norm(f, 0.0, unit_basis) == pytest.approx(l2_norm(f), rel=1e-12)


def test_tangential_gradient(unit_loop):
    assert np.abs(tangential_gradient(unit_loop.field(3.0)).values).max() == 0.0
    for m in (1, 4):
        f = unit_loop.field(lambda th: np.cos(m * th))
        # centered differences: relative error about (m h)^2 / 6
        h = 2 * np.pi / unit_loop.n
        assert l2_norm(tangential_gradient(f)) == pytest.approx(m * l2_norm(f), rel=(m * h) ** 2 / 3)


def test_in_A_single_mode(unit_loop):
    f = unit_loop.field(lambda th: np.cos(3 * th))
    inside, ratio = in_A(f, 3.0 + 1e-3)
    assert inside and ratio == pytest.approx(3.0, rel=1e-3)
    assert not in_A(f, 2.0)[0]


def test_projection(unit_loop, unit_basis):
    f = unit_loop.field(lambda th: 1 + np.cos(2 * th) + np.cos(6 * th))
    proj = project_W(f, 16.0, unit_basis)
    assert np.allclose(proj.values, 1 + np.cos(2 * unit_loop.angles), atol=1e-10)
    assert np.allclose(project_W(proj, 16.0, unit_basis).values, proj.values, atol=1e-10)
    zero = project_W(unit_loop.field(lambda th: np.cos(5 * th)), 16.0, unit_basis)
    assert np.abs(zero.values).max() < 1e-10


def test_cauchy_C_constant_trace():
    loop = circle_loop(2.0, 256, TAG_GAMMA)
    data = CauchyData.from_trace(loop.field(1.0), loop.field(0.0))
    assert cauchy_C(data) == pytest.approx(np.sqrt(loop.length), rel=1e-12)
    assert cauchy_C(data) == pytest.approx(np.sqrt(4 * np.pi), rel=1e-4)
    assert cauchy_C(CauchyData.from_trace(loop.field(0.0), loop.field(0.0))) == 0.0


def test_cauchy_C_radial_benchmark():
    loop = circle_loop(2.0, 256, TAG_GAMMA)
    trace = RADIAL_ALPHA * (1 + np.log(2))
    data = CauchyData.from_trace(loop.field(trace), loop.field(RADIAL_ALPHA / 2))
    assert cauchy_C(data) == pytest.approx(np.sqrt(loop.length) * (trace + RADIAL_ALPHA / 2), rel=1e-12)


def test_multiplier_probe(unit_loop, unit_basis):
    assert multiplication_bound_probe(unit_loop.field(1.0), 5, unit_basis, 8).ratio == pytest.approx(1.0, rel=1e-10)
    assert multiplication_bound_probe(unit_loop.field(0.0), 5, unit_basis, 8).ratio == 0.0
    q = unit_loop.field(np.cos)
    r32 = multiplication_bound_probe(q, 10, unit_basis, 32).ratio
    r64 = multiplication_bound_probe(q, 10, unit_basis, 64).ratio
    assert np.isfinite(r32) and abs(r64 / r32 - 1) <= 0.1


@settings(max_examples=30, deadline=None)
@given(lam=st.sampled_from([4.0, 16.0, 25.0]), seed=st.integers(0, 2 ** 31))
def test_band_limited_fields_lie_in_A(unit_basis, lam, seed):
    sub = unit_basis.restrict(lam)
    coef = np.random.default_rng(seed).standard_normal(sub.size)
    if not np.any(coef[1:]):
        return
    _, ratio = in_A(sub.synthesize(coef), np.sqrt(lam))
    assert ratio <= np.sqrt(lam) + 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), t=st.floats(0.0, 1.0))
def test_sobolev_norms_are_monotone_in_t(unit_loop, unit_basis, seed, t):
    f = unit_loop.field(np.random.default_rng(seed).standard_normal(unit_loop.n))
    assert sobolev_norm(f, 0.0, unit_basis) <= sobolev_norm(f, t, unit_basis) * (1 + 1e-12)
    assert sobolev_norm(f, 0.0, unit_basis) == pytest.approx(l2_norm(f), rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(amp=st.floats(-0.3, 0.3), k=st.integers(1, 5))
def test_star_curve_basis_is_orthonormal(amp, k):
    basis = lb_eigenbasis(StarCurve(1.0, ((k, amp, 0.0),)), n_nodes=96)
    assert basis.eigenvalues[0] == pytest.approx(0.0, abs=1e-10)
    assert np.all(np.diff(basis.eigenvalues) >= -1e-10)
    assert np.allclose(basis.gram(), np.eye(basis.size), atol=1e-9)
