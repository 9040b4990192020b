import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from robinlab.boundary import CauchyData, l2_norm
from robinlab.exceptions import GeometryError, IllConditionedError, PreconditionError
from robinlab.fem import RobinProblem
from robinlab.geometry import TAG_GAMMA, build_annular_mesh
from robinlab.inverse import (CorrosionInverter, FluxInverter, add_noise, assemble_forward_map, invert_flux,
                              invert_robin, synthesize_data)
from robinlab.spectral import FourierSeries, circle_loop, spectral_forward

FLUX = FourierSeries(0.0, [0.0, 1.0], [-0.5])
CORROSION = RobinProblem(q_S=1.0, q_gamma=1.0, flux_gamma=1.0)


def spectral_data(flux, fmap):
    return spectral_forward(flux, FourierSeries(boundary=TAG_GAMMA), 1, 2, 1, 1).sample(fmap.loop)


@pytest.fixture(scope="module")
def fmap25(domain):
    return assemble_forward_map(25.0, domain)


@pytest.fixture(scope="module")
def corrosion_meshes(domain):
    return build_annular_mesh(domain, 12, 96), build_annular_mesh(domain, 24, 192)


def test_dimension_count(domain, coarse_mesh):
    assert assemble_forward_map(9.0, domain).size == 7
    assert assemble_forward_map(9.0, backend="fem", mesh=coarse_mesh).size == 7


def test_fem_columns_match_spectral(domain):
    fem_map = assemble_forward_map(9.0, backend="fem", mesh=build_annular_mesh(domain, 72, 896))
    spec_map = assemble_forward_map(9.0, domain, loop=fem_map.loop)
    norms = np.linalg.norm(spec_map.columns, axis=0)
    assert np.all(norms > 0)
    assert np.max(np.linalg.norm(fem_map.columns - spec_map.columns, axis=0) / norms) <= 1e-3


def test_spectral_backend_guards(domain):
    with pytest.raises(GeometryError):
        assemble_forward_map(4.0, domain, q_S=lambda th: 1 + 0 * th)


def test_exact_recovery(fmap25):
    res = invert_flux(spectral_data(FLUX, fmap25), fmap25)
    truth = fmap25.basis.loop.field(FLUX)
    assert l2_norm(res.estimate - truth) <= 1e-6 * l2_norm(truth)
    assert res.history_rows()[0][0] == 1


def test_zero_data_zero_estimate(fmap25):
    res = invert_flux(CauchyData.zeros(fmap25.loop), fmap25)
    assert not np.any(res.estimate.values)


def test_noisy_recovery_bound(fmap25):
    res = invert_flux(add_noise(spectral_data(FLUX, fmap25), 1e-3, seed=3), fmap25)
    truth = fmap25.basis.loop.field(FLUX)
    assert l2_norm(res.estimate - truth) / l2_norm(truth) <= 10 * res.cond * 1e-3


def test_ill_conditioned_map_refused(fmap25):
    cols = fmap25.columns.copy()
    cols[:, -1] = 0.0
    singular = dataclasses.replace(fmap25, columns=cols)
    data = spectral_data(FLUX, fmap25)
    with pytest.raises(IllConditionedError):
        invert_flux(data, singular)
    assert np.isfinite(invert_flux(data, singular, alpha=1e-6).residual)


def test_data_on_other_loop_refused(fmap25):
    other = circle_loop(2.0, 128)
    with pytest.raises(GeometryError):
        invert_flux(CauchyData.from_trace(other.field(1.0), other.field(0.0)), fmap25)


def test_noise_generation(fmap25):
    data = spectral_data(FLUX, fmap25)
    assert add_noise(data, 0.0) is data
    noisy = add_noise(data, 1e-2, seed=7)
    ratio = np.linalg.norm(np.concatenate([noisy.trace.values - data.trace.values,
                                           noisy.conormal.values - data.conormal.values])) \
        / np.linalg.norm(np.concatenate([data.trace.values, data.conormal.values]))
    assert 0.9e-2 <= ratio <= 1.1e-2
    assert np.array_equal(add_noise(data, 1e-2, seed=7).trace.values, noisy.trace.values)
    assert not np.array_equal(add_noise(data, 1e-2, seed=8).trace.values, noisy.trace.values)


def test_corrosion_recovery(corrosion_meshes):
    coarse, fine = corrosion_meshes
    truth = FourierSeries(0.5, [0.0, 0.3])
    res = invert_robin(synthesize_data(CORROSION, fine, q_S=truth), CORROSION, coarse, cutoff=4.0)
    ref = res.estimate.loop.field(truth)
    assert l2_norm(res.estimate - ref) <= 0.05 * l2_norm(ref)
    assert res.iterations <= 20 and res.converged
    rows = res.history_rows()
    assert [r[0] for r in rows] == list(range(1, len(rows) + 1))
    assert all(r[3] > 0 for r in rows)


def test_fixed_point_start(corrosion_meshes):
    coarse, _ = corrosion_meshes
    q0 = 0.5
    res = invert_robin(synthesize_data(CORROSION, coarse, q_S=q0), CORROSION, coarse, q0=q0)
    assert res.iterations <= 1
    assert np.allclose(res.estimate.values, q0, atol=1e-8)


def test_clamping_reports_boundary_contact(corrosion_meshes):
    coarse, fine = corrosion_meshes
    data = synthesize_data(CORROSION.with_(kappa=None), fine, q_S=1.5)
    res = invert_robin(data, CORROSION, coarse, kappa=1.0, max_iter=5)
    assert res.boundary_contact
    assert res.estimate.values.max() <= 1.0


def test_negative_flux_is_a_precondition_error(corrosion_meshes):
    coarse, fine = corrosion_meshes
    bad = CORROSION.with_(flux_gamma=lambda th: np.cos(th))
    with pytest.raises(PreconditionError):
        invert_robin(synthesize_data(bad, fine), bad, coarse)


def test_flux_estimator(fmap25):
    est = FluxInverter(alpha=0.0)
    with pytest.raises(NotFittedError):
        est.predict(spectral_data(FLUX, fmap25))
    est.fit(fmap25)
    assert est.sigma_min_ == pytest.approx(fmap25.sigma_min())
    coef = est.transform(spectral_data(FLUX, fmap25))
    assert coef.shape == (fmap25.size,)
    assert clone(est).get_params() == {"alpha": 0.0}


def test_corrosion_estimator(corrosion_meshes):
    coarse, fine = corrosion_meshes
    est = CorrosionInverter(problem=CORROSION, mesh=coarse)
    with pytest.raises(NotFittedError):
        est.predict()
    est.fit(synthesize_data(CORROSION, fine, q_S=0.6))
    assert est.n_iter_ <= 20
    assert np.allclose(est.predict().values, 0.6, atol=0.03)


@settings(max_examples=20, deadline=None)
@given(coef=st.lists(st.floats(-2, 2), min_size=11, max_size=11))
def test_noiseless_inversion_is_exact_on_the_band(fmap25, coef):
    coef = np.array(coef)
    if not np.any(coef):
        return
    data = CauchyData.from_trace(*(fmap25.loop.field(part) for part in
                                   np.split((fmap25.columns @ coef)[:2 * fmap25.loop.n], 2)))
    # undo the measure weights carried by the stacked columns
    w = np.sqrt(fmap25.loop.weights)
    data = CauchyData.from_trace(fmap25.loop.field(data.trace.values / w), fmap25.loop.field(data.conormal.values / w))
    res = invert_flux(data, fmap25)
    assert np.allclose(res.coefficients, coef, atol=1e-8 * (1 + np.abs(coef).max()))
