import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robinlab.exceptions import PreconditionError, UniquenessViolation
from robinlab.fem import RobinProblem
from robinlab.geometry import AnnularDomain, build_annular_mesh
from robinlab.inverse import assemble_forward_map
from robinlab.spectral import FourierSeries
from robinlab.stability import (PhiParams, SigmaRow, best_interpolation_value, coefficient_family,
                                energy_estimate_audit, energy_ratio, energy_refinement_audit, fit_decay_rate,
                                fit_log_modulus, interpolation_check, lipschitz_check, max_principle_audit, phi,
                                random_flux_batch, run_stability, sigma_min_sweep, sup_bound_audit,
                                verify_log_modulus, write_report)

from conftest import RADIAL_ALPHA

FAMILY = [FourierSeries.mode(n) for n in range(2, 13)]
BASE = RobinProblem(q_S=1.0, q_gamma=1.0, flux_gamma=1.0, kappa=1.0)


@pytest.fixture(scope="module")
def modulus(domain):
    return verify_log_modulus(FAMILY, 0.125, domain)


def test_phi_branches():
    assert phi(PhiParams(0.2, 1.0), 1.0) == 1.0
    assert phi(PhiParams(0.125, 1.0), math.e ** 2) == pytest.approx(2 ** (-0.125), rel=1e-14)
    vals = phi(PhiParams(0.125, 1.0), np.geomspace(10, 1e12, 30))
    assert np.all(np.diff(vals) < 0) and vals[-1] < vals[0]
    with pytest.raises(ValueError):
        PhiParams(0.3, 1.0)
    assert not PhiParams(0.5, 1.0, strict=False).in_range


def test_best_interpolation_value_is_a_minimum():
    value, s_star = best_interpolation_value(0.5, 0.125, 1e-6, 1.0)
    s = np.linspace(1.0, 60.0, 200001)
    brute = np.min(np.exp(0.5 * s) * 1e-6 + s ** -0.125)
    assert value == pytest.approx(brute, rel=1e-8)
    assert s_star > 1


def test_sigma_decreases_with_order(domain):
    table = sigma_min_sweep(range(1, 11), domain)
    sig = np.array([r.sigma_l2 for r in table])
    assert np.all(np.diff(sig) < 0)


def test_sigma_decreases_with_outer_radius(domain):
    near = sigma_min_sweep([4], domain)[0].sigma_l2
    far = sigma_min_sweep([4], AnnularDomain.circles(1.0, 3.0))[0].sigma_l2
    assert far < near


def test_sigma_of_constant_flux(domain):
    # unit L2 constant flux 1/sqrt(2 pi) on S with zero flux on Gamma, q = 1
    a = 1 / math.sqrt(2 * math.pi)
    beta = -a / (1.5 + math.log(2))
    alpha = a + beta
    trace, conormal = alpha + beta * math.log(2), beta / 2
    row = sigma_min_sweep([0], domain)[0]
    loop = assemble_forward_map(0.0, domain).loop
    assert row.sigma_l2 == pytest.approx(math.sqrt(loop.length) * math.hypot(trace, conormal), rel=1e-12)


def test_decay_slope_circles(domain):
    slope = fit_decay_rate(sigma_min_sweep(range(0, 13), domain), start=6)
    assert slope == pytest.approx(math.log(2), rel=0.15)


def test_decay_slope_radii_one_e():
    slope = fit_decay_rate(sigma_min_sweep(range(0, 13), AnnularDomain.circles(1.0, math.e)), start=6)
    assert slope == pytest.approx(1.0, rel=0.15)


def test_decay_slope_constant_table():
    table = [SigmaRow(n, n * n, 0.5, 1.0, 0.5, 1.0) for n in range(8)]
    assert fit_decay_rate(table) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_decay_rate(table[:3])


def test_log_modulus_family_passes(modulus):
    assert modulus.verdict and modulus.eta_in_range
    assert np.isfinite(modulus.constant) and modulus.constant > 0
    assert modulus.relative_shift <= 0.2


def test_single_member_trivially_passes(domain):
    res = verify_log_modulus(FAMILY[:1], 0.125, domain)
    assert res.verdict


def test_out_of_range_eta_is_flagged(domain):
    res = verify_log_modulus(FAMILY, 0.5, domain)
    assert not res.eta_in_range
    assert isinstance(res.verdict, bool)


def test_interpolation_table(modulus):
    s = np.geomspace(1, 1e3, 60)
    assert interpolation_check(modulus.fit.triples, s, 0.125, modulus.constant, modulus.c).all()
    doubled = interpolation_check(modulus.fit.triples, s, 0.125, 2 * modulus.fit.constant_interp, modulus.c)
    assert not doubled[-1].all()
    assert interpolation_check([[0.0, 0.0, 0.0]], s, 0.125, 5.0, 1.0).all()


def test_vanishing_data_is_a_uniqueness_violation():
    with pytest.raises(UniquenessViolation):
        fit_log_modulus([[1.0, 1.0, 0.0]], 0.125)


def test_lipschitz_matches_sigma(domain):
    res = lipschitz_check(25.0, 5.0, 40, domain)
    assert res.constant_stacked == pytest.approx(res.sigma_min, rel=0.01)
    assert res.constant >= 0.99 * res.sigma_min and res.verdict
    smaller = lipschitz_check(49.0, 7.0, 40, domain)
    assert smaller.constant_stacked < res.constant_stacked


def test_single_mode_ratio_above_sigma(domain):
    fmap = assemble_forward_map(25.0, domain)
    sigma = fmap.sigma_min("H1")
    for m in range(fmap.size):
        coef = np.eye(fmap.size)[m]
        h1 = math.sqrt(1 + fmap.basis.eigenvalues[m])
        assert np.linalg.norm(fmap.data_vector(coef)) / h1 >= sigma * (1 - 1e-12)


def test_max_principle_radial(medium_mesh):
    rec = max_principle_audit(BASE, medium_mesh)
    assert rec.min_u_q == pytest.approx(rec.min_u_kappa)
    assert rec.min_u_kappa == pytest.approx(RADIAL_ALPHA, rel=1e-3)


def test_max_principle_family(medium_mesh):
    for q_s, q_g in coefficient_family():
        rec = max_principle_audit(BASE.with_(q_S=q_s, q_gamma=q_g), medium_mesh)
        assert rec.verdict and rec.min_v >= -1e-8


def test_negative_flux_precondition(coarse_mesh):
    with pytest.raises(PreconditionError):
        max_principle_audit(BASE.with_(flux_gamma=lambda th: np.sin(th)), coarse_mesh)


def test_energy_audit(domain, coarse_mesh):
    batch = random_flux_batch(20, seed=1)
    coarse, fine, ok = energy_refinement_audit(batch, coarse_mesh, build_annular_mesh(domain, 16, 128))
    assert np.isfinite(coarse) and ok
    zero = RobinProblem(q_S=1.0, q_gamma=1.0)
    assert energy_ratio(zero, coarse_mesh) is None
    assert energy_estimate_audit(batch + [zero], coarse_mesh) == pytest.approx(coarse)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10 ** 6), scale=st.floats(0.1, 10.0))
def test_energy_ratio_scale_invariant(coarse_mesh, seed, scale):
    prob = random_flux_batch(1, order=3, seed=seed)[0]
    scaled = prob.with_(flux_S=prob.flux_S.scale(scale), flux_gamma=prob.flux_gamma.scale(scale))
    assert energy_ratio(scaled, coarse_mesh) == pytest.approx(energy_ratio(prob, coarse_mesh), rel=1e-9)


def test_sup_bound(medium_mesh):
    rec = sup_bound_audit(BASE, medium_mesh, coefficient_family())
    assert rec.verdict
    assert min(rec.sups) == rec.sups[1]  # the q = kappa member
    doubled = sup_bound_audit(BASE.with_(flux_gamma=2.0), medium_mesh, coefficient_family())
    assert np.allclose(doubled.sups, 2 * np.array(rec.sups), rtol=1e-9)


def test_report_files(tmp_path, domain, coarse_mesh):
    report = run_stability(domain, range(0, 9), family_orders=range(2, 9), audit_mesh=coarse_mesh,
                           lipschitz_samples=10)
    write_report(report, tmp_path)
    header = (tmp_path / "sweep.csv").read_text().splitlines()[0]
    assert header == "N,lambda,sigma_min_H1,cond_H1,sigma_min_L2,cond_L2"
    fit = dict(line.split(",") for line in (tmp_path / "fit.csv").read_text().splitlines()[1:])
    assert float(fit["decay_slope"]) > 0
    audits = (tmp_path / "audits.csv").read_text()
    assert "verdict_max_principle,pass" in audits
    for name in ("sweep.svg", "modulus.svg"):
        root = ET.parse(tmp_path / name).getroot()
        assert root.tag.endswith("svg")


def test_single_point_grid_notice(tmp_path, domain):
    report = run_stability(domain, [3], family_orders=[], lipschitz_samples=5)
    write_report(report, tmp_path)
    assert "notice,decay fit skipped" in (tmp_path / "fit.csv").read_text()
