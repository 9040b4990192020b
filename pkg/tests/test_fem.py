import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from robinlab import fem
from robinlab.exceptions import AdmissibilityError, CoercivityError
from robinlab.fem import (RobinProblem, assemble, energy_form, extract_cauchy, forward_solve, gamma_gradient_split,
                          l2_error, load_form, robin_matrix, solve)
from robinlab.geometry import TAG_GAMMA, TAG_S, MetricTensor, build_annular_mesh

from conftest import RADIAL_ALPHA

RADIAL = RobinProblem(q_S=1.0, q_gamma=1.0, flux_gamma=1.0)


def brute_force_stiffness(mesh, g_inv, sqrt_det):
    """Loop-based assembly for a constant metric, used as an independent oracle."""
    n = mesh.n_vertices
    K = np.zeros((n, n))
    for tri in mesh.triangles:
        p = mesh.vertices[tri]
        area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
        grads = []
        for i in range(3):
            a, b = p[(i + 1) % 3], p[(i + 2) % 3]
            grads.append(np.array([a[1] - b[1], b[0] - a[0]]) / (2 * area))
        for i in range(3):
            for j in range(3):
                K[tri[i], tri[j]] += sqrt_det * area * grads[i] @ g_inv @ grads[j]
    return K


def test_single_triangle_element_matrix():
    grads = np.array([[[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]])
    # reference triangle area 1/2, sqrt det diag(4, 1) = 2, so the volume weight is 1
    local = fem.element_stiffness(grads, np.diag([0.25, 1.0])[None], np.array([1.0]))[0]
    expected = np.array([[1.25, -0.25, -1.0], [-0.25, 0.25, 0.0], [-1.0, 0.0, 1.0]])
    assert np.allclose(local, expected, atol=1e-15)
    euclid = fem.element_stiffness(grads, np.eye(2)[None], np.array([0.5]))[0]
    assert np.allclose(euclid, [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])


@pytest.mark.parametrize("matrix", [np.eye(2), np.diag([4.0, 1.0])])
def test_stiffness_matches_brute_force(domain, matrix):
    mesh = build_annular_mesh(domain, 3, 16, MetricTensor.constant(matrix))
    system = assemble(RADIAL, mesh)
    oracle = brute_force_stiffness(mesh, np.linalg.inv(matrix), np.sqrt(np.linalg.det(matrix)))
    assert np.allclose(system.stiffness.toarray(), oracle, atol=1e-12)


def test_diagonal_metric_robin_entries_scale_with_edge_measure(domain):
    plain = build_annular_mesh(domain, 3, 16)
    skew = build_annular_mesh(domain, 3, 16, MetricTensor.constant([[4.0, 0.0], [0.0, 1.0]]))
    r_plain = assemble(RADIAL, plain).robin
    r_skew = assemble(RADIAL, skew).robin
    a, b = plain.boundary_edges[plain.edge_indices(TAG_GAMMA)[3]]
    t = plain.vertices[b] - plain.vertices[a]
    speed = np.sqrt(4 * t[0] ** 2 + t[1] ** 2) / np.linalg.norm(t)
    assert r_skew[a, b] / r_plain[a, b] == pytest.approx(speed, rel=1e-12)


def test_zero_data_gives_zero_rhs(coarse_mesh):
    system = assemble(RobinProblem(q_S=1.0, q_gamma=1.0), coarse_mesh)
    assert not np.any(system.rhs)
    u, info = solve(system, return_info=True)
    assert not np.any(u)
    assert info.iterations == 0


def test_stiffness_row_sums_vanish(coarse_mesh):
    system = assemble(RADIAL, coarse_mesh)
    assert np.abs(system.stiffness.sum(axis=1)).max() < 1e-12
    assert np.abs(system.matrix - system.matrix.T).max() < 1e-14


def test_coercivity_and_admissibility_guards(coarse_mesh):
    with pytest.raises(CoercivityError):
        RobinProblem(q_S=0.0, q_gamma=0.0)
    with pytest.raises(CoercivityError):
        RobinProblem(q_S=-0.1, q_gamma=1.0)
    with pytest.raises(AdmissibilityError):
        RobinProblem(q_S=2.0, q_gamma=1.0, kappa=1.0)
    with pytest.raises(CoercivityError):
        assemble(RobinProblem(q_S=lambda th: np.cos(th), q_gamma=1.0), coarse_mesh)


@pytest.mark.parametrize("method", ["cholesky", "cg", "splu"])
def test_radial_benchmark(domain, method):
    errs = []
    for n_r, n_a in ((8, 64), (16, 128)):
        mesh = build_annular_mesh(domain, n_r, n_a)
        sol = forward_solve(RADIAL, mesh, method=method)
        r = np.hypot(*sol.mesh.vertices.T)
        errs.append(np.abs(sol.nodal_values - RADIAL_ALPHA * (1 + np.log(r))).max())
    assert errs[1] < 2e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)


def test_solver_methods_agree(coarse_mesh):
    system = assemble(RADIAL, coarse_mesh)
    ref = solve(system, method="cholesky", tol=1e-12)
    for method in ("cg", "splu"):
        assert np.allclose(solve(system, method=method, tol=1e-12), ref, atol=1e-9)
    with pytest.raises(ValueError):
        solve(system, tol=1e-3)


def test_rhs_perturbation_bound(coarse_mesh):
    system = assemble(RADIAL, coarse_mesh)
    lam_min = scipy.linalg.eigvalsh(system.matrix.toarray(), subset_by_index=[0, 0])[0]
    u = solve(system, tol=1e-12)
    eps = 1e-3
    rhs = system.rhs.copy()
    rhs[7] += eps
    du = solve(fem.LinearSystem(system.matrix, rhs, system.stiffness, system.robin, None, system.mesh),
               tol=1e-12) - u
    assert np.linalg.norm(du) <= eps / lam_min * (1 + 1e-8)


def test_energy_identity(medium_mesh):
    sol = forward_solve(RADIAL, medium_mesh, tol=1e-12)
    h = energy_form(sol.nodal_values, RADIAL, sol.mesh)
    assert abs(h - load_form(sol.nodal_values, RADIAL, sol.mesh)) <= 1e-10 * abs(h)


def test_radial_cauchy_data(medium_mesh):
    data = extract_cauchy(forward_solve(RADIAL, medium_mesh))
    trace = RADIAL_ALPHA * (1 + np.log(2.0))
    assert np.allclose(data.trace.values, trace, rtol=1e-3)
    assert np.allclose(data.conormal.values, 1 - trace, rtol=2e-3)
    assert np.abs(data.tangential.values).max() < 1e-10


def test_zero_flux_gives_zero_cauchy(coarse_mesh):
    data = extract_cauchy(forward_solve(RobinProblem(q_S=1.0, q_gamma=1.0), coarse_mesh))
    assert not np.any(data.vector())


def test_mode_decoupling(medium_mesh):
    prob = RobinProblem(q_S=1.0, q_gamma=1.0, flux_S=lambda th: np.cos(2 * th))
    trace = extract_cauchy(forward_solve(prob, medium_mesh, tol=1e-12)).trace.values
    coef = np.abs(np.fft.rfft(trace)) / len(trace)
    assert coef[2] > 1e-2
    others = np.delete(coef, 2)
    assert others.max() < 1e-9 * coef[2]


def test_convergence_against_spectral(domain, radial_exact):
    errs = []
    for n_r, n_a in ((8, 64), (16, 128)):
        sol = forward_solve(RADIAL, build_annular_mesh(domain, n_r, n_a))
        errs.append(l2_error(sol.nodal_values, sol.mesh, radial_exact))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.3)


def test_bridge_identity(coarse_mesh):
    # (K + R_q1) v = R_(q2 - q1) u2 with v = u1 - u2, for two Robin coefficients on S
    q1 = lambda th: 0.5 + 0.3 * np.cos(2 * th)
    q2 = lambda th: 0.7 - 0.1 * np.sin(th)
    p1 = RobinProblem(q_S=q1, q_gamma=1.0, flux_gamma=1.0)
    p2 = p1.with_(q_S=q2)
    u1 = forward_solve(p1, coarse_mesh, tol=1e-13).nodal_values
    u2 = forward_solve(p2, coarse_mesh, tol=1e-13).nodal_values
    s1 = assemble(p1, coarse_mesh)
    lhs = s1.stiffness @ (u1 - u2) + robin_matrix(q1, coarse_mesh, TAG_S) @ (u1 - u2) \
        + robin_matrix(1.0, coarse_mesh, TAG_GAMMA) @ (u1 - u2)
    rhs = robin_matrix(lambda th: q2(th) - q1(th), coarse_mesh, TAG_S) @ u2
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_gamma_pythagoras(medium_mesh):
    sol = forward_solve(RADIAL, medium_mesh)
    full, normal = gamma_gradient_split(sol.nodal_values, sol.mesh)
    # radial solution: no tangential gradient, so both integrals agree up to discretization error
    assert full - normal == pytest.approx(0.0, abs=1e-3 * full)
    assert normal == pytest.approx(4 * np.pi * (RADIAL_ALPHA / 2) ** 2, rel=0.05)


@settings(max_examples=15, deadline=None)
@given(qs=st.floats(0.0, 3.0), qg=st.floats(0.05, 3.0), p=st.floats(0.0, 2.0),
       k=st.integers(0, 4), amp=st.floats(-2, 2))
def test_energy_identity_property(coarse_mesh, qs, qg, p, k, amp):
    prob = RobinProblem(q_S=qs, q_gamma=qg, absorption=p, source=0.3,
                        flux_S=lambda th: amp * np.cos(k * th), flux_gamma=1.0)
    sol = forward_solve(prob, coarse_mesh, tol=1e-12)
    h = energy_form(sol.nodal_values, prob, sol.mesh)
    assert h > 0
    assert abs(h - load_form(sol.nodal_values, prob, sol.mesh)) <= 1e-9 * h


@settings(max_examples=10, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_solution_is_linear_in_data(coarse_mesh, a, b):
    f1 = RobinProblem(q_S=1.0, q_gamma=0.5, flux_S=lambda th: np.sin(th))
    f2 = f1.with_(flux_S=0.0, flux_gamma=lambda th: np.cos(3 * th))
    combo = f1.with_(flux_S=lambda th: a * np.sin(th), flux_gamma=lambda th: b * np.cos(3 * th))
    u1, u2, u = (forward_solve(p, coarse_mesh, tol=1e-12).nodal_values for p in (f1, f2, combo))
    assert np.allclose(u, a * u1 + b * u2, atol=1e-10 * (1 + abs(a) + abs(b)))
