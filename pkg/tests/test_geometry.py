import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robinlab.exceptions import GeometryError, MetricError
from robinlab.geometry import (TAG_GAMMA, TAG_S, AnnularDomain, MetricTensor, StarCurve, build_annular_mesh,
                               metric_eval, read_mesh, write_mesh)


def test_identity_metric_evaluation():
    g, g_inv, sqrt_det = metric_eval(MetricTensor.identity(), [0.3, -1.2])
    assert np.array_equal(g, np.eye(2))
    assert np.array_equal(g_inv, np.eye(2))
    assert sqrt_det == 1.0


def test_diagonal_metric_evaluation():
    g, g_inv, sqrt_det = metric_eval(MetricTensor.constant([[4.0, 0.0], [0.0, 1.0]]), [5.0, 2.0])
    assert np.allclose(g, np.diag([4.0, 1.0]))
    assert np.allclose(g_inv, np.diag([0.25, 1.0]))
    assert sqrt_det == pytest.approx(2.0)


def test_conformal_metric_sqrt_det():
    # det = 1.1^2 at x1 = pi/2, so sqrt det = 1.1
    _, _, sqrt_det = metric_eval(MetricTensor.conformal(0.1), [np.pi / 2, 0.0])
    assert sqrt_det == pytest.approx(1.1, rel=1e-14)


def test_metric_rejects_asymmetry_and_degeneracy():
    with pytest.raises(MetricError):
        MetricTensor.constant([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(MetricError):
        MetricTensor.constant([[1.0, 0.0], [0.0, -1.0]])
    bad = MetricTensor(lambda p: np.broadcast_to(0.5 * np.eye(2), (len(p), 2, 2)).copy(), theta=1.0)
    with pytest.raises(MetricError, match="elliptic"):
        bad.evaluate(np.zeros((1, 2)))


def test_mesh_counts():
    mesh = build_annular_mesh(AnnularDomain.circles(1.0, 2.0), 2, 8)
    assert mesh.n_vertices == 24
    assert mesh.n_triangles == 32
    assert len(mesh.edge_indices(TAG_S)) == 8
    assert len(mesh.edge_indices(TAG_GAMMA)) == 8
    assert np.all(mesh.signed_areas() > 0)


def test_refinement_halves_h(domain):
    h1 = build_annular_mesh(domain, 8, 64).h
    h2 = build_annular_mesh(domain, 16, 128).h
    assert h2 / h1 == pytest.approx(0.5, rel=0.1)


def test_degenerate_domain_rejected():
    with pytest.raises(GeometryError):
        AnnularDomain.circles(1.0, 1.0)
    with pytest.raises(GeometryError):
        AnnularDomain(StarCurve(1.0, ((2, 0.6, 0.0),)), StarCurve(1.5))


def test_inner_normal_points_into_hole(coarse_mesh):
    s_edges = coarse_mesh.edge_indices(TAG_S)
    mid = coarse_mesh.gauss_points[s_edges].mean(axis=1)
    k = s_edges[np.argmin(np.abs(np.arctan2(mid[:, 1], mid[:, 0])))]
    assert np.allclose(coarse_mesh.normals[k], [-1.0, 0.0], atol=0.1)


def test_outer_perimeter_converges(domain):
    errs = []
    for n in (64, 128):
        mesh = build_annular_mesh(domain, 4, n)
        errs.append(abs(mesh.edge_weights[mesh.edge_indices(TAG_GAMMA)].sum() - 4 * np.pi))
    assert errs[1] < 1e-2
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_euclidean_conormal_equals_normal(coarse_mesh):
    assert np.allclose(coarse_mesh.conormals, coarse_mesh.normals[:, None, :], atol=1e-15)


def test_volume_weights_sum_to_area(domain):
    errs = [abs(build_annular_mesh(domain, n // 8, n).volume_weights.sum() - 3 * np.pi) for n in (64, 128)]
    assert errs[1] < errs[0] / 3


def test_diagonal_metric_edge_measure(coarse_mesh, domain):
    metric = MetricTensor.constant([[4.0, 0.0], [0.0, 1.0]])
    mesh = build_annular_mesh(domain, 8, 64, metric)
    tangents = np.diff(mesh.vertices[mesh.boundary_edges], axis=1)[:, 0]
    speed = np.sqrt(4 * tangents[:, 0] ** 2 + tangents[:, 1] ** 2)
    assert np.allclose(mesh.edge_weights.sum(axis=1), speed)
    assert np.allclose(mesh.volume_weights, 2 * coarse_mesh.volume_weights)


def test_mesh_round_trip(tmp_path, coarse_mesh):
    path = tmp_path / "mesh.txt"
    write_mesh(coarse_mesh, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, coarse_mesh.vertices)
    assert np.array_equal(back.triangles, coarse_mesh.triangles)
    assert np.array_equal(back.loop_vertices(TAG_S), coarse_mesh.loop_vertices(TAG_S))


def test_read_mesh_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("v 0 0\nq 1 2 3\n")
    with pytest.raises(GeometryError, match="malformed"):
        read_mesh(path)


@settings(max_examples=25, deadline=None)
@given(amp=st.floats(-0.2, 0.2), k=st.integers(1, 4), n_ang=st.integers(16, 48))
def test_star_meshes_are_positively_oriented(amp, k, n_ang):
    domain = AnnularDomain(StarCurve(1.0, ((k, amp, 0.0),)), StarCurve(2.0, ((k, 0.0, amp),)))
    mesh = build_annular_mesh(domain, 3, 4 * n_ang)
    assert np.all(mesh.signed_areas() > 0)
    assert np.all(mesh.edge_weights > 0)
    # outward normals on Gamma have positive radial component
    g = mesh.edge_indices(TAG_GAMMA)
    mid = mesh.gauss_points[g].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", mesh.normals[g], mid) > 0)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.5, 5), c=st.floats(0.5, 5), b=st.floats(-0.4, 0.4))
def test_metric_inverse_property(a, c, b):
    g, g_inv, sqrt_det = metric_eval(MetricTensor.constant([[a, b], [b, c]]), [0.0, 0.0])
    assert np.allclose(g @ g_inv, np.eye(2), atol=1e-12)
    assert sqrt_det == pytest.approx(np.sqrt(a * c - b * b))
