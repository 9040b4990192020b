"""P1 finite elements for the Robin problem on an annular domain.

Solves ``-Delta_g u + p u = f`` in ``D`` with ``d_{nu_g} u + q u = a`` on
``S`` and ``Gamma`` through the symmetric form

    h(u, v) = int_D (<grad_g u, grad_g v> + p u v) dV_g + int_{dD} q u v dS_g.

Metric coefficients are sampled at triangle barycenters; boundary integrals
use two Gauss points per edge.
"""

import numbers
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import check_scalar
from .boundary import BoundaryField, BoundaryLoop, CauchyData
from .exceptions import AdmissibilityError, CoercivityError, ConvergenceError, GeometryError
from .geometry import GAUSS_NODES, TAG_GAMMA, TAG_S, MetricTensor, boundary_normals

BoundarySpec = Union[float, Callable, BoundaryField, np.ndarray]

DENSE_LIMIT = 2000

# degree-4 Dunavant rule on the reference triangle: barycentric points and weights
_DUNAVANT_BARY = np.array([
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070],
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
])
_DUNAVANT_W = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)


@dataclass(frozen=True, eq=False)
class RobinProblem:
    """Data of the Robin problem.

    Boundary entries accept a number, a callable of the polar angle, a
    :class:`BoundaryField` or a nodal array on the corresponding loop.
    ``source`` is a number or a callable ``f(x, y)``.
    """

    source: Union[float, Callable] = 0.0
    q_S: BoundarySpec = 0.0
    q_gamma: BoundarySpec = 0.0
    flux_S: BoundarySpec = 0.0
    flux_gamma: BoundarySpec = 0.0
    absorption: float = 0.0
    kappa: Optional[float] = None

    def __post_init__(self):
        check_scalar(self.absorption, "absorption", min_val=0.0)
        if self.kappa is not None:
            check_scalar(self.kappa, "kappa", min_val=0.0, include_min=False)
        for name in ("q_S", "q_gamma"):
            val = getattr(self, name)
            if isinstance(val, numbers.Real):
                if val < 0:
                    raise CoercivityError(f"{name} must be >= 0, got {val}")
                if self.kappa is not None and val > self.kappa:
                    raise AdmissibilityError(f"{name}={val} exceeds kappa={self.kappa}")
        if (isinstance(self.q_S, numbers.Real) and isinstance(self.q_gamma, numbers.Real)
                and self.q_S == 0 and self.q_gamma == 0 and self.absorption == 0):
            raise CoercivityError("coercivity guard violated: q vanishes on both boundaries and p = 0")

    def spec(self, kind, tag):
        return getattr(self, f"{kind}_{'S' if tag == TAG_S else 'gamma'}")

    def with_(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Assembled system ``A u = b`` with its parts kept for audits."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    stiffness: sp.csr_matrix
    robin: sp.csr_matrix
    mass: Optional[sp.csr_matrix]
    mesh: object

    @property
    def n(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SolveInfo:
    method: str
    iterations: int
    residual: float


@dataclass(frozen=True, eq=False)
class ForwardSolution:
    """Nodal solution plus its boundary traces and energy ``h(u, u)``."""

    nodal_values: np.ndarray
    mesh: object
    problem: RobinProblem
    trace_S: BoundaryField
    trace_gamma: BoundaryField
    conormal_gamma: BoundaryField
    energy: float
    info: Optional[SolveInfo] = None


# --------------------------------------------------------------------------
# data resolution
# --------------------------------------------------------------------------

def _ensure_metric(mesh, metric):
    if metric is None:
        if mesh.has_metric:
            return mesh
        metric = MetricTensor.identity()
    if mesh.metric is metric:
        return mesh
    return boundary_normals(mesh, metric)


def _loop_position(mesh, tag):
    key = ("loop_pos", tag)
    if key not in mesh._cache:
        ids = mesh.loop_vertices(tag)
        pos = np.full(mesh.n_vertices, -1, dtype=np.int64)
        pos[ids] = np.arange(len(ids))
        mesh._cache[key] = pos
    return mesh._cache[key]


def _polar_angle(points, center):
    d = points - np.asarray(center)
    return np.mod(np.arctan2(d[..., 1], d[..., 0]), 2 * np.pi)


def nodal_values(spec, mesh, tag):
    """Values of a boundary spec at the loop nodes (in loop order)."""
    ids = mesh.loop_vertices(tag)
    if isinstance(spec, BoundaryField):
        if spec.loop.tag != tag or spec.loop.n != len(ids):
            raise GeometryError(f"boundary field on {spec.loop.tag}/{spec.loop.n} does not match "
                                f"mesh loop {tag}/{len(ids)}")
        return spec.values
    if isinstance(spec, np.ndarray) and spec.ndim == 1 and len(spec) == len(ids):
        return spec.astype(float)
    if callable(spec):
        return np.asarray(spec(_polar_angle(mesh.vertices[ids], mesh.center)), dtype=float) \
            * np.ones(len(ids))
    return np.full(len(ids), float(spec))


def gauss_values(spec, mesh, tag):
    """Values of a boundary spec at the two Gauss points of every ``tag`` edge."""
    idx = mesh.edge_indices(tag)
    if callable(spec) and not isinstance(spec, (BoundaryField, np.ndarray)):
        gp = mesh.gauss_points[idx]
        return np.asarray(spec(_polar_angle(gp, mesh.center)), dtype=float) * np.ones(gp.shape[:2])
    if isinstance(spec, (BoundaryField, np.ndarray)):
        nodal = nodal_values(spec, mesh, tag)
        pos = _loop_position(mesh, tag)
        e = mesh.boundary_edges[idx]
        v0, v1 = nodal[pos[e[:, 0]]], nodal[pos[e[:, 1]]]
        return v0[:, None] * (1 - GAUSS_NODES)[None, :] + v1[:, None] * GAUSS_NODES[None, :]
    return np.full((len(idx), 2), float(spec))


def _source_values(source, points):
    if callable(source):
        return np.asarray(source(points[:, 0], points[:, 1]), dtype=float) * np.ones(len(points))
    return np.full(len(points), float(source))


def _check_coefficients(problem, mesh):
    positive = problem.absorption > 0
    for tag in (TAG_S, TAG_GAMMA):
        spec = problem.spec("q", tag)
        vals = np.concatenate([nodal_values(spec, mesh, tag), gauss_values(spec, mesh, tag).ravel()])
        name = "q_S" if tag == TAG_S else "q_gamma"
        if np.any(vals < 0):
            raise CoercivityError(f"coercivity guard violated: {name} takes the negative value {vals.min():.6g}")
        if problem.kappa is not None and np.any(vals > problem.kappa * (1 + 1e-12)):
            raise AdmissibilityError(f"{name} exceeds kappa={problem.kappa}: max {vals.max():.6g}")
        positive = positive or np.any(vals > 0)
    if not positive:
        raise CoercivityError("coercivity guard violated: q vanishes on dD and p = 0")


# --------------------------------------------------------------------------
# element matrices
# --------------------------------------------------------------------------

_REF_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def shape_gradients(mesh):
    """Gradients of the three hat functions on every triangle, shape (T, 3, 2)."""
    key = "grads"
    if key not in mesh._cache:
        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        mesh._cache[key] = np.einsum("ij,tjk->tik", _REF_GRADS, np.linalg.inv(jac))
    return mesh._cache[key]


def triangle_metric(mesh):
    key = ("tri_metric", id(mesh.metric))
    if key not in mesh._cache:
        bary = mesh.vertices[mesh.triangles].mean(axis=1)
        mesh._cache[key] = mesh.metric.evaluate(bary)[1]
    return mesh._cache[key]


def element_stiffness(grads, g_inv, vol):
    """``vol * grad_i^T g^{-1} grad_j`` per triangle."""
    return vol[:, None, None] * np.einsum("tia,tab,tjb->tij", grads, g_inv, grads)


def element_mass(vol):
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return vol[:, None, None] * local[None]


def edge_mass(weights, coef):
    """``sum_g w_g c_g N_a N_b`` for the two edge shape functions."""
    shp = np.stack([1 - GAUSS_NODES, GAUSS_NODES], axis=1)  # (gauss, local)
    return np.einsum("eg,ga,gb->eab", weights * coef, shp, shp)


def _scatter(local, conn, n):
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).ravel()
    cols = np.tile(conn, (1, k)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def robin_matrix(spec, mesh, tag):
    idx = mesh.edge_indices(tag)
    local = edge_mass(mesh.edge_weights[idx], gauss_values(spec, mesh, tag))
    return _scatter(local, mesh.boundary_edges[idx], mesh.n_vertices)


def boundary_load(spec, mesh, tag):
    idx = mesh.edge_indices(tag)
    vals = gauss_values(spec, mesh, tag) * mesh.edge_weights[idx]
    shp = np.stack([1 - GAUSS_NODES, GAUSS_NODES], axis=1)
    local = vals @ shp
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.boundary_edges[idx].ravel(), local.ravel())
    return out


def boundary_mass_columns(mesh, tag, nodal_columns):
    """Load vectors for many nodal boundary fluxes at once (columns in loop order)."""
    idx = mesh.edge_indices(tag)
    pos = _loop_position(mesh, tag)
    e = mesh.boundary_edges[idx]
    local = edge_mass(mesh.edge_weights[idx], np.ones((len(idx), 2)))  # (E, 2, 2)
    vals = nodal_columns[pos[e]]  # (E, 2, k)
    contrib = np.einsum("eab,ebk->eak", local, vals)
    out = np.zeros((mesh.n_vertices, nodal_columns.shape[1]))
    np.add.at(out, e.ravel(), contrib.reshape(-1, nodal_columns.shape[1]))
    return out


# --------------------------------------------------------------------------
# assembly and solve
# --------------------------------------------------------------------------

def assemble(problem, mesh, metric=None):
    """Assemble ``A_ij = h(phi_i, phi_j)`` and ``b_i = int f phi_i dV_g + int a phi_i dS_g``."""
    mesh = _ensure_metric(mesh, metric)
    _check_coefficients(problem, mesh)
    n = mesh.n_vertices
    vol = mesh.volume_weights
    stiff = _scatter(element_stiffness(shape_gradients(mesh), triangle_metric(mesh), vol),
                     mesh.triangles, n)
    robin = robin_matrix(problem.q_S, mesh, TAG_S) + robin_matrix(problem.q_gamma, mesh, TAG_GAMMA)
    matrix = stiff + robin
    mass = None
    if problem.absorption > 0:
        mass = _scatter(element_mass(vol), mesh.triangles, n)
        matrix = matrix + problem.absorption * mass
    rhs = boundary_load(problem.flux_S, mesh, TAG_S) + boundary_load(problem.flux_gamma, mesh, TAG_GAMMA)
    bary = mesh.vertices[mesh.triangles].mean(axis=1)
    fvals = _source_values(problem.source, bary)
    if np.any(fvals):
        np.add.at(rhs, mesh.triangles.ravel(), np.repeat(fvals * vol / 3.0, 3))
    return LinearSystem(matrix.tocsr(), rhs, stiff, robin, mass, mesh)


def _pcg(matrix, rhs, tol, max_iter):
    diag = matrix.diagonal()
    if np.any(diag <= 0):
        raise ConvergenceError("Jacobi preconditioner needs a positive diagonal")
    inv_diag = 1.0 / diag
    x = np.zeros_like(rhs)
    r = rhs.copy()
    bnorm = np.linalg.norm(rhs)
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        ap = matrix @ p
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            # confirm with the true residual to guard against drift
            true_res = np.linalg.norm(rhs - matrix @ x) / bnorm
            if true_res <= tol:
                return x, it, true_res
            r = rhs - matrix @ x
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(rhs - matrix @ x) / bnorm
    raise ConvergenceError(f"conjugate gradients did not converge in {max_iter} iterations "
                           f"(relative residual {res:.3e})", residual=res, iterations=max_iter)


def solve(system, tol=1e-10, method="auto", return_info=False):
    """Solve ``system`` to relative residual ``tol``.

    ``method`` is ``"cg"`` (Jacobi-preconditioned conjugate gradients,
    capped at ``10 n`` iterations), ``"cholesky"`` (dense), ``"splu"``
    (sparse LU) or ``"auto"``: dense Cholesky below 2000 unknowns, CG above.
    """
    check_scalar(tol, "tol", min_val=1e-14, max_val=1e-6)
    matrix, rhs = system.matrix, np.asarray(system.rhs, dtype=float)
    n = len(rhs)
    if method == "auto":
        method = "cholesky" if n < DENSE_LIMIT else "cg"
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        x, info = np.zeros(n), SolveInfo(method, 0, 0.0)
        return (x, info) if return_info else x
    if method == "cg":
        x, iters, res = _pcg(matrix, rhs, tol, 10 * n)
    elif method == "cholesky":
        factor = scipy.linalg.cho_factor(matrix.toarray(), lower=True)
        x = scipy.linalg.cho_solve(factor, rhs)
        iters = 0
        res = np.linalg.norm(rhs - matrix @ x) / bnorm
    elif method == "splu":
        x = spla.splu(matrix.tocsc()).solve(rhs)
        iters = 0
        res = np.linalg.norm(rhs - matrix @ x) / bnorm
    else:
        raise ValueError(f"unknown solve method {method!r}")
    info = SolveInfo(method, iters, float(res))
    return (x, info) if return_info else x


def factorize(system):
    """Sparse LU factorization for repeated solves with the same matrix."""
    return spla.splu(system.matrix.tocsc())


# --------------------------------------------------------------------------
# forms evaluated directly from a nodal field
# --------------------------------------------------------------------------

def _edge_gauss_field(u, mesh, tag):
    idx = mesh.edge_indices(tag)
    e = mesh.boundary_edges[idx]
    return u[e[:, 0], None] * (1 - GAUSS_NODES)[None, :] + u[e[:, 1], None] * GAUSS_NODES[None, :]


def gradient_energy(u, mesh):
    """``int_D |grad_g u|_g^2 dV_g`` computed triangle by triangle."""
    mesh = _ensure_metric(mesh, None)
    grad = np.einsum("tia,ti->ta", shape_gradients(mesh), u[mesh.triangles])
    return float(np.sum(mesh.volume_weights * np.einsum("ta,tab,tb->t", grad, triangle_metric(mesh), grad)))


def mass_energy(u, mesh):
    """``int_D u^2 dV_g`` for the P1 field (exact for barycentric sqrt|g|)."""
    mesh = _ensure_metric(mesh, None)
    ut = u[mesh.triangles]
    return float(np.sum(mesh.volume_weights * (np.sum(ut ** 2, axis=1) + np.sum(ut, axis=1) ** 2) / 12.0))


def energy_form(u, problem, mesh):
    """``h(u, u)`` evaluated from the nodal field, independently of any assembled matrix."""
    mesh = _ensure_metric(mesh, None)
    total = gradient_energy(u, mesh)
    if problem.absorption > 0:
        total += problem.absorption * mass_energy(u, mesh)
    for tag in (TAG_S, TAG_GAMMA):
        idx = mesh.edge_indices(tag)
        q = gauss_values(problem.spec("q", tag), mesh, tag)
        total += float(np.sum(mesh.edge_weights[idx] * q * _edge_gauss_field(u, mesh, tag) ** 2))
    return total


def load_form(u, problem, mesh):
    """``int_D f u dV_g + int_{dD} a u dS_g`` with the assembly quadrature."""
    mesh = _ensure_metric(mesh, None)
    bary = mesh.vertices[mesh.triangles].mean(axis=1)
    fvals = _source_values(problem.source, bary)
    total = float(np.sum(fvals * mesh.volume_weights * u[mesh.triangles].mean(axis=1)))
    for tag in (TAG_S, TAG_GAMMA):
        idx = mesh.edge_indices(tag)
        a = gauss_values(problem.spec("flux", tag), mesh, tag)
        total += float(np.sum(mesh.edge_weights[idx] * a * _edge_gauss_field(u, mesh, tag)))
    return total


def domain_h1_norm(u, mesh):
    mesh = _ensure_metric(mesh, None)
    return float(np.sqrt(gradient_energy(u, mesh) + mass_energy(u, mesh)))


def source_l2_norm(problem, mesh):
    mesh = _ensure_metric(mesh, None)
    bary = mesh.vertices[mesh.triangles].mean(axis=1)
    fvals = _source_values(problem.source, bary)
    return float(np.sqrt(np.sum(mesh.volume_weights * fvals ** 2)))


def flux_l2_norm(problem, mesh):
    """``||a||_{L2(dD)}`` over both boundary components."""
    mesh = _ensure_metric(mesh, None)
    total = 0.0
    for tag in (TAG_S, TAG_GAMMA):
        idx = mesh.edge_indices(tag)
        total += float(np.sum(mesh.edge_weights[idx] * gauss_values(problem.spec("flux", tag), mesh, tag) ** 2))
    return float(np.sqrt(total))


def l2_error(u, mesh, exact):
    """``||u_h - u||_{L2(D)}`` with a degree-4 rule; ``exact(x, y)`` is vectorised."""
    mesh = _ensure_metric(mesh, None)
    p = mesh.vertices[mesh.triangles]
    pts = np.einsum("qi,tid->tqd", _DUNAVANT_BARY, p)
    uh = u[mesh.triangles] @ _DUNAVANT_BARY.T
    ue = exact(pts[..., 0], pts[..., 1])
    sqrt_det = mesh.metric.evaluate(pts.reshape(-1, 2))[2].reshape(pts.shape[:2])
    area = np.abs(mesh.signed_areas())
    return float(np.sqrt(np.sum(area[:, None] * _DUNAVANT_W[None] * sqrt_det * (uh - ue) ** 2)))


def h1_seminorm_error(u, mesh, exact_grad):
    """``||grad(u_h - u)||_{L2(D)}`` (Euclidean) with a degree-4 rule."""
    mesh = _ensure_metric(mesh, None)
    p = mesh.vertices[mesh.triangles]
    pts = np.einsum("qi,tid->tqd", _DUNAVANT_BARY, p)
    grad = np.einsum("tia,ti->ta", shape_gradients(mesh), u[mesh.triangles])
    gx, gy = exact_grad(pts[..., 0], pts[..., 1])
    err = (grad[:, None, 0] - gx) ** 2 + (grad[:, None, 1] - gy) ** 2
    area = np.abs(mesh.signed_areas())
    return float(np.sqrt(np.sum(area[:, None] * _DUNAVANT_W[None] * err)))


def gamma_gradient_split(u, mesh):
    """Integrals over ``Gamma`` of ``|grad_g u|^2`` and ``|d_{nu_g} u|^2`` from the adjacent triangles."""
    mesh = _ensure_metric(mesh, None)
    key = "edge_triangle"
    if key not in mesh._cache:
        owner = {}
        for t, tri in enumerate(mesh.triangles):
            for a, b in ((0, 1), (1, 2), (2, 0)):
                owner[frozenset((int(tri[a]), int(tri[b])))] = t
        mesh._cache[key] = np.array([owner[frozenset((int(a), int(b)))] for a, b in mesh.boundary_edges])
    tri_of_edge = mesh._cache[key]
    idx = mesh.edge_indices(TAG_GAMMA)
    tris = tri_of_edge[idx]
    grad = np.einsum("tia,ti->ta", shape_gradients(mesh)[tris], u[mesh.triangles[tris]])
    _, g_inv, _ = mesh.metric.evaluate(mesh.gauss_points[idx].reshape(-1, 2))
    g_inv = g_inv.reshape(-1, 2, 2, 2)
    full = np.einsum("ea,egab,eb->eg", grad, g_inv, grad)
    normal = np.einsum("ea,ega->eg", grad, mesh.conormals[idx]) ** 2
    w = mesh.edge_weights[idx]
    return float(np.sum(w * full)), float(np.sum(w * normal))


# --------------------------------------------------------------------------
# forward solve and Cauchy data
# --------------------------------------------------------------------------

def forward_solve(problem, mesh, metric=None, tol=1e-10, method="auto"):
    """Assemble, solve and package a :class:`ForwardSolution`."""
    mesh = _ensure_metric(mesh, metric)
    system = assemble(problem, mesh)
    u, info = solve(system, tol=tol, method=method, return_info=True)
    return package_solution(u, problem, mesh, info)


def package_solution(u, problem, mesh, info=None):
    loop_s = BoundaryLoop.from_mesh(mesh, TAG_S)
    loop_g = BoundaryLoop.from_mesh(mesh, TAG_GAMMA)
    trace_s = BoundaryField(loop_s, u[loop_s.vertex_ids])
    trace_g = BoundaryField(loop_g, u[loop_g.vertex_ids])
    conormal = BoundaryField(loop_g, nodal_values(problem.flux_gamma, mesh, TAG_GAMMA)
                             - nodal_values(problem.q_gamma, mesh, TAG_GAMMA) * trace_g.values)
    return ForwardSolution(u, mesh, problem, trace_s, trace_g, conormal,
                           energy_form(u, problem, mesh), info)


def extract_cauchy(solution, problem=None):
    """Cauchy data on ``Gamma``; the conormal comes from the Robin identity."""
    problem = problem or solution.problem
    mesh = solution.mesh
    trace = solution.trace_gamma
    conormal = BoundaryField(trace.loop, nodal_values(problem.flux_gamma, mesh, TAG_GAMMA)
                             - nodal_values(problem.q_gamma, mesh, TAG_GAMMA) * trace.values)
    return CauchyData.from_trace(trace, conormal)


__all__ = ["RobinProblem", "LinearSystem", "ForwardSolution", "SolveInfo", "assemble", "solve",
           "factorize", "forward_solve", "package_solution", "extract_cauchy", "energy_form",
           "load_form", "gradient_energy", "mass_energy", "domain_h1_norm", "source_l2_norm",
           "flux_l2_norm", "l2_error", "h1_seminorm_error", "gamma_gradient_split",
           "nodal_values", "gauss_values", "boundary_mass_columns", "element_stiffness"]
