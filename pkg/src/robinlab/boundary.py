"""Boundary-side analysis on closed curves.

Boundary fields are nodal samples on a closed polygonal loop. Integrals use
trapezoidal node weights built from induced (metric) edge lengths, so that
for a P1 trace the tangential derivative is edgewise constant and

    ||d_s w||^2 = sum_e (w_{e+1} - w_e)^2 / len_e.

The Laplace-Beltrami eigenproblem is discretised with the same edge lengths,
which makes ``||d_s w||^2 = sum_m lambda_m |(w, phi_m)|^2`` hold exactly in
the discrete setting.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from ._validation import check_int, check_scalar
from .exceptions import GeometryError
from .geometry import GAUSS_NODES, GAUSS_WEIGHTS, TAG_GAMMA, TAG_S, TAGS, StarCurve, induced_speed


@dataclass(frozen=True, eq=False)
class BoundaryLoop:
    """Nodes of a closed boundary curve, ordered counter-clockwise.

    Edge ``i`` joins node ``i`` to node ``i + 1`` (cyclically);
    ``edge_lengths`` are measured in the metric induced on the curve.
    """

    tag: str
    points: np.ndarray
    edge_lengths: np.ndarray
    center: tuple = (0.0, 0.0)
    vertex_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise GeometryError(f"unknown boundary tag {self.tag!r}")
        if len(self.points) < 3:
            raise GeometryError("a boundary loop needs at least 3 nodes")
        if np.any(self.edge_lengths <= 0):
            raise GeometryError("degenerate boundary loop: zero-length edge")

    @classmethod
    def from_points(cls, points, tag, center=(0.0, 0.0), metric=None, vertex_ids=None):
        pts = np.asarray(points, dtype=float)
        vec = np.roll(pts, -1, axis=0) - pts
        length = np.linalg.norm(vec, axis=1)
        if np.any(length <= 0):
            raise GeometryError("degenerate boundary loop: zero-length edge")
        if metric is not None and not metric.is_euclidean:
            tangent = vec / length[:, None]
            gp = pts[:, None, :] + GAUSS_NODES[None, :, None] * vec[:, None, :]
            g, _, _ = metric.evaluate(gp.reshape(-1, 2))
            speed = induced_speed(g.reshape(-1, 2, 2, 2), np.repeat(tangent[:, None], 2, axis=1))
            length = length * (speed * GAUSS_WEIGHTS).sum(axis=1)
        return cls(tag, pts, length, tuple(center), vertex_ids)

    @classmethod
    def from_curve(cls, curve, n_nodes, tag=TAG_S, metric=None):
        """Sample ``curve`` at ``n_nodes`` equispaced polar angles starting at 0."""
        check_int(n_nodes, "n_nodes", min_val=3)
        phi = 2 * np.pi * np.arange(n_nodes) / n_nodes
        return cls.from_points(curve.point(phi), tag, curve.center, metric)

    @classmethod
    def from_mesh(cls, mesh, tag):
        ids = mesh.loop_vertices(tag)
        pts = mesh.vertices[ids]
        if mesh.has_metric:
            lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(mesh.boundary_edges)}
            nxt = np.roll(ids, -1)
            idx = np.array([lookup[(int(a), int(b))] for a, b in zip(ids, nxt)])
            length = mesh.edge_weights[idx].sum(axis=1)
            return cls(tag, pts, length, tuple(mesh.center), ids)
        return cls.from_points(pts, tag, mesh.center, None, ids)

    @property
    def n(self):
        return len(self.points)

    @property
    def angles(self):
        """Polar angles of the nodes about ``center`` in ``[0, 2 pi)``."""
        d = self.points - np.asarray(self.center)
        return np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)

    @property
    def weights(self):
        """Trapezoidal ``dS_g`` weight of each node."""
        return 0.5 * (self.edge_lengths + np.roll(self.edge_lengths, 1))

    @property
    def length(self):
        return float(self.edge_lengths.sum())

    def same_as(self, other):
        return (self is other) or (self.tag == other.tag and self.n == other.n
                                   and np.array_equal(self.points, other.points)
                                   and np.array_equal(self.edge_lengths, other.edge_lengths))

    def field(self, values):
        """Wrap ``values`` (array, scalar or callable of the polar angle) as a field."""
        if callable(values):
            values = values(self.angles)
        arr = np.broadcast_to(np.asarray(values, dtype=float), (self.n,)).copy()
        return BoundaryField(self, arr)


@dataclass(frozen=True, eq=False)
class BoundaryField:
    """Nodal scalar field on a :class:`BoundaryLoop`."""

    loop: BoundaryLoop
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.loop.n,):
            raise ValueError(f"field has shape {vals.shape}, loop has {self.loop.n} nodes")
        object.__setattr__(self, "values", vals)

    @property
    def boundary(self):
        return self.loop.tag

    def _coerce(self, other):
        if isinstance(other, BoundaryField):
            _check_same_loop(self.loop, other.loop)
            return other.values
        return other

    def __add__(self, other):
        return BoundaryField(self.loop, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return BoundaryField(self.loop, self.values - self._coerce(other))

    def __rsub__(self, other):
        return BoundaryField(self.loop, self._coerce(other) - self.values)

    def __mul__(self, other):
        return BoundaryField(self.loop, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return BoundaryField(self.loop, self.values / self._coerce(other))

    def __neg__(self):
        return BoundaryField(self.loop, -self.values)

    def l2_norm(self):
        return l2_norm(self)

    def resample(self, loop):
        return resample(self, loop)


def _check_same_loop(a, b):
    if not a.same_as(b):
        raise GeometryError(f"fields live on different boundary discretisations ({a.tag}/{a.n} vs {b.tag}/{b.n})")


# --------------------------------------------------------------------------
# norms and derivatives
# --------------------------------------------------------------------------

def l2_norm(field):
    return float(np.sqrt(np.sum(field.loop.weights * field.values ** 2)))


def edge_derivatives(field):
    """Edgewise-constant arc-length derivative of the P1 interpolant."""
    return (np.roll(field.values, -1) - field.values) / field.loop.edge_lengths


def tangential_norm(field):
    """``||nabla_tau w||_{L2}`` of the P1 interpolant (exact edgewise integration)."""
    diff = np.roll(field.values, -1) - field.values
    return float(np.sqrt(np.sum(diff ** 2 / field.loop.edge_lengths)))


def h1_norm(field):
    return float(np.hypot(l2_norm(field), tangential_norm(field)))


def tangential_gradient(field):
    """Nodal arc-length derivative by centered differences.

    The value at node ``i`` is the length-weighted mean of the two adjacent
    edgewise derivatives, i.e. ``(w_{i+1} - w_{i-1}) / (len_{i-1} + len_i)``.
    """
    w = field.values
    lens = field.loop.edge_lengths
    deriv = (np.roll(w, -1) - np.roll(w, 1)) / (lens + np.roll(lens, 1))
    return BoundaryField(field.loop, deriv)


def resample(field, loop):
    """Periodic linear interpolation of ``field`` onto the nodes of ``loop`` (by polar angle)."""
    if field.loop.same_as(loop):
        return field
    if field.loop.tag != loop.tag:
        raise GeometryError(f"cannot resample a field on {field.loop.tag} onto {loop.tag}")
    src = field.loop.angles
    order = np.argsort(src)
    xs = src[order]
    ys = field.values[order]
    xs = np.concatenate([xs[-1:] - 2 * np.pi, xs, xs[:1] + 2 * np.pi])
    ys = np.concatenate([ys[-1:], ys, ys[:1]])
    return BoundaryField(loop, np.interp(loop.angles, xs, ys))


# --------------------------------------------------------------------------
# Laplace-Beltrami eigenbasis
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Eigenpairs ``(lambda_m, phi_m)`` of ``-d^2/ds^2`` on a closed loop.

    ``vectors[:, m]`` holds ``phi_m`` at the loop nodes; the columns are
    orthonormal in the weighted inner product ``(u, v) = sum_i w_i u_i v_i``.
    ``complete`` is true when every discrete eigenpair was computed.
    """

    loop: BoundaryLoop
    eigenvalues: np.ndarray
    vectors: np.ndarray
    complete: bool = False

    @property
    def size(self):
        return len(self.eigenvalues)

    def function(self, m):
        return BoundaryField(self.loop, self.vectors[:, m])

    def coefficients(self, field):
        _check_same_loop(self.loop, field.loop)
        return self.vectors.T @ (self.loop.weights * field.values)

    def synthesize(self, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        return BoundaryField(self.loop, self.vectors[:, :len(coefficients)] @ coefficients)

    def gram(self):
        return self.vectors.T @ (self.loop.weights[:, None] * self.vectors)

    def check_cutoff(self, cutoff):
        if not self.complete and cutoff >= self.eigenvalues[-1]:
            raise ValueError(f"cutoff {cutoff:g} is not below the largest resolved eigenvalue "
                             f"{self.eigenvalues[-1]:g}; compute more eigenpairs")

    def restrict(self, cutoff):
        """Sub-basis spanning ``W_lambda = span{phi_m : lambda_m <= cutoff}``."""
        self.check_cutoff(cutoff)
        keep = self.eigenvalues <= cutoff
        return EigenBasis(self.loop, self.eigenvalues[keep], self.vectors[:, keep], complete=False)

    def first(self, count):
        return EigenBasis(self.loop, self.eigenvalues[:count], self.vectors[:, :count],
                          complete=self.complete and count == self.size)


def _periodic_stiffness(edge_lengths):
    n = len(edge_lengths)
    k = 1.0 / edge_lengths
    mat = np.zeros((n, n))
    idx = np.arange(n)
    nxt = (idx + 1) % n
    np.add.at(mat, (idx, idx), k)
    np.add.at(mat, (nxt, nxt), k)
    np.add.at(mat, (idx, nxt), -k)
    np.add.at(mat, (nxt, idx), -k)
    return mat


def _canonicalize_pairs(eigenvalues, vectors):
    """Fix the rotation inside each two-dimensional eigenspace.

    The first member is made positive at node 0 and the second is made to
    vanish there (positive at node 1). On circles sampled from angle 0 this
    yields the cos/sin pairing, so eigenbases computed on different meshes are
    directly comparable.
    """
    vals = eigenvalues
    m = 1
    while m < len(vals) - 1:
        scale = max(1.0, abs(vals[m]))
        if abs(vals[m + 1] - vals[m]) <= 1e-8 * scale:
            v1, v2 = vectors[:, m].copy(), vectors[:, m + 1].copy()
            rho = np.hypot(v1[0], v2[0])
            if rho > 1e-12 * np.abs(vectors[:, m:m + 2]).max():
                c, s = v1[0] / rho, v2[0] / rho
                w1 = c * v1 + s * v2
                w2 = -s * v1 + c * v2
                w2[0] = 0.0 if abs(w2[0]) < 1e-14 else w2[0]
                if w2[1] < 0:
                    w2 = -w2
                vectors[:, m], vectors[:, m + 1] = w1, w2
            m += 2
        else:
            if vectors[0, m] < 0:
                vectors[:, m] *= -1.0
            m += 1
    if m == len(vals) - 1 and vectors[0, m] < 0:
        vectors[:, m] *= -1.0
    return vectors


def lb_eigenbasis(boundary, metric=None, M=None, n_nodes=256, tag=TAG_S):
    """Laplace-Beltrami eigenbasis on a closed curve.

    Solves the periodic problem ``-(d/ds)(d/ds) phi = lambda phi`` in induced
    arc length with second-order finite differences (equivalently, P1
    elements with lumped mass).

    Parameters
    ----------
    boundary : BoundaryLoop or StarCurve
        The curve; a ``StarCurve`` is sampled at ``n_nodes`` angles first.
    metric : MetricTensor, optional
        Only used when ``boundary`` is a curve.
    M : int, optional
        Highest eigen-index to compute; ``None`` computes all of them.

    Returns
    -------
    EigenBasis
        Eigenpairs sorted ascending with ``lambda_0 = 0`` and constant ``phi_0``.
    """
    loop = boundary
    if isinstance(boundary, StarCurve):
        loop = BoundaryLoop.from_curve(boundary, n_nodes, tag=tag, metric=metric)
    n = loop.n
    top = n - 1 if M is None else check_int(M, "M", min_val=0)
    if top > n - 1:
        raise ValueError(f"M={top} exceeds the {n} available eigenpairs")
    stiff = _periodic_stiffness(loop.edge_lengths)
    w = loop.weights
    # symmetric scaling W^{-1/2} K W^{-1/2} keeps eigh on a standard problem
    sw = 1.0 / np.sqrt(w)
    vals, vecs = scipy.linalg.eigh(sw[:, None] * stiff * sw[None, :], subset_by_index=[0, top])
    vecs = sw[:, None] * vecs
    vals = vals.copy()
    vals[0] = 0.0
    vecs[:, 0] = 1.0 / np.sqrt(loop.length)
    vals = np.maximum(vals, 0.0)
    vecs = _canonicalize_pairs(vals, vecs)
    return EigenBasis(loop, vals, vecs, complete=(top == n - 1))


def fourier_basis(loop, n_max, radius):
    """Exact circle eigenbasis ``1, cos m theta, sin m theta`` (m <= n_max) sampled on ``loop``.

    Eigenvalues are ``m^2 / radius^2`` and functions carry the continuous
    normalisation ``1/sqrt(2 pi R)`` and ``1/sqrt(pi R)``.
    """
    check_int(n_max, "n_max", min_val=0)
    theta = loop.angles
    cols = [np.full(loop.n, 1.0 / np.sqrt(2 * np.pi * radius))]
    vals = [0.0]
    for m in range(1, n_max + 1):
        cols.append(np.cos(m * theta) / np.sqrt(np.pi * radius))
        cols.append(np.sin(m * theta) / np.sqrt(np.pi * radius))
        vals += [m * m / radius ** 2] * 2
    return EigenBasis(loop, np.array(vals), np.stack(cols, axis=1), complete=False)


def sobolev_norm(field, t, basis):
    """Spectral ``H^t`` norm ``(sum_m (1 + lambda_m)^t |(field, phi_m)|^2)^{1/2}``.

    Only the eigenpairs present in ``basis`` contribute, so incomplete bases
    measure the projection of ``field`` onto their span.
    """
    check_scalar(t, "t", min_val=0.0, max_val=1.0)
    coef = basis.coefficients(field)
    return float(np.sqrt(np.sum((1.0 + basis.eigenvalues) ** t * coef ** 2)))


def in_A(field, M):
    """Membership in ``{a : ||nabla_tau a|| <= M ||a||}``; returns ``(inside, ratio)``."""
    check_scalar(M, "M", min_val=0.0)
    norm = l2_norm(field)
    if norm == 0.0:
        raise ValueError("the tangential-gradient ratio is undefined for the zero field")
    ratio = tangential_norm(field) / norm
    return bool(ratio <= M), ratio


def project_W(field, cutoff, basis):
    """Orthogonal ``L2`` projection onto ``W_lambda``."""
    sub = basis.restrict(cutoff)
    return sub.synthesize(sub.coefficients(field))


# --------------------------------------------------------------------------
# Cauchy data
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CauchyData:
    """Trace, conormal derivative and tangential derivative on ``Gamma``."""

    trace: BoundaryField
    conormal: BoundaryField
    tangential: BoundaryField

    def __post_init__(self):
        _check_same_loop(self.trace.loop, self.conormal.loop)
        _check_same_loop(self.trace.loop, self.tangential.loop)

    @classmethod
    def from_trace(cls, trace, conormal):
        return cls(trace, conormal, tangential_gradient(trace))

    @classmethod
    def zeros(cls, loop):
        z = loop.field(0.0)
        return cls(z, z, z)

    @property
    def loop(self):
        return self.trace.loop

    def vector(self):
        """Data vector whose Euclidean norm is ``(||w||_{H1}^2 + ||d_nu w||_{L2}^2)^{1/2}``."""
        return cauchy_vector(self.trace.values, self.conormal.values, self.loop)

    def resample(self, loop):
        if self.loop.same_as(loop):
            return self
        return CauchyData.from_trace(resample(self.trace, loop), resample(self.conormal, loop))

    def __sub__(self, other):
        return CauchyData.from_trace(self.trace - other.trace, self.conormal - other.conormal)


def cauchy_vector(trace, conormal, loop):
    sw = np.sqrt(loop.weights)
    diff = (np.roll(trace, -1, axis=0) - trace)
    scale = 1.0 / np.sqrt(loop.edge_lengths)
    if trace.ndim == 2:
        sw = sw[:, None]
        scale = scale[:, None]
    return np.concatenate([sw * trace, sw * conormal, scale * diff], axis=0)


def split_cauchy_vector(vec, n):
    """Norms ``(||w||_L2, ||d_nu w||_L2, ||nabla_tau w||_L2)`` from a data vector."""
    vec = np.asarray(vec)
    blocks = vec[:n], vec[n:2 * n], vec[2 * n:]
    return tuple(np.sqrt(np.sum(b ** 2, axis=0)) for b in blocks)


def cauchy_C(data):
    """``C(w) = ||w||_{H1(Gamma)} + ||d_nu w||_{L2(Gamma)}``."""
    trace_l2, conormal_l2, tan_l2 = split_cauchy_vector(data.vector(), data.loop.n)
    return float(np.hypot(trace_l2, tan_l2) + conormal_l2)


def cauchy_C_from_vector(vec, n):
    trace_l2, conormal_l2, tan_l2 = split_cauchy_vector(vec, n)
    return np.hypot(trace_l2, tan_l2) + conormal_l2


# --------------------------------------------------------------------------
# multiplier probe
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiplierProbe:
    """Outcome of :func:`multiplication_bound_probe`."""

    ratio: float           # sup over the band-limited subspace (exact, via SVD)
    sampled_ratio: float   # max over the random trials (never above ``ratio``)
    lipschitz: float       # Lipschitz seminorm of q
    sup_norm: float
    band_limit: int


def multiplication_bound_probe(q, trials, basis, band_limit=32, t=0.5, seed=0):
    """Estimate ``sup ||q u||_{H^t} / ||u||_{H^t}`` over band-limited ``u``.

    ``u`` ranges over the span of the first ``2 * band_limit + 1``
    eigenfunctions; the image ``q u`` is measured with the full basis, which
    must be complete.
    """
    check_int(trials, "trials", min_val=0)
    check_int(band_limit, "band_limit", min_val=0)
    if not basis.complete:
        raise ValueError("the multiplier probe needs a complete eigenbasis")
    _check_same_loop(basis.loop, q.loop)
    k = 2 * band_limit + 1
    if k > basis.size:
        raise ValueError(f"band limit {band_limit} needs {k} eigenfunctions, basis has {basis.size}")
    w = basis.loop.weights
    phi = basis.vectors
    weights_full = (1.0 + basis.eigenvalues) ** (t / 2)
    weights_band = (1.0 + basis.eigenvalues[:k]) ** (-t / 2)
    op = weights_full[:, None] * (phi.T @ ((w * q.values)[:, None] * phi[:, :k])) * weights_band[None, :]
    ratio = float(np.linalg.norm(op, 2)) if np.any(op) else 0.0
    rng = np.random.default_rng(seed)
    sampled = 0.0
    for _ in range(trials):
        y = rng.standard_normal(k)
        sampled = max(sampled, float(np.linalg.norm(op @ y) / np.linalg.norm(y)))
    lip = float(np.max(np.abs(edge_derivatives(q))))
    return MultiplierProbe(ratio, sampled, lip, float(np.max(np.abs(q.values))), band_limit)


__all__ = [
    "BoundaryLoop", "BoundaryField", "EigenBasis", "CauchyData", "MultiplierProbe",
    "l2_norm", "tangential_norm", "h1_norm", "edge_derivatives", "tangential_gradient",
    "resample", "lb_eigenbasis", "fourier_basis", "sobolev_norm", "in_A", "project_W",
    "cauchy_C", "cauchy_vector", "cauchy_C_from_vector", "split_cauchy_vector",
    "multiplication_bound_probe", "TAG_S", "TAG_GAMMA",
]
