"""Metric tensors, star-shaped curves, annular domains and their triangulations.

The domain ``D`` is the region between an inner curve ``S`` (the inaccessible
boundary) and an outer curve ``Gamma`` (where measurements are taken). Both
curves are star-shaped about a common center, which makes a structured
transfinite-interpolation mesh between them straightforward.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ._validation import check_int, check_points, check_scalar
from .exceptions import GeometryError, MetricError

TAG_S = "S"
TAG_GAMMA = "GAMMA"
TAGS = (TAG_S, TAG_GAMMA)

# two-point Gauss rule on [0, 1]
GAUSS_NODES = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS_WEIGHTS = np.array([0.5, 0.5])


# --------------------------------------------------------------------------
# metric tensors
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MetricTensor:
    """A symmetric, uniformly elliptic 2x2 matrix field ``g_jk(x)``.

    Parameters
    ----------
    entries : callable
        Maps an ``(n, 2)`` array of points to an ``(n, 2, 2)`` array.
    theta : float
        Ellipticity constant: every eigenvalue of ``g(x)`` is at least ``theta``.
    name : str
        Label used in reports and configs.
    """

    entries: Callable[[np.ndarray], np.ndarray]
    theta: float
    name: str = "custom"
    is_euclidean: bool = False
    is_constant: bool = False

    def __post_init__(self):
        check_scalar(self.theta, "theta", min_val=0.0, include_min=False)

    @classmethod
    def identity(cls):
        return cls(lambda pts: np.broadcast_to(np.eye(2), (len(pts), 2, 2)).copy(),
                   theta=1.0, name="identity", is_euclidean=True, is_constant=True)

    @classmethod
    def constant(cls, matrix):
        mat = np.asarray(matrix, dtype=float)
        if mat.shape != (2, 2):
            raise MetricError(f"constant metric must be 2x2, got shape {mat.shape}")
        if abs(mat[0, 1] - mat[1, 0]) > 1e-14 * max(1.0, np.abs(mat).max()):
            raise MetricError(f"constant metric is not symmetric: {mat.tolist()}")
        lam = np.linalg.eigvalsh(mat)[0]
        if lam <= 0:
            raise MetricError(f"constant metric is not elliptic: smallest eigenvalue {lam}")
        return cls(lambda pts: np.broadcast_to(mat, (len(pts), 2, 2)).copy(),
                   theta=float(lam), name="constant",
                   is_euclidean=bool(np.allclose(mat, np.eye(2), rtol=0, atol=0)),
                   is_constant=True)

    @classmethod
    def conformal(cls, amplitude=0.1):
        """The family ``g(x) = (1 + amplitude * sin x_1) I`` with ``|amplitude| < 1``."""
        a = check_scalar(amplitude, "amplitude", min_val=-1.0, max_val=1.0,
                         include_min=False, include_max=False)

        def entries(pts):
            scale = 1.0 + a * np.sin(pts[:, 0])
            return scale[:, None, None] * np.eye(2)[None]

        return cls(entries, theta=1.0 - abs(a), name="conformal",
                   is_euclidean=(a == 0.0), is_constant=(a == 0.0))

    def scaled(self, factor):
        """Return the metric ``factor * g``."""
        check_scalar(factor, "factor", min_val=0.0, include_min=False)
        base = self.entries
        return MetricTensor(lambda pts: factor * base(pts), theta=self.theta * factor,
                            name=f"{factor:g}*{self.name}",
                            is_euclidean=self.is_euclidean and factor == 1.0,
                            is_constant=self.is_constant)

    def evaluate(self, points):
        """Return ``(g, g_inv, sqrt_det)`` at every point, validating each sample."""
        pts = check_points(points)
        g = np.asarray(self.entries(pts), dtype=float)
        if g.shape != (len(pts), 2, 2):
            raise MetricError(f"metric entries returned shape {g.shape}, expected ({len(pts)}, 2, 2)")
        asym = np.abs(g[:, 0, 1] - g[:, 1, 0])
        scale = np.maximum(1.0, np.abs(g).max(axis=(1, 2)))
        bad = np.flatnonzero(asym > 1e-12 * scale)
        if bad.size:
            i = bad[0]
            raise MetricError(f"metric not symmetric at x={pts[i].tolist()}: "
                              f"g12={g[i, 0, 1]!r}, g21={g[i, 1, 0]!r}")
        a, b, c = g[:, 0, 0], g[:, 0, 1], g[:, 1, 1]
        half_tr = 0.5 * (a + c)
        disc = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
        lam_min = half_tr - disc
        bad = np.flatnonzero(lam_min < self.theta * (1.0 - 1e-12))
        if bad.size:
            i = bad[0]
            raise MetricError(f"metric not elliptic at x={pts[i].tolist()}: smallest "
                              f"eigenvalue {lam_min[i]!r} < theta={self.theta!r}")
        det = a * c - b * b
        g_inv = np.empty_like(g)
        g_inv[:, 0, 0] = c / det
        g_inv[:, 1, 1] = a / det
        g_inv[:, 0, 1] = g_inv[:, 1, 0] = -b / det
        return g, g_inv, np.sqrt(det)


def metric_eval(metric, x):
    """Evaluate ``g``, ``g^{-1}`` and ``sqrt(det g)`` at a single point."""
    g, g_inv, sqrt_det = metric.evaluate(np.asarray(x, dtype=float).reshape(1, 2))
    return g[0], g_inv[0], float(sqrt_det[0])


def conormal_vectors(g_inv, normals):
    """Metric unit conormal ``nu_g^j = g^{jk} nu_k / sqrt(g^{lm} nu_l nu_m)``."""
    raised = np.einsum("...jk,...k->...j", g_inv, normals)
    denom = np.sqrt(np.einsum("...j,...j->...", raised, normals))
    return raised / denom[..., None]


def induced_speed(g, tangents):
    """``sqrt(g(t, t))`` for Euclidean unit tangents ``t``: the density of dS_g w.r.t. ds."""
    return np.sqrt(np.einsum("...j,...jk,...k->...", tangents, g, tangents))


# --------------------------------------------------------------------------
# curves and domains
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StarCurve:
    """Curve ``center + rho(phi) (cos phi, sin phi)`` with a trigonometric radius.

    ``rho(phi) = radius + sum_k (a_k cos k phi + b_k sin k phi)`` where
    ``harmonics`` holds ``(k, a_k, b_k)`` triples.
    """

    radius: float
    harmonics: tuple = ()
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        check_scalar(self.radius, "radius", min_val=0.0, include_min=False)
        object.__setattr__(self, "harmonics",
                           tuple((int(k), float(a), float(b)) for k, a, b in self.harmonics))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        for k, _, _ in self.harmonics:
            if k < 1:
                raise GeometryError(f"harmonic index must be >= 1, got {k}")
        phi = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
        if np.min(self.rho(phi)) <= 0:
            raise GeometryError("curve radius must stay strictly positive")

    @classmethod
    def circle(cls, radius, center=(0.0, 0.0)):
        return cls(radius=radius, center=center)

    @property
    def is_circle(self):
        return all(a == 0.0 and b == 0.0 for _, a, b in self.harmonics)

    def rho(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = np.full_like(phi, self.radius)
        for k, a, b in self.harmonics:
            out = out + a * np.cos(k * phi) + b * np.sin(k * phi)
        return out

    def point(self, phi):
        phi = np.asarray(phi, dtype=float)
        r = self.rho(phi)
        return np.stack([self.center[0] + r * np.cos(phi), self.center[1] + r * np.sin(phi)], axis=-1)


@dataclass(frozen=True)
class AnnularDomain:
    """The region between ``inner`` (S) and ``outer`` (Gamma)."""

    inner: StarCurve
    outer: StarCurve
    margin: float = 1e-3

    def __post_init__(self):
        check_scalar(self.margin, "margin", min_val=0.0, include_min=False)
        if not np.allclose(self.inner.center, self.outer.center, rtol=0, atol=0):
            raise GeometryError("inner and outer curves must share a center")
        phi = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
        gap = self.outer.rho(phi) - self.inner.rho(phi)
        i = int(np.argmin(gap))
        if gap[i] < self.margin:
            raise GeometryError(f"radial gap {gap[i]:.6g} at angle {phi[i]:.6g} is below "
                                f"the containment margin {self.margin:g}")

    @classmethod
    def circles(cls, r_inner, r_outer, margin=1e-3):
        return cls(StarCurve.circle(r_inner), StarCurve.circle(r_outer), margin)

    @property
    def center(self):
        return self.inner.center

    @property
    def is_concentric_circles(self):
        return self.inner.is_circle and self.outer.is_circle


# --------------------------------------------------------------------------
# mesh
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation of an annular domain.

    Boundary edges are stored loop by loop, counter-clockwise. The metric
    dependent arrays (``normals`` onwards) are ``None`` until
    :func:`boundary_normals` fills them.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    center: tuple = (0.0, 0.0)
    shape: Optional[tuple] = None  # (n_radial, n_angular) for structured meshes
    metric: Optional[MetricTensor] = None
    normals: Optional[np.ndarray] = None          # (E, 2) Euclidean, out of D
    gauss_points: Optional[np.ndarray] = None     # (E, 2, 2)
    conormals: Optional[np.ndarray] = None        # (E, 2, 2) nu_g at Gauss points
    edge_weights: Optional[np.ndarray] = None     # (E, 2) dS_g weights at Gauss points
    volume_weights: Optional[np.ndarray] = None   # (T,) sqrt|g| * area at barycenters
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def has_metric(self):
        return self.metric is not None

    @property
    def h(self):
        """Largest edge length of the triangulation."""
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return float(lengths.max())

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_indices(self, tag):
        return np.flatnonzero(self.edge_tags == tag)

    def loop_vertices(self, tag):
        """Vertex ids of the boundary loop ``tag`` in traversal order."""
        key = ("loop", tag)
        if key not in self._cache:
            edges = self.boundary_edges[self.edge_indices(tag)]
            if len(edges) == 0:
                raise GeometryError(f"mesh has no boundary edges tagged {tag}")
            succ = {}
            for a, b in edges:
                if a in succ:
                    raise GeometryError(f"loop {tag} is not simple at vertex {a}")
                succ[int(a)] = int(b)
            start = int(edges[0, 0])
            order = [start]
            nxt = succ.get(start)
            while nxt is not None and nxt != start:
                order.append(nxt)
                nxt = succ.get(nxt)
                if len(order) > len(edges):
                    break
            if nxt != start or len(order) != len(edges):
                raise GeometryError(f"boundary edges tagged {tag} do not form a closed loop")
            self._cache[key] = np.array(order, dtype=np.int64)
        return self._cache[key]

    def loop(self, tag):
        """The boundary loop ``tag`` as a :class:`~robinlab.boundary.BoundaryLoop`."""
        from .boundary import BoundaryLoop
        return BoundaryLoop.from_mesh(self, tag)


def _signed_area_of(points):
    d1 = points[:, 1] - points[:, 0]
    d2 = points[:, 2] - points[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_annular_mesh(domain, n_radial, n_angular, metric=None):
    """Structured triangulation between ``domain.inner`` and ``domain.outer``.

    Ring ``j`` of ``n_radial + 1`` rings sits at the radial blend
    ``(1 - j/n_radial) rho_S + (j/n_radial) rho_Gamma`` sampled at
    ``n_angular`` equispaced angles; each quad is split into two triangles.
    Normals and quadrature weights are filled in for ``metric`` (Euclidean
    when omitted).
    """
    check_int(n_radial, "n_radial", min_val=2)
    check_int(n_angular, "n_angular", min_val=8)
    phi = 2 * np.pi * np.arange(n_angular) / n_angular
    rho_in = domain.inner.rho(phi)
    rho_out = domain.outer.rho(phi)
    if np.any(rho_out - rho_in < domain.margin):
        raise GeometryError("curves intersect or the gap is below the containment margin")
    t = np.arange(n_radial + 1) / n_radial
    radii = (1 - t)[:, None] * rho_in[None, :] + t[:, None] * rho_out[None, :]
    cx, cy = domain.center
    vertices = np.stack([cx + radii * np.cos(phi)[None, :],
                         cy + radii * np.sin(phi)[None, :]], axis=-1).reshape(-1, 2)

    j, i = np.meshgrid(np.arange(n_radial), np.arange(n_angular), indexing="ij")
    j, i = j.ravel(), i.ravel()
    ip = (i + 1) % n_angular
    a = j * n_angular + i
    b = j * n_angular + ip
    c = (j + 1) * n_angular + ip
    d = (j + 1) * n_angular + i
    triangles = np.concatenate([np.stack([a, c, b], axis=1),
                                np.stack([a, d, c], axis=1)]).astype(np.int64)
    areas = _signed_area_of(vertices[triangles])
    if np.any(areas <= 0):
        raise GeometryError("mesh construction produced non-positive triangles; "
                            "increase n_angular or check the curves")

    ring = np.arange(n_angular)
    s_edges = np.stack([ring, (ring + 1) % n_angular], axis=1)
    g_edges = s_edges + n_radial * n_angular
    edges = np.concatenate([s_edges, g_edges]).astype(np.int64)
    tags = np.array([TAG_S] * n_angular + [TAG_GAMMA] * n_angular)
    mesh = Mesh(vertices=vertices, triangles=triangles, boundary_edges=edges,
                edge_tags=tags, center=tuple(domain.center), shape=(n_radial, n_angular))
    return boundary_normals(mesh, metric or MetricTensor.identity())


def boundary_normals(mesh, metric):
    """Return a copy of ``mesh`` carrying normals, conormals and metric weights.

    Normals point out of ``D`` on both loops, i.e. towards the hole on ``S``.
    Edge weights are the induced measure ``dS_g`` at the two Gauss points of
    each edge; triangle weights are ``sqrt|g| * area`` at barycenters.
    """
    v = mesh.vertices
    e = mesh.boundary_edges
    p0, p1 = v[e[:, 0]], v[e[:, 1]]
    vec = p1 - p0
    length = np.linalg.norm(vec, axis=1)
    if np.any(length <= 0):
        k = int(np.flatnonzero(length <= 0)[0])
        raise GeometryError(f"zero-length boundary edge {e[k].tolist()}")
    tangent = vec / length[:, None]
    # counter-clockwise loops: (t_y, -t_x) points out of the enclosed region
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
    on_s = mesh.edge_tags == TAG_S
    normal[on_s] *= -1.0

    gp = p0[:, None, :] + GAUSS_NODES[None, :, None] * vec[:, None, :]
    g, g_inv, _ = metric.evaluate(gp.reshape(-1, 2))
    g = g.reshape(-1, 2, 2, 2)
    g_inv = g_inv.reshape(-1, 2, 2, 2)
    conormal = conormal_vectors(g_inv, np.repeat(normal[:, None, :], 2, axis=1))
    speed = induced_speed(g, np.repeat(tangent[:, None, :], 2, axis=1))
    weights = GAUSS_WEIGHTS[None, :] * length[:, None] * speed

    tri = v[mesh.triangles]
    bary = tri.mean(axis=1)
    _, _, sqrt_det = metric.evaluate(bary)
    vol = sqrt_det * _signed_area_of(tri)
    return replace(mesh, metric=metric, normals=normal, gauss_points=gp, conormals=conormal,
                   edge_weights=weights, volume_weights=vol, _cache={})


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_mesh(mesh, path):
    """Write ``v x y`` / ``t i j k`` / ``e i j TAG`` records, 0-based, 17 significant digits."""
    lines = [f"v {_fmt(x)} {_fmt(y)}" for x, y in mesh.vertices]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles]
    lines += [f"e {i} {j} {tag}" for (i, j), tag in zip(mesh.boundary_edges, mesh.edge_tags)]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path, center=(0.0, 0.0), metric=None):
    verts, tris, edges, tags = [], [], [], []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            kind = parts[0]
            try:
                if kind == "v" and len(parts) == 3:
                    verts.append((float(parts[1]), float(parts[2])))
                elif kind == "t" and len(parts) == 4:
                    tris.append(tuple(int(p) for p in parts[1:]))
                elif kind == "e" and len(parts) == 4 and parts[3] in TAGS:
                    edges.append((int(parts[1]), int(parts[2])))
                    tags.append(parts[3])
                else:
                    raise ValueError(line.strip())
            except ValueError as exc:
                raise GeometryError(f"{path}:{lineno}: malformed record {exc}") from None
    mesh = Mesh(vertices=np.array(verts, dtype=float).reshape(-1, 2),
                triangles=np.array(tris, dtype=np.int64).reshape(-1, 3),
                boundary_edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
                edge_tags=np.array(tags), center=tuple(center))
    if np.any(mesh.signed_areas() <= 0):
        raise GeometryError(f"{path}: mesh contains non-positive triangles")
    for tag in TAGS:
        mesh.loop_vertices(tag)
    return boundary_normals(mesh, metric or MetricTensor.identity())


__all__ = ["TAG_S", "TAG_GAMMA", "TAGS", "MetricTensor", "metric_eval", "StarCurve", "AnnularDomain",
           "Mesh", "build_annular_mesh", "boundary_normals", "write_mesh", "read_mesh"]
