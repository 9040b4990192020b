"""Inverse flux and inverse Robin-coefficient reconstruction.

The flux-to-data map sends a flux ``a`` on ``S`` (zero flux on ``Gamma``) to
the Cauchy data of ``u(0, a)`` on ``Gamma``. Restricted to the eigenspace
``W_lambda`` it is a dense matrix whose columns are the stacked data vectors
of the basis functions, so its 2-norm is the map norm from ``L2(S)`` into the
data norm ``(||w||_{H1(Gamma)}^2 + ||d_nu w||_{L2(Gamma)}^2)^{1/2}``.

The coefficient solver linearizes around the current iterate: if ``u_k``
solves the problem with ``q_k`` and ``u*`` with the unknown ``q*``, then
``v = u* - u_k`` solves the same problem with coefficient ``q_k`` and flux
``b = (q_k - q*) u*`` on ``S``. Recovering ``b`` by flux inversion and
dividing by the (positive) trace gives the update.
"""

import numbers
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_scalar
from .boundary import (BoundaryField, BoundaryLoop, CauchyData, EigenBasis, cauchy_vector, fourier_basis,
                       l2_norm, lb_eigenbasis, project_W, tangential_norm)
from .exceptions import (GeometryError, IllConditionedError, PositivityError, PreconditionError,
                         StagnationError)
from .fem import (RobinProblem, assemble, boundary_mass_columns, extract_cauchy, forward_solve,
                  nodal_values)
from .geometry import TAG_GAMMA, TAG_S, build_annular_mesh
from .spectral import FourierSeries, circle_loop, spectral_forward

NORM_ORDERS = {"L2": 0.0, "H1/2": 0.5, "H1": 1.0}
ILL_CONDITIONED = 1e-10
MISMATCH_SLACK = 1e-10


def _norm_order(norm):
    if norm not in NORM_ORDERS:
        raise ValueError(f"norm must be one of {sorted(NORM_ORDERS)}, got {norm!r}")
    return NORM_ORDERS[norm]


@dataclass(frozen=True, eq=False)
class ForwardMapMatrix:
    """Discretized flux-to-Cauchy-data map on ``W_lambda``.

    ``columns[:, m]`` is the stacked data vector of ``u(0, phi_m)`` for the
    ``L2``-orthonormal basis function ``phi_m``; ``weighted`` rescales the
    columns so that the domain carries the ``norm`` convention.
    """

    columns: np.ndarray
    basis: EigenBasis
    loop: BoundaryLoop
    cutoff: float
    norm: str = "L2"
    backend: str = "spectral"

    @property
    def size(self):
        return self.columns.shape[1]

    def domain_weights(self, norm=None):
        t = _norm_order(norm or self.norm)
        return (1.0 + self.basis.eigenvalues) ** (t / 2)

    def weighted(self, norm=None):
        return self.columns / self.domain_weights(norm)[None, :]

    def singular_values(self, norm=None):
        return np.linalg.svd(self.weighted(norm), compute_uv=False)

    def sigma_min(self, norm=None):
        return float(self.singular_values(norm)[-1])

    def cond(self, norm=None):
        s = self.singular_values(norm)
        return float(s[0] / s[-1]) if s[-1] > 0 else np.inf

    def gram(self):
        return self.columns.T @ self.columns

    def data_vector(self, coefficients):
        return self.columns @ np.asarray(coefficients, dtype=float)

    def apply(self, flux):
        """Stacked data vector of a flux given as coefficients or a field on the basis loop."""
        if isinstance(flux, BoundaryField):
            flux = self.basis.coefficients(flux)
        return self.data_vector(flux)

    def column_data(self, m):
        """Trace and conormal of column ``m`` as a :class:`CauchyData`."""
        n = self.loop.n
        sw = np.sqrt(self.loop.weights)
        col = self.columns[:, m]
        return CauchyData.from_trace(self.loop.field(col[:n] / sw), self.loop.field(col[n:2 * n] / sw))


@dataclass(frozen=True, eq=False)
class InversionResult:
    """Outcome of a flux or coefficient inversion."""

    estimate: BoundaryField
    residual: float
    sigma_min: float
    iterations: int
    converged: bool
    coefficients: Optional[np.ndarray] = None
    cond: Optional[float] = None
    history: tuple = ()
    boundary_contact: bool = False
    constraint_ratio: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def history_rows(self):
        """``(iter, mismatch, update_norm, min_u_on_S)`` rows."""
        return [tuple(row) for row in self.history]


# --------------------------------------------------------------------------
# forward map
# --------------------------------------------------------------------------

def _is_constant(spec):
    return isinstance(spec, numbers.Real)


def _spectral_columns(basis, loop, R0, R1, q_S, q_gamma):
    n_max = int(round(np.sqrt(basis.eigenvalues[-1]) * R0)) if basis.size > 1 else 0
    cols = []
    zero = FourierSeries(boundary=TAG_GAMMA)
    for m in range(basis.size):
        order = (m + 1) // 2
        if m == 0:
            flux = FourierSeries.constant(1.0 / np.sqrt(2 * np.pi * R0))
        else:
            flux = FourierSeries.mode(order, "c" if m % 2 == 1 else "s", 1.0 / np.sqrt(np.pi * R0))
        sc = spectral_forward(flux, zero, R0, R1, q_S, q_gamma)
        theta = loop.angles
        cols.append(cauchy_vector(sc.trace(theta), sc.conormal(theta), loop))
    assert n_max * 2 + 1 == basis.size
    return np.stack(cols, axis=1)


def fem_data_columns(mesh, problem, flux_columns, factor=None):
    """Stacked Gamma data of ``u(0, a_k)`` for nodal S fluxes ``flux_columns[:, k]``.

    ``problem`` supplies the Robin coefficients; its fluxes and source are
    ignored. Returns ``(columns, factor)`` so the factorization can be reused.
    """
    if factor is None:
        factor = spla.splu(assemble(problem, mesh).matrix.tocsc())
    rhs = boundary_mass_columns(mesh, TAG_S, np.asarray(flux_columns, dtype=float))
    sol = factor.solve(rhs)
    ids = mesh.loop_vertices(TAG_GAMMA)
    trace = sol[ids]
    q_g = nodal_values(problem.q_gamma, mesh, TAG_GAMMA)
    loop = BoundaryLoop.from_mesh(mesh, TAG_GAMMA)
    return cauchy_vector(trace, -q_g[:, None] * trace, loop), factor


def assemble_forward_map(cutoff, domain=None, q_S=1.0, q_gamma=1.0, backend="spectral", metric=None,
                         mesh=None, norm="L2", n_gamma=512, loop=None):
    """Assemble the flux-to-data matrix on ``W_cutoff``.

    Parameters
    ----------
    cutoff : float
        Eigenvalue cutoff ``lambda``.
    domain : AnnularDomain, optional
        Required for the spectral backend unless ``mesh`` carries the circles.
    backend : {"spectral", "fem"}
        ``spectral`` needs concentric circles, constant ``q`` and the
        Euclidean metric; ``fem`` needs ``mesh`` (or builds one from ``domain``).
    loop : BoundaryLoop, optional
        Gamma discretization for spectral data. Defaults to the mesh Gamma
        loop when a mesh is given, else ``n_gamma`` equispaced nodes.
    """
    check_scalar(cutoff, "cutoff", min_val=0.0)
    _norm_order(norm)
    if backend == "spectral":
        if domain is None or not domain.is_concentric_circles:
            raise GeometryError("the spectral backend requires concentric circles")
        if not (_is_constant(q_S) and _is_constant(q_gamma)):
            raise GeometryError("the spectral backend requires constant Robin coefficients")
        if metric is not None and not metric.is_euclidean:
            raise GeometryError("the spectral backend requires the Euclidean metric")
        R0, R1 = domain.inner.radius, domain.outer.radius
        if mesh is not None:
            s_loop = BoundaryLoop.from_mesh(mesh, TAG_S)
            loop = loop or BoundaryLoop.from_mesh(mesh, TAG_GAMMA)
        else:
            check_int(n_gamma, "n_gamma", min_val=8)
            s_loop = circle_loop(R0, n_gamma, TAG_S, domain.center)
            loop = loop or circle_loop(R1, n_gamma, TAG_GAMMA, domain.center)
        n_max = int(np.floor(np.sqrt(cutoff) * R0 + 1e-9))
        basis = fourier_basis(s_loop, n_max, R0)
        columns = _spectral_columns(basis, loop, R0, R1, float(q_S), float(q_gamma))
    elif backend == "fem":
        if mesh is None:
            if domain is None:
                raise ValueError("the fem backend needs a mesh or a domain")
            mesh = build_annular_mesh(domain, 36, 448, metric)
        elif metric is not None and mesh.metric is not metric:
            from .geometry import boundary_normals
            mesh = boundary_normals(mesh, metric)
        s_loop = BoundaryLoop.from_mesh(mesh, TAG_S)
        basis = lb_eigenbasis(s_loop).restrict(cutoff)
        problem = RobinProblem(q_S=q_S, q_gamma=q_gamma)
        columns, _ = fem_data_columns(mesh, problem, basis.vectors)
        loop = BoundaryLoop.from_mesh(mesh, TAG_GAMMA)
    else:
        raise ValueError(f"backend must be 'spectral' or 'fem', got {backend!r}")
    return ForwardMapMatrix(columns, basis, loop, float(cutoff), norm, backend)


# --------------------------------------------------------------------------
# flux inversion
# --------------------------------------------------------------------------

def _tikhonov_solve(columns, rhs, penalty):
    """Minimize ``||F c - y||^2 + sum_m penalty_m c_m^2`` through the SVD of the stacked system."""
    if not np.any(penalty):
        coef, *_ = np.linalg.lstsq(columns, rhs, rcond=None)
        return coef
    aug = np.vstack([columns, np.diag(np.sqrt(penalty))])
    coef, *_ = np.linalg.lstsq(aug, np.concatenate([rhs, np.zeros(len(penalty))]), rcond=None)
    return coef


def invert_flux(data, fmap, alpha=0.0):
    """Recover a flux in ``W_lambda`` from Cauchy data on ``Gamma``.

    Minimizes ``||F a - data||^2 + alpha ||a||_{H^{1/2}(S)}^2``.
    """
    check_scalar(alpha, "alpha", min_val=0.0)
    if not data.loop.same_as(fmap.loop):
        raise GeometryError("data and forward map live on different Gamma discretizations; resample first")
    s = np.linalg.svd(fmap.columns, compute_uv=False)
    if alpha == 0.0 and s[-1] <= ILL_CONDITIONED:
        raise IllConditionedError(f"smallest singular value {s[-1]:.3e} <= {ILL_CONDITIONED:g}; "
                                  "use a Tikhonov weight alpha > 0 or a smaller cutoff")
    y = data.vector()
    penalty = alpha * (1.0 + fmap.basis.eigenvalues) ** 0.5
    coef = _tikhonov_solve(fmap.columns, y, penalty)
    residual = float(np.linalg.norm(fmap.columns @ coef - y))
    scale = float(np.linalg.norm(y))
    # a direct solve is one "iteration"; min_u_on_S has no meaning here
    history = [(1, residual / scale if scale > 0 else residual, float(np.linalg.norm(coef)), np.nan)]
    return InversionResult(estimate=fmap.basis.synthesize(coef), residual=residual,
                           sigma_min=fmap.sigma_min(), iterations=1, converged=True,
                           coefficients=coef, cond=float(s[0] / s[-1]) if s[-1] > 0 else np.inf,
                           history=tuple(history))


def add_noise(data, eps, seed=0):
    """Add Gaussian noise of relative ``L2(Gamma)`` size ``eps`` to trace and conormal.

    The perturbation is rescaled so its norm is exactly ``eps`` times the
    norm of the clean component; the tangential derivative is recomputed.
    """
    check_scalar(eps, "eps", min_val=0.0)
    if eps == 0.0:
        return data
    rng = np.random.default_rng(seed)
    loop = data.loop
    out = []
    for comp in (data.trace, data.conormal):
        target = eps * l2_norm(comp)
        noise = loop.field(rng.standard_normal(loop.n))
        scale = target / l2_norm(noise) if target > 0 else 0.0
        out.append(comp + scale * noise)
    return CauchyData.from_trace(*out)


# --------------------------------------------------------------------------
# corrosion coefficient
# --------------------------------------------------------------------------

def synthesize_data(problem, mesh, q_S=None):
    """Cauchy data on ``Gamma`` of the forward solution, optionally with a new ``q_S``."""
    if q_S is not None:
        problem = problem.with_(q_S=q_S)
    return extract_cauchy(forward_solve(problem, mesh))


def _check_signs(problem, mesh):
    for tag in (TAG_S, TAG_GAMMA):
        vals = nodal_values(problem.spec("flux", tag), mesh, tag)
        if np.any(vals < 0):
            raise PreconditionError(f"flux on {tag} has a negative part (min {vals.min():.3g}); "
                                    "the coefficient solver needs (f, a) >= 0")
    bary = mesh.vertices[mesh.triangles].mean(axis=1)
    src = problem.source
    fvals = np.asarray(src(bary[:, 0], bary[:, 1]) if callable(src) else np.full(len(bary), float(src)))
    if np.any(fvals < 0):
        raise PreconditionError("source f has a negative part; the coefficient solver needs f >= 0")
    data_nonzero = np.any(fvals != 0) or any(
        np.any(nodal_values(problem.spec("flux", tag), mesh, tag) != 0) for tag in (TAG_S, TAG_GAMMA))
    if not data_nonzero:
        raise PreconditionError("(f, a) = (0, 0): the coefficient is not identifiable")


class _State:
    """Forward solve at a given ``q_S`` with its factorization kept for the linearized map."""

    def __init__(self, q, problem, mesh, measured_vec, loop_g):
        self.q = q
        self.problem = problem.with_(q_S=q)
        system = assemble(self.problem, mesh)
        self.factor = spla.splu(system.matrix.tocsc())
        self.u = self.factor.solve(system.rhs)
        ids = mesh.loop_vertices(TAG_GAMMA)
        trace = self.u[ids]
        conormal = (nodal_values(problem.flux_gamma, mesh, TAG_GAMMA)
                    - nodal_values(problem.q_gamma, mesh, TAG_GAMMA) * trace)
        self.mismatch_vec = measured_vec - cauchy_vector(trace, conormal, loop_g)
        self.mismatch = float(np.linalg.norm(self.mismatch_vec))
        self.u_S = self.u[mesh.loop_vertices(TAG_S)]


def invert_robin(measured, problem, mesh, cutoff=4.0, kappa=1.0, max_iter=20, alpha=0.0, q0=None,
                 rtol=1e-8, update_tol=1e-6, max_halvings=5):
    """Reconstruct ``q`` on ``S`` from Cauchy data on ``Gamma``.

    Parameters
    ----------
    measured : CauchyData
        Measurements; resampled onto the ``Gamma`` loop of ``mesh``.
    problem : RobinProblem
        Known data ``f``, ``a`` and ``q_Gamma``; its ``q_S`` is ignored.
    mesh : Mesh
        Inversion mesh (should differ from the one that produced ``measured``).
    cutoff : float
        ``lambda``; updates are projected onto ``W_lambda``.
    kappa : float
        Upper clamp; the iteration starts from ``q0 = kappa / 2``.

    Returns
    -------
    InversionResult
        ``history`` holds ``(iter, mismatch, update_norm, min_u_on_S)`` with
        the mismatch relative to the measured data norm.
    """
    check_scalar(kappa, "kappa", min_val=0.0, include_min=False)
    check_int(max_iter, "max_iter", min_val=1)
    _check_signs(problem, mesh)
    loop_s = BoundaryLoop.from_mesh(mesh, TAG_S)
    loop_g = BoundaryLoop.from_mesh(mesh, TAG_GAMMA)
    measured = measured.resample(loop_g)
    measured_vec = measured.vector()
    data_norm = float(np.linalg.norm(measured_vec))
    if data_norm == 0.0:
        raise PreconditionError("measured data vanish identically")
    full_basis = lb_eigenbasis(loop_s)
    basis = full_basis.restrict(cutoff)
    if q0 is None:
        q0 = kappa / 2.0
    q = loop_s.field(q0.values if isinstance(q0, BoundaryField) else q0)
    state = _State(q.values, problem, mesh, measured_vec, loop_g)
    history = []
    contact = False
    converged = False
    sigma = np.nan
    cond = np.nan
    iterations = 0
    for k in range(1, max_iter + 1):
        iterations = k
        min_u = float(state.u_S.min())
        if min_u <= 1e-12:
            raise PositivityError(f"min u_k on S = {min_u:.3e} <= 1e-12 at iteration {k}; "
                                  "check the data or the sign assumption on (f, a)")
        rel = state.mismatch / data_norm
        if rel <= rtol:
            history.append((k, rel, 0.0, min_u))
            converged = True
            break
        cols, _ = fem_data_columns(mesh, state.problem, basis.vectors, factor=state.factor)
        s = np.linalg.svd(cols, compute_uv=False)
        sigma, cond = float(s[-1]), float(s[0] / s[-1])
        if alpha == 0.0 and s[-1] <= ILL_CONDITIONED:
            raise IllConditionedError(f"linearized map has sigma_min {s[-1]:.3e}; use alpha > 0")
        coef = _tikhonov_solve(cols, state.mismatch_vec, alpha * (1.0 + basis.eigenvalues) ** 0.5)
        b_S = basis.synthesize(coef)
        step = project_W(b_S / state.u_S, cutoff, full_basis).values
        step_norm = l2_norm(loop_s.field(step)) / max(l2_norm(loop_s.field(state.q)), 1e-300)
        if step_norm <= update_tol:
            history.append((k, rel, 0.0, min_u))
            converged = True
            break
        accepted = None
        scale = 1.0
        for _ in range(max_halvings + 1):
            raw = state.q - scale * step
            q_new = np.clip(raw, 0.0, kappa)
            trial = _State(q_new, problem, mesh, measured_vec, loop_g)
            # rounding slack: at the noise floor the mismatch is flat to ~1e-15
            if trial.mismatch <= state.mismatch * (1.0 + MISMATCH_SLACK):
                accepted = trial
                contact = contact or bool(np.any(raw != q_new))
                break
            scale *= 0.5
        if accepted is None:
            history.append((k, rel, 0.0, min_u))
            raise StagnationError(f"data mismatch did not decrease after {max_halvings} step halvings "
                                  f"at iteration {k} (relative mismatch {rel:.3e})", history=history)
        update = float(l2_norm(loop_s.field(accepted.q - state.q)) / max(l2_norm(loop_s.field(state.q)), 1e-300))
        history.append((k, rel, update, min_u))
        state = accepted
        if update <= update_tol:
            converged = True
            break
    estimate = loop_s.field(state.q)
    diff = estimate - q.values
    dnorm = l2_norm(diff)
    ratio = tangential_norm(diff) / dnorm if dnorm > 0 else 0.0
    return InversionResult(estimate=estimate, residual=state.mismatch / data_norm, sigma_min=sigma,
                           iterations=iterations, converged=converged, cond=cond,
                           history=tuple(history), boundary_contact=contact, constraint_ratio=ratio,
                           extras={"min_u_on_S": float(state.u_S.min()), "cutoff": float(cutoff)})


# --------------------------------------------------------------------------
# estimator wrappers
# --------------------------------------------------------------------------

class FluxInverter(BaseEstimator):
    """Estimator wrapper around :func:`invert_flux`.

    ``fit`` takes a :class:`ForwardMapMatrix`; ``predict`` maps Cauchy data
    to the recovered flux and ``transform`` to its ``W_lambda`` coefficients.
    """

    def __init__(self, alpha=0.0):
        self.alpha = alpha

    def fit(self, X, y=None):
        if not isinstance(X, ForwardMapMatrix):
            raise TypeError("FluxInverter.fit expects a ForwardMapMatrix")
        check_scalar(self.alpha, "alpha", min_val=0.0)
        self.forward_map_ = X
        self.sigma_min_ = X.sigma_min()
        self.cond_ = X.cond()
        return self

    def _invert(self, data):
        check_is_fitted(self, "forward_map_")
        return invert_flux(data, self.forward_map_, alpha=self.alpha)

    def predict(self, X):
        return self._invert(X).estimate

    def transform(self, X):
        return self._invert(X).coefficients


class CorrosionInverter(BaseEstimator):
    """Estimator wrapper around :func:`invert_robin`; ``fit`` takes measured Cauchy data."""

    def __init__(self, problem=None, mesh=None, cutoff=4.0, kappa=1.0, max_iter=20, alpha=0.0):
        self.problem = problem
        self.mesh = mesh
        self.cutoff = cutoff
        self.kappa = kappa
        self.max_iter = max_iter
        self.alpha = alpha

    def fit(self, X, y=None):
        if self.problem is None or self.mesh is None:
            raise ValueError("CorrosionInverter needs a problem and an inversion mesh")
        self.result_ = invert_robin(X, self.problem, self.mesh, cutoff=self.cutoff, kappa=self.kappa,
                                    max_iter=self.max_iter, alpha=self.alpha)
        self.q_ = self.result_.estimate
        self.n_iter_ = self.result_.iterations
        return self

    def predict(self, X=None):
        check_is_fitted(self, "q_")
        return self.q_


__all__ = ["ForwardMapMatrix", "InversionResult", "assemble_forward_map", "invert_flux", "invert_robin",
           "add_noise", "synthesize_data", "fem_data_columns", "FluxInverter", "CorrosionInverter",
           "NORM_ORDERS"]
