"""Empirical stability experiments.

Singular-value sweeps of the flux-to-data map, fits of the logarithmic
modulus of continuity, Lipschitz checks on ``W_lambda`` and audits of the
maximum principle, the energy estimate and the sup bound.
"""

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from ._validation import check_int, check_scalar
from .boundary import cauchy_C, cauchy_C_from_vector, l2_norm, lb_eigenbasis, multiplication_bound_probe
from .exceptions import PreconditionError, UniquenessViolation
from .fem import (RobinProblem, domain_h1_norm, flux_l2_norm, forward_solve, nodal_values,
                  source_l2_norm)
from .geometry import TAG_GAMMA, TAG_S, build_annular_mesh
from .inverse import assemble_forward_map
from .spectral import FourierSeries, circle_loop, spectral_forward

C_GRID = np.geomspace(0.1, 50.0, 60)


# --------------------------------------------------------------------------
# logarithmic modulus
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PhiParams:
    """Parameters ``(eta, c)`` of the modulus; ``strict=False`` admits eta outside (0, 1/4)."""

    eta: float
    c: float
    strict: bool = True

    def __post_init__(self):
        check_scalar(self.c, "c", min_val=0.0, include_min=False)
        if self.strict:
            check_scalar(self.eta, "eta", min_val=0.0, max_val=0.25, include_min=False, include_max=False)
        else:
            check_scalar(self.eta, "eta", min_val=0.0, include_min=False)

    @property
    def in_range(self):
        return 0.0 < self.eta < 0.25


def phi(params, r):
    """``1/r`` for ``r <= e^c`` and ``(log r)^(-eta)`` beyond."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(~(r_arr > 0)):
        raise ValueError("phi is defined for r > 0 only")
    first = r_arr <= math.exp(params.c)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(first, 1.0 / r_arr, np.log(np.maximum(r_arr, 1.0 + 1e-300)) ** (-params.eta))
    return float(out) if np.ndim(r) == 0 else out


def _phi_scaled(eta, c, h, C):
    """``Phi_{eta,c}(h / C) * h`` written to stay finite for tiny ``C``."""
    log_ratio = math.log(h) - math.log(C)
    if log_ratio <= c:
        return C
    return log_ratio ** (-eta) * h


def best_interpolation_value(c, eta, C, h):
    """``min_{s >= 1} e^{cs} C + s^(-eta) h`` and its minimizer."""
    if h == 0.0:
        return math.exp(c) * C, 1.0
    if C == 0.0:
        return 0.0, math.inf

    def slope(s):
        # log of c C e^{cs} minus log of eta h s^{-eta-1}; increasing in s
        return math.log(c * C) + c * s - math.log(eta * h) + (eta + 1.0) * math.log(s)

    if slope(1.0) >= 0:
        s_star = 1.0
    else:
        hi = 2.0 + max(0.0, (math.log(eta * h) - math.log(c * C)) / c)
        s_star = brentq(slope, 1.0, hi, xtol=1e-13, rtol=1e-13)
    return math.exp(c * s_star) * C + s_star ** (-eta) * h, s_star


@dataclass(frozen=True, eq=False)
class LogModulusFit:
    """Constants fitted to a family of ``(L2, H^{1/2}, C)`` triples."""

    constant: float          # the multiplicative constant on the left-hand side
    c: float
    constant_interp: float   # best constant of the s-form at the same c
    fitted: bool
    triples: np.ndarray


def _check_triples(triples):
    arr = np.atleast_2d(np.asarray(triples, dtype=float))
    if arr.shape[1] != 3:
        raise ValueError("triples must have three columns (L2, H1/2, C)")
    for L, H, C in arr:
        if L > 0 and C <= 0:
            raise UniquenessViolation("a nonzero flux produced vanishing Cauchy data; the forward solve failed")
    return arr[arr[:, 0] > 0]


def fit_log_modulus(triples, eta, c_grid=None):
    """Fit ``(constant, c)`` to ``constant * L <= Phi_{eta,c}(H / C) H`` across the family.

    For each ``c`` the best constant is ``min_i Phi(H_i/C_i) H_i / L_i``. The
    fitted ``c`` is the smallest grid value at which that constant is also
    certified by the interpolation form ``e^{cs} C + s^(-eta) H`` for every
    ``s >= 1``, so the fitted pair is consistent with both inequalities.
    """
    arr = _check_triples(triples)
    grid = C_GRID if c_grid is None else np.asarray(c_grid, dtype=float)
    if len(arr) == 0:
        return LogModulusFit(math.inf, float(grid[0]), math.inf, True, arr)
    last = None
    for c in grid:
        k_phi = min(_phi_scaled(eta, c, H, C) / L for L, H, C in arr)
        k_interp = min(best_interpolation_value(c, eta, C, H)[0] / L for L, H, C in arr)
        last = (k_phi, float(c), k_interp)
        if k_phi <= k_interp * (1 + 1e-12):
            return LogModulusFit(k_phi, float(c), k_interp, True, arr)
    return LogModulusFit(last[0], last[1], last[2], False, arr)


def interpolation_check(triples, s_grid, eta, constant, c):
    """Boolean table ``constant * L <= e^{cs} C + s^(-eta) H`` (members x s values)."""
    arr = np.atleast_2d(np.asarray(triples, dtype=float))
    s = np.asarray(s_grid, dtype=float)
    if np.any(s < 1.0):
        raise ValueError("s grid must lie in [1, inf)")
    L, H, C = arr[:, :1], arr[:, 1:2], arr[:, 2:3]
    with np.errstate(over="ignore", invalid="ignore"):
        growth = np.where(C > 0, np.exp(c * s)[None, :] * C, 0.0)  # avoids inf * 0
    rhs = growth + s[None, :] ** (-eta) * H
    return constant * L <= rhs * (1 + 1e-12)


def flux_triple(flux, domain, q_S, q_gamma, loop=None, n_gamma=512):
    """``(||a||_L2(S), ||a||_H^{1/2}(S), C(u(0, a)))`` for a Fourier flux on concentric circles."""
    R0, R1 = domain.inner.radius, domain.outer.radius
    n = np.arange(1, flux.order + 1)
    sq = flux.cos ** 2 + flux.sin ** 2
    l2 = math.sqrt(2 * math.pi * R0 * flux.a0 ** 2 + math.pi * R0 * float(np.sum(sq)))
    h_half = math.sqrt(2 * math.pi * R0 * flux.a0 ** 2
                       + math.pi * R0 * float(np.sum(np.sqrt(1.0 + n ** 2 / R0 ** 2) * sq)))
    loop = loop or circle_loop(R1, n_gamma, TAG_GAMMA, domain.center)
    data = spectral_forward(flux, FourierSeries(boundary=TAG_GAMMA), R0, R1, q_S, q_gamma).sample(loop)
    return l2, h_half, cauchy_C(data)


@dataclass(frozen=True, eq=False)
class LogModulusResult:
    fit: LogModulusFit
    truncated_fit: Optional[LogModulusFit]
    verdict: bool
    eta_in_range: bool
    relative_shift: float

    @property
    def constant(self):
        return self.fit.constant

    @property
    def c(self):
        return self.fit.c


def verify_log_modulus(family, eta, domain=None, q_S=1.0, q_gamma=1.0, truncate=4, triples=None,
                       c_grid=None, n_gamma=512):
    """Fit the modulus on ``family`` and on the family without its last ``truncate`` members.

    Passes iff both fits succeed and the fitted ``c`` moves by at most 20%.
    ``eta`` outside ``(0, 1/4)`` is allowed as a diagnostic and flagged.
    """
    params = PhiParams(eta, 1.0, strict=False)
    if triples is None:
        if not family:
            raise ValueError("the flux family is empty")
        triples = np.array([flux_triple(f, domain, q_S, q_gamma, n_gamma=n_gamma) for f in family])
    triples = np.atleast_2d(np.asarray(triples, dtype=float))
    full = fit_log_modulus(triples, eta, c_grid)
    if len(triples) - truncate < 1:
        return LogModulusResult(full, None, full.fitted, params.in_range, 0.0)
    trunc = fit_log_modulus(triples[:len(triples) - truncate], eta, c_grid)
    shift = abs(trunc.c - full.c) / full.c
    verdict = full.fitted and trunc.fitted and shift <= 0.2
    return LogModulusResult(full, trunc, verdict, params.in_range, shift)


# --------------------------------------------------------------------------
# singular-value sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SigmaRow:
    order: int
    cutoff: float
    sigma_h1: float
    cond_h1: float
    sigma_l2: float
    cond_l2: float


def sigma_min_sweep(grid, domain, q_S=1.0, q_gamma=1.0, backend="spectral", mesh=None, kind="N",
                    n_gamma=512, metric=None):
    """``sigma_min`` and condition numbers on ``W_lambda`` for each grid point.

    ``kind="N"`` interprets the grid as mode orders (``lambda = (N / R0)^2``);
    ``kind="lambda"`` as cutoffs. One forward map is assembled at the largest
    cutoff and restricted for the smaller ones.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("sweep grid must be strictly ascending")
    R0 = domain.inner.radius
    if kind == "N":
        cutoffs = [(check_int(n, "N", min_val=0) / R0) ** 2 for n in grid]
    elif kind == "lambda":
        cutoffs = [float(check_scalar(x, "lambda", min_val=0.0)) for x in grid]
    else:
        raise ValueError(f"kind must be 'N' or 'lambda', got {kind!r}")
    fmap = assemble_forward_map(cutoffs[-1] * (1 + 1e-9), domain, q_S, q_gamma, backend=backend,
                                metric=metric, mesh=mesh, n_gamma=n_gamma)
    rows = []
    for cut in cutoffs:
        keep = fmap.basis.eigenvalues <= cut * (1 + 1e-9)
        cols = fmap.columns[:, keep]
        lam = fmap.basis.eigenvalues[keep]
        out = []
        for t in (1.0, 0.0):
            s = np.linalg.svd(cols / (1.0 + lam) ** (t / 2), compute_uv=False)
            out += [float(s[-1]), float(s[0] / s[-1])]
        order = int(math.floor(math.sqrt(cut) * R0 + 1e-9))
        rows.append(SigmaRow(order, float(cut), *out))
    return rows


def fit_decay_rate(table, norm="L2", start=None):
    """Least-squares slope of ``-ln sigma_min`` against the mode order.

    Uses the upper half of the table unless ``start`` (a mode order) is given.
    """
    if len(table) < 4:
        raise ValueError("decay fit needs at least 4 sweep rows")
    sig = np.array([r.sigma_l2 if norm == "L2" else r.sigma_h1 for r in table])
    if np.any(sig <= 0):
        raise ValueError("sigma table contains nonpositive entries")
    order = np.array([r.order for r in table], dtype=float)
    sel = order >= start if start is not None else np.arange(len(table)) >= len(table) // 2
    if sel.sum() < 2:
        raise ValueError("decay fit window holds fewer than 2 rows")
    return float(np.polyfit(order[sel], -np.log(sig[sel]), 1)[0])


# --------------------------------------------------------------------------
# Lipschitz check
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzResult:
    constant: float           # min of C(u) / ||a||_{H1}
    constant_stacked: float   # same with the stacked data norm
    sigma_min: float          # SVD value in the H1 convention
    verdict: bool
    samples: int
    rejected: int


def lipschitz_check(cutoff, M, samples, domain, q_S=1.0, q_gamma=1.0, seed=0, backend="spectral",
                    mesh=None, max_rejections=1000, fmap=None, n_gamma=512):
    """Sample fluxes in ``W_lambda`` and compare the worst data ratio with ``sigma_min``.

    The samples are every basis function followed by random combinations;
    samples outside ``A_M`` are rejected and redrawn.
    """
    from .boundary import in_A, sobolev_norm
    check_int(samples, "samples", min_val=1)
    if fmap is None:
        fmap = assemble_forward_map(cutoff, domain, q_S, q_gamma, backend=backend, mesh=mesh,
                                    n_gamma=n_gamma)
    basis = fmap.basis
    n = fmap.loop.n
    rng = np.random.default_rng(seed)
    ratios, stacked = [], []
    rejected = 0
    k = 0
    while len(ratios) < samples:
        if k < basis.size:
            coef = np.eye(basis.size)[k]
        else:
            coef = rng.standard_normal(basis.size)
        k += 1
        flux = basis.synthesize(coef)
        if not in_A(flux, M)[0]:
            rejected += 1
            if rejected > max_rejections:
                raise RuntimeError(f"more than {max_rejections} samples fell outside A_M with M={M}")
            continue
        vec = fmap.data_vector(coef)
        h1 = sobolev_norm(flux, 1.0, basis)
        ratios.append(float(cauchy_C_from_vector(vec, n)) / h1)
        stacked.append(float(np.linalg.norm(vec)) / h1)
    sigma = fmap.sigma_min("H1")
    c_emp = min(ratios)
    return LipschitzResult(c_emp, min(stacked), sigma, bool(c_emp >= 0.99 * sigma), len(ratios), rejected)


# --------------------------------------------------------------------------
# audits on the forward problem
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MaxPrincipleRecord:
    min_u_q: float
    min_u_kappa: float
    min_v: float
    verdict: bool


def _check_nonnegative_data(problem, mesh):
    for tag in (TAG_S, TAG_GAMMA):
        vals = nodal_values(problem.spec("flux", tag), mesh, tag)
        if np.any(vals < 0):
            raise PreconditionError(f"flux on {tag} has a negative part (min {vals.min():.3g})")
    bary = mesh.vertices[mesh.triangles].mean(axis=1)
    src = problem.source
    f = np.asarray(src(bary[:, 0], bary[:, 1]) if callable(src) else np.full(len(bary), float(src)))
    if np.any(f < 0):
        raise PreconditionError("source has a negative part")
    if not (np.any(f) or any(np.any(nodal_values(problem.spec("flux", t), mesh, t)) for t in (TAG_S, TAG_GAMMA))):
        raise PreconditionError("(f, a) = (0, 0)")


def max_principle_audit(problem, mesh, kappa=None):
    """Compare ``u_q`` with the reference ``u_kappa`` (``q = kappa`` on both boundaries)."""
    kappa = kappa if kappa is not None else problem.kappa
    if kappa is None:
        raise PreconditionError("max principle audit needs kappa")
    _check_nonnegative_data(problem, mesh)
    for tag in (TAG_S, TAG_GAMMA):
        q = nodal_values(problem.spec("q", tag), mesh, tag)
        if np.any(q < 0) or np.any(q > kappa * (1 + 1e-12)):
            raise PreconditionError(f"q on {tag} leaves [0, kappa]")
    u_q = forward_solve(problem, mesh).nodal_values
    u_k = forward_solve(problem.with_(q_S=float(kappa), q_gamma=float(kappa)), mesh).nodal_values
    rec = MaxPrincipleRecord(float(u_q.min()), float(u_k.min()), float((u_q - u_k).min()), False)
    ok = rec.min_u_q >= rec.min_u_kappa - 1e-8 and rec.min_u_kappa > 0 and rec.min_v >= -1e-8
    return MaxPrincipleRecord(rec.min_u_q, rec.min_u_kappa, rec.min_v, bool(ok))


def energy_ratio(problem, mesh):
    """``||u||_{H1(D)} / (||f||_{L2(D)} + ||a||_{L2(dD)})`` or ``None`` for zero data."""
    denom = source_l2_norm(problem, mesh) + flux_l2_norm(problem, mesh)
    if denom == 0.0:
        return None
    sol = forward_solve(problem, mesh)
    return domain_h1_norm(sol.nodal_values, sol.mesh) / denom


def energy_estimate_audit(batch, mesh):
    """Worst energy ratio over a batch of problems (zero-data members skipped)."""
    if not batch:
        raise ValueError("empty batch")
    ratios = [r for r in (energy_ratio(p, mesh) for p in batch) if r is not None]
    if not ratios:
        raise ValueError("every batch member has zero data")
    return float(max(ratios))


def energy_refinement_audit(batch, mesh, refined_mesh, tol=0.1):
    """Worst ratio on two meshes; passes when they agree within ``tol``."""
    coarse = energy_estimate_audit(batch, mesh)
    fine = energy_estimate_audit(batch, refined_mesh)
    return coarse, fine, bool(abs(fine - coarse) <= tol * coarse)


def random_flux_batch(count, order=6, seed=0, q_S=1.0, q_gamma=1.0):
    """Problems with random band-limited fluxes on both boundaries and ``f = 0``."""
    rng = np.random.default_rng(seed)
    batch = []
    for _ in range(count):
        fluxes = []
        for tag in (TAG_S, TAG_GAMMA):
            coef = rng.standard_normal((3, order))
            fluxes.append(FourierSeries(coef[0, 0], coef[1], coef[2], tag))
        batch.append(RobinProblem(q_S=q_S, q_gamma=q_gamma, flux_S=fluxes[0], flux_gamma=fluxes[1]))
    return batch


@dataclass(frozen=True)
class SupBoundRecord:
    sups: tuple
    boundary_sups: tuple
    spread: float
    verdict: bool


def sup_bound_audit(problem, mesh, family, tol=0.1):
    """Nodal sup of ``|u_q|`` across a family of ``(q_S, q_gamma)`` pairs with fixed data.

    ``spread = (max - min) / (max + min)``; the audit passes when it is at
    most ``tol``, i.e. every sup lies within ``tol`` of the common midpoint.
    """
    _check_nonnegative_data(problem, mesh)
    sups, bsups = [], []
    bnodes = np.concatenate([mesh.loop_vertices(TAG_S), mesh.loop_vertices(TAG_GAMMA)])
    for q_s, q_g in family:
        u = forward_solve(problem.with_(q_S=q_s, q_gamma=q_g), mesh).nodal_values
        sups.append(float(np.abs(u).max()))
        bsups.append(float(np.abs(u[bnodes]).max()))
    hi, lo = max(sups), min(sups)
    spread = (hi - lo) / (hi + lo)
    return SupBoundRecord(tuple(sups), tuple(bsups), float(spread), bool(spread <= tol))


def coefficient_family():
    """The admissible test family used by the audits (``kappa = 1``, ``q_Gamma = 1``)."""
    return [(0.2, 1.0), (1.0, 1.0), (lambda th: 0.5 + 0.3 * np.cos(2 * th), 1.0)]


def corrosion_stability_triples(pairs, problem, mesh):
    """``(||q1 - q2||_L2(S), 1, C(u1 - u2))`` for pairs of coefficients with fixed data."""
    from .fem import extract_cauchy
    from .boundary import BoundaryLoop
    loop_s = BoundaryLoop.from_mesh(mesh, TAG_S)
    rows = []
    for q1, q2 in pairs:
        d1 = extract_cauchy(forward_solve(problem.with_(q_S=q1), mesh))
        d2 = extract_cauchy(forward_solve(problem.with_(q_S=q2), mesh))
        diff = loop_s.field(nodal_values(q1, mesh, TAG_S) - nodal_values(q2, mesh, TAG_S))
        rows.append((l2_norm(diff), 1.0, cauchy_C(d1 - d2)))
    return np.array(rows)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

@dataclass(eq=False)
class StabilityReport:
    """Sweep table, fitted constants, audit values and named verdicts."""

    sigma_table: list
    fitted: dict = field(default_factory=dict)
    audits: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    modulus_points: Optional[np.ndarray] = None
    eta: Optional[float] = None


def run_stability(domain, grid, eta=0.125, q_S=1.0, q_gamma=1.0, family_orders=None, backend="spectral",
                  mesh=None, audit_mesh=None, lipschitz_cutoff=25.0, lipschitz_samples=50, seed=0,
                  n_gamma=512):
    """Sweep, fits and audits for one geometry; returns a :class:`StabilityReport`."""
    table = sigma_min_sweep(grid, domain, q_S, q_gamma, backend=backend, mesh=mesh, n_gamma=n_gamma)
    report = StabilityReport(table, eta=eta)
    if len(table) >= 4:
        slope = fit_decay_rate(table)
        report.fitted["decay_slope"] = slope
        target = math.log(domain.outer.radius / domain.inner.radius)
        report.verdicts.append(("decay_slope", abs(slope - target) <= 0.15 * target))
    else:
        report.fitted["decay_slope"] = None
    orders = list(family_orders) if family_orders is not None else [n for n in grid if n >= 2]
    if orders:
        family = [FourierSeries.mode(n, "c") for n in orders]
        res = verify_log_modulus(family, eta, domain, q_S, q_gamma, n_gamma=n_gamma)
        report.fitted.update(constant=res.constant, c=res.c, constant_interp=res.fit.constant_interp,
                             c_truncated=res.truncated_fit.c if res.truncated_fit else res.c)
        report.verdicts.append(("log_modulus", res.verdict))
        tbl = interpolation_check(res.fit.triples, np.geomspace(1, 1e3, 40), eta, res.constant, res.c)
        report.verdicts.append(("interpolation_check", bool(tbl.all())))
        report.modulus_points = res.fit.triples
    lip = lipschitz_check(lipschitz_cutoff, math.sqrt(lipschitz_cutoff), lipschitz_samples, domain, q_S,
                          q_gamma, seed=seed, n_gamma=n_gamma) if backend == "spectral" else None
    if lip is not None:
        report.audits.update(lipschitz_constant=lip.constant, lipschitz_sigma_min=lip.sigma_min)
        report.verdicts.append(("lipschitz", lip.verdict))
    if audit_mesh is not None:
        base = RobinProblem(q_S=1.0, q_gamma=1.0, flux_gamma=1.0, kappa=1.0)
        fam = coefficient_family()
        mp = [max_principle_audit(base.with_(q_S=qs, q_gamma=qg), audit_mesh) for qs, qg in fam]
        report.audits["lower_bound_min_u_kappa"] = mp[0].min_u_kappa
        report.audits["lower_bound_min_v"] = min(r.min_v for r in mp)
        report.verdicts.append(("max_principle", all(r.verdict for r in mp)))
        sup = sup_bound_audit(base, audit_mesh, fam)
        report.audits["sup_bound_max"] = max(sup.sups)
        report.audits["sup_bound_spread"] = sup.spread
        report.verdicts.append(("sup_bound", sup.verdict))
        ratio = energy_estimate_audit(random_flux_batch(20, seed=seed), audit_mesh)
        report.audits["energy_ratio"] = ratio
        loop = audit_mesh.loop(TAG_S)
        basis = lb_eigenbasis(loop)
        probe = multiplication_bound_probe(loop.field(np.cos), 0, basis, band_limit=min(32, (loop.n - 1) // 4))
        report.audits["multiplier_ratio"] = probe.ratio
    return report


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "pass" if x else "fail"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_report(report, outdir):
    """Write ``sweep.csv``, ``fit.csv``, ``audits.csv``, ``sweep.svg`` and ``modulus.svg``."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "sweep.csv"), "w", encoding="ascii", newline="\n") as fh:
        fh.write("N,lambda,sigma_min_H1,cond_H1,sigma_min_L2,cond_L2\n")
        for r in report.sigma_table:
            fh.write(",".join(_fmt(v) for v in (r.order, r.cutoff, r.sigma_h1, r.cond_h1, r.sigma_l2,
                                                r.cond_l2)) + "\n")
    with open(os.path.join(outdir, "fit.csv"), "w", encoding="ascii", newline="\n") as fh:
        fh.write("name,value\n")
        if report.fitted.get("decay_slope") is None:
            fh.write("notice,decay fit skipped: fewer than 4 sweep rows\n")
        for key in sorted(report.fitted):
            if report.fitted[key] is not None:
                fh.write(f"{key},{_fmt(report.fitted[key])}\n")
    with open(os.path.join(outdir, "audits.csv"), "w", encoding="ascii", newline="\n") as fh:
        fh.write("name,value\n")
        for key in sorted(report.audits):
            fh.write(f"{key},{_fmt(report.audits[key])}\n")
        for name, ok in sorted(report.verdicts):
            fh.write(f"verdict_{name},{_fmt(bool(ok))}\n")
    with open(os.path.join(outdir, "sweep.svg"), "w", encoding="ascii", newline="\n") as fh:
        fh.write(sweep_svg(report.sigma_table))
    with open(os.path.join(outdir, "modulus.svg"), "w", encoding="ascii", newline="\n") as fh:
        fh.write(modulus_svg(report))


_W, _H, _PAD = 480, 320, 50


def _polyline(xs, ys, color):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>\n'


def _frame(title, xlabel, ylabel):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">\n'
            f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>\n'
            f'<rect x="{_PAD}" y="{_PAD // 2}" width="{_W - 1.5 * _PAD:.0f}" height="{_H - 1.5 * _PAD:.0f}" '
            'fill="none" stroke="black"/>\n'
            f'<text x="{_W / 2:.0f}" y="16" text-anchor="middle" font-size="13">{title}</text>\n'
            f'<text x="{_W / 2:.0f}" y="{_H - 8}" text-anchor="middle" font-size="12">{xlabel}</text>\n'
            f'<text x="14" y="{_H / 2:.0f}" font-size="12" transform="rotate(-90 14 {_H / 2:.0f})" '
            f'text-anchor="middle">{ylabel}</text>\n')


def _scale(vals, lo_px, hi_px):
    lo, hi = float(np.min(vals)), float(np.max(vals))
    span = hi - lo if hi > lo else 1.0
    return lo_px + (np.asarray(vals) - lo) / span * (hi_px - lo_px)


def sweep_svg(table):
    """Log-scale ``sigma_min`` against the mode order, both norm conventions."""
    out = _frame("smallest singular value", "N", "log10 sigma_min")
    if table:
        n = np.array([r.order for r in table], dtype=float)
        x = _scale(n, _PAD + 10, _W - _PAD / 2 - 10)
        series = [np.log10([r.sigma_l2 for r in table]), np.log10([r.sigma_h1 for r in table])]
        y_all = _scale(np.concatenate(series), _H - _PAD - 10, _PAD / 2 + 10)
        for k, color in enumerate(("#1f4e9c", "#b03a2e")):
            py = y_all[k * len(table):(k + 1) * len(table)]
            out += _polyline(x, py, color)
            for xi, yi in zip(x, py):
                out += f'<circle cx="{xi:.2f}" cy="{yi:.2f}" r="2.5" fill="{color}"/>\n'
        out += f'<text x="{_W - _PAD}" y="40" text-anchor="end" font-size="11" fill="#1f4e9c">L2</text>\n'
        out += f'<text x="{_W - _PAD}" y="54" text-anchor="end" font-size="11" fill="#b03a2e">H1</text>\n'
    return out + "</svg>\n"


def modulus_svg(report):
    """``log10 Phi(r)`` against ``log r`` with the family points ``(log(H/C), log10(constant L / H))``."""
    out = _frame("logarithmic modulus", "log(H / C)", "log10 Phi")
    pts = report.modulus_points
    c = report.fitted.get("c")
    if pts is not None and len(pts) and c is not None:
        L, H, C = pts[:, 0], pts[:, 1], pts[:, 2]
        logr = np.log(H) - np.log(C)
        grid = np.linspace(min(0.0, float(logr.min())), max(float(logr.max()) * 1.05, c * 1.5), 200)
        curve = np.array([math.log10(_phi_scaled(report.eta, c, 1.0, math.exp(-g))) for g in grid])
        data = np.log10(report.fitted["constant"] * L / H)
        x = _scale(np.concatenate([grid, logr]), _PAD + 10, _W - _PAD / 2 - 10)
        y = _scale(np.concatenate([curve, data]), _H - _PAD - 10, _PAD / 2 + 10)
        out += _polyline(x[:len(grid)], y[:len(grid)], "#1f4e9c")
        for xi, yi in zip(x[len(grid):], y[len(grid):]):
            out += f'<circle cx="{xi:.2f}" cy="{yi:.2f}" r="2.5" fill="#b03a2e"/>\n'
    return out + "</svg>\n"


__all__ = ["PhiParams", "phi", "fit_log_modulus", "verify_log_modulus", "interpolation_check",
           "best_interpolation_value", "flux_triple", "LogModulusFit", "LogModulusResult",
           "SigmaRow", "sigma_min_sweep", "fit_decay_rate", "LipschitzResult", "lipschitz_check",
           "MaxPrincipleRecord", "max_principle_audit", "energy_ratio", "energy_estimate_audit",
           "energy_refinement_audit", "random_flux_batch", "SupBoundRecord", "sup_bound_audit",
           "coefficient_family", "corrosion_stability_triples", "StabilityReport", "run_stability",
           "write_report", "sweep_svg", "modulus_svg", "C_GRID"]
