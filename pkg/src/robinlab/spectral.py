"""Separation-of-variables solutions on concentric circles.

For ``-Delta u = 0`` in ``R0 < r < R1`` with constant Robin coefficients,
each Fourier mode decouples:

    u_0 = alpha_0 + beta_0 log r,     u_n = (alpha_n r^n + beta_n r^-n) cos/sin(n theta).

The outward normal is ``-e_r`` on the inner circle and ``+e_r`` on the outer
one, so each mode solves a 2x2 system

    -u_n'(R0) + q_S u_n(R0) = a_S,n ,     u_n'(R1) + q_G u_n(R1) = a_G,n .
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int, check_scalar
from .boundary import BoundaryLoop, CauchyData
from .exceptions import CoercivityError, GeometryError
from .geometry import TAG_GAMMA, TAG_S


@dataclass(frozen=True, eq=False)
class FourierSeries:
    """Truncated series ``a0 + sum_n (cos[n-1] cos n theta + sin[n-1] sin n theta)``."""

    a0: float = 0.0
    cos: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sin: np.ndarray = field(default_factory=lambda: np.zeros(0))
    boundary: str = TAG_S

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.cos, dtype=float))
        s = np.atleast_1d(np.asarray(self.sin, dtype=float))
        n = max(len(c), len(s))
        c = np.pad(c, (0, n - len(c)))
        s = np.pad(s, (0, n - len(s)))
        object.__setattr__(self, "cos", c)
        object.__setattr__(self, "sin", s)
        object.__setattr__(self, "a0", float(self.a0))

    @classmethod
    def mode(cls, n, kind="c", amplitude=1.0, boundary=TAG_S):
        check_int(n, "n", min_val=0)
        if n == 0:
            return cls(a0=amplitude, boundary=boundary)
        coef = np.zeros(n)
        coef[n - 1] = amplitude
        if kind == "c":
            return cls(cos=coef, boundary=boundary)
        if kind == "s":
            return cls(sin=coef, boundary=boundary)
        raise ValueError(f"kind must be 'c' or 's', got {kind!r}")

    @classmethod
    def constant(cls, value, boundary=TAG_S):
        return cls(a0=value, boundary=boundary)

    @property
    def order(self):
        return len(self.cos)

    def padded(self, order):
        return FourierSeries(self.a0, np.pad(self.cos, (0, max(0, order - self.order))),
                             np.pad(self.sin, (0, max(0, order - self.order))), self.boundary)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full_like(theta, self.a0)
        for n in range(1, self.order + 1):
            out = out + self.cos[n - 1] * np.cos(n * theta) + self.sin[n - 1] * np.sin(n * theta)
        return out

    def derivative(self):
        """Series of ``d/dtheta``."""
        n = np.arange(1, self.order + 1)
        return FourierSeries(0.0, n * self.sin, -n * self.cos, self.boundary)

    def scale(self, factor):
        return FourierSeries(factor * self.a0, factor * self.cos, factor * self.sin, self.boundary)

    def is_zero(self):
        return self.a0 == 0 and not np.any(self.cos) and not np.any(self.sin)

    def rows(self):
        """``(n, kind, coef)`` rows for the CSV dump; the mean is reported as kind ``c``."""
        out = [(0, "c", self.a0)]
        for n in range(1, self.order + 1):
            out.append((n, "c", float(self.cos[n - 1])))
            out.append((n, "s", float(self.sin[n - 1])))
        return out


FourierFlux = FourierSeries


def solve_mode(n, R0, R1, q_S, q_G, rhs):
    """Solve the 2x2 Robin system of mode ``n``; returns ``(alpha_n, beta_n)``."""
    check_int(n, "n", min_val=0)
    check_scalar(R0, "R0", min_val=0.0, include_min=False)
    check_scalar(R1, "R1", min_val=0.0, include_min=False)
    if R1 <= R0:
        raise GeometryError(f"need R1 > R0 > 0, got R0={R0}, R1={R1}")
    check_scalar(q_S, "q_S", min_val=0.0)
    check_scalar(q_G, "q_G", min_val=0.0)
    a_s, a_g = rhs
    R0, R1 = float(R0), float(R1)
    if n == 0:
        if q_S == 0 and q_G == 0:
            raise CoercivityError("mode 0 with q_S = q_G = 0 is a pure Neumann problem")
        mat = np.array([[q_S, -1.0 / R0 + q_S * np.log(R0)],
                        [q_G, 1.0 / R1 + q_G * np.log(R1)]])
    else:
        mat = np.array([[(q_S - n / R0) * R0 ** n, (q_S + n / R0) * R0 ** (-n)],
                        [(q_G + n / R1) * R1 ** n, (q_G - n / R1) * R1 ** (-n)]])
    det = np.linalg.det(mat)
    if abs(det) <= 1e-300 or not np.isfinite(det):
        raise CoercivityError(f"singular Robin system for mode {n}")
    alpha, beta = np.linalg.solve(mat, np.array([a_s, a_g], dtype=float))
    return float(alpha), float(beta)


def _radial(n, alpha, beta, r):
    if n == 0:
        return alpha + beta * np.log(r), beta / r
    return (alpha * r ** n + beta * r ** (-n),
            n * alpha * r ** (n - 1) - n * beta * r ** (-n - 1))


def mode_residual(n, alpha, beta, R0, R1, q_S, q_G, rhs):
    """Residuals of both Robin equations after resubstitution."""
    u0, du0 = _radial(n, alpha, beta, R0)
    u1, du1 = _radial(n, alpha, beta, R1)
    return (-du0 + q_S * u0 - rhs[0], du1 + q_G * u1 - rhs[1])


@dataclass(frozen=True, eq=False)
class ModeSolution:
    """Coefficients of every mode; index ``n - 1`` for ``n >= 1``."""

    R0: float
    R1: float
    alpha0: float
    beta0: float
    alpha_c: np.ndarray
    beta_c: np.ndarray
    alpha_s: np.ndarray
    beta_s: np.ndarray

    @property
    def order(self):
        return len(self.alpha_c)

    def radial_series(self, r):
        """Fourier series in ``theta`` of ``u(r, .)`` and ``d_r u(r, .)`` at a fixed radius."""
        r = float(r)
        u0, du0 = _radial(0, self.alpha0, self.beta0, r)
        n = np.arange(1, self.order + 1, dtype=float)
        uc = self.alpha_c * r ** n + self.beta_c * r ** (-n)
        us = self.alpha_s * r ** n + self.beta_s * r ** (-n)
        duc = n * self.alpha_c * r ** (n - 1) - n * self.beta_c * r ** (-n - 1)
        dus = n * self.alpha_s * r ** (n - 1) - n * self.beta_s * r ** (-n - 1)
        return FourierSeries(u0, uc, us), FourierSeries(du0, duc, dus)


def solve_modes(flux_S, flux_G, R0, R1, q_S, q_G):
    """Mode-by-mode solution for fluxes given as :class:`FourierSeries`."""
    order = max(flux_S.order, flux_G.order)
    fs, fg = flux_S.padded(order), flux_G.padded(order)
    a0, b0 = solve_mode(0, R0, R1, q_S, q_G, (fs.a0, fg.a0))
    coef = np.zeros((4, order))
    for n in range(1, order + 1):
        coef[0:2, n - 1] = solve_mode(n, R0, R1, q_S, q_G, (fs.cos[n - 1], fg.cos[n - 1]))
        coef[2:4, n - 1] = solve_mode(n, R0, R1, q_S, q_G, (fs.sin[n - 1], fg.sin[n - 1]))
    return ModeSolution(float(R0), float(R1), a0, b0, coef[0], coef[1], coef[2], coef[3])


@dataclass(frozen=True, eq=False)
class SpectralCauchy:
    """Cauchy data on the outer circle in Fourier form."""

    radius: float
    trace: FourierSeries
    conormal: FourierSeries          # d_r u(R1, .)
    conormal_robin: FourierSeries    # a_Gamma - q_Gamma u(R1, .)
    modes: ModeSolution

    def tangential(self):
        return self.trace.derivative().scale(1.0 / self.radius)

    def sample(self, loop):
        """Nodal :class:`CauchyData` on ``loop`` (nodes assumed on the outer circle)."""
        theta = loop.angles
        return CauchyData.from_trace(loop.field(self.trace(theta)), loop.field(self.conormal(theta)))


def spectral_forward(flux_S, flux_G, R0, R1, q_S, q_G):
    """Exact Cauchy data on ``r = R1`` for constant Robin coefficients and ``f = 0``."""
    modes = solve_modes(flux_S, flux_G, R0, R1, q_S, q_G)
    trace, deriv = modes.radial_series(R1)
    fg = flux_G.padded(trace.order)
    robin = FourierSeries(fg.a0 - q_G * trace.a0, fg.cos - q_G * trace.cos,
                          fg.sin - q_G * trace.sin, TAG_GAMMA)
    trace = FourierSeries(trace.a0, trace.cos, trace.sin, TAG_GAMMA)
    deriv = FourierSeries(deriv.a0, deriv.cos, deriv.sin, TAG_GAMMA)
    return SpectralCauchy(float(R1), trace, deriv, robin, modes)


def spectral_field(modes, r, theta, clip=False):
    """Evaluate the series solution at polar coordinates ``(r, theta)``.

    With ``clip=True`` radii are clamped into ``[R0, R1]``, which is what
    error norms on polygonal meshes need near the curved boundary.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if clip:
        r = np.clip(r, modes.R0, modes.R1)
    elif np.any(r < modes.R0 * (1 - 1e-12)) or np.any(r > modes.R1 * (1 + 1e-12)):
        raise GeometryError(f"radius outside the annulus [{modes.R0}, {modes.R1}]")
    out = modes.alpha0 + modes.beta0 * np.log(r)
    for n in range(1, modes.order + 1):
        rn, rmn = r ** n, r ** (-n)
        out = out + (modes.alpha_c[n - 1] * rn + modes.beta_c[n - 1] * rmn) * np.cos(n * theta)
        out = out + (modes.alpha_s[n - 1] * rn + modes.beta_s[n - 1] * rmn) * np.sin(n * theta)
    return out


def spectral_gradient(modes, x, y, center=(0.0, 0.0)):
    """Cartesian gradient of the series solution (radii clamped into the annulus)."""
    dx, dy = np.asarray(x) - center[0], np.asarray(y) - center[1]
    r = np.clip(np.hypot(dx, dy), modes.R0, modes.R1)
    th = np.arctan2(dy, dx)
    ur = modes.beta0 / r
    ut = np.zeros_like(r)
    for n in range(1, modes.order + 1):
        c, s = np.cos(n * th), np.sin(n * th)
        ac, bc = modes.alpha_c[n - 1], modes.beta_c[n - 1]
        as_, bs = modes.alpha_s[n - 1], modes.beta_s[n - 1]
        radial_c = n * ac * r ** (n - 1) - n * bc * r ** (-n - 1)
        radial_s = n * as_ * r ** (n - 1) - n * bs * r ** (-n - 1)
        val_c = ac * r ** n + bc * r ** (-n)
        val_s = as_ * r ** n + bs * r ** (-n)
        ur = ur + radial_c * c + radial_s * s
        ut = ut + n * (-val_c * s + val_s * c) / r
    return (ur * np.cos(th) - ut * np.sin(th), ur * np.sin(th) + ut * np.cos(th))


def circle_loop(radius, n_nodes, tag=TAG_GAMMA, center=(0.0, 0.0)):
    """Equispaced polygonal loop on a circle, node 0 at angle 0."""
    phi = 2 * np.pi * np.arange(n_nodes) / n_nodes
    pts = np.stack([center[0] + radius * np.cos(phi), center[1] + radius * np.sin(phi)], axis=1)
    return BoundaryLoop.from_points(pts, tag, center)


__all__ = ["FourierSeries", "FourierFlux", "ModeSolution", "SpectralCauchy", "solve_mode",
           "solve_modes", "mode_residual", "spectral_forward", "spectral_field",
           "spectral_gradient", "circle_loop"]
