"""Forward and inverse Robin problems on annular domains."""

from .exceptions import *  # noqa: F401,F403
from .geometry import AnnularDomain, MetricTensor, Mesh, StarCurve, build_annular_mesh
from .boundary import BoundaryField, BoundaryLoop, CauchyData, EigenBasis, lb_eigenbasis
from .spectral import FourierSeries, spectral_forward
from .fem import RobinProblem, assemble, extract_cauchy, forward_solve, solve

__version__ = "0.1.0"
