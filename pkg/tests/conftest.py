import numpy as np
import pytest

from robinlab import AnnularDomain, build_annular_mesh
from robinlab.spectral import FourierSeries, solve_modes, spectral_field

# radial benchmark: circles 1 and 2, q = 1 on both, unit flux on Gamma
RADIAL_ALPHA = 1.0 / (1.5 + np.log(2.0))


@pytest.fixture(scope="session")
def domain():
    return AnnularDomain.circles(1.0, 2.0)


@pytest.fixture(scope="session")
def coarse_mesh(domain):
    return build_annular_mesh(domain, 8, 64)


@pytest.fixture(scope="session")
def medium_mesh(domain):
    return build_annular_mesh(domain, 18, 224)


@pytest.fixture(scope="session")
def radial_exact():
    modes = solve_modes(FourierSeries(), FourierSeries(1.0), 1.0, 2.0, 1.0, 1.0)
    return lambda x, y: spectral_field(modes, np.hypot(x, y), np.arctan2(y, x), clip=True)
