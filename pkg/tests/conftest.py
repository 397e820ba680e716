import numpy as np
import pytest

from peridyn import CellGeometry, CellGrid, MacroGrid, Microstructure, PhaseParams


def hetero_micro(dim=1, delta=0.25, gamma=0.25, r_f=0.25):
    """Two-phase microstructure with stiff heavy inclusions, wide horizon."""
    return Microstructure(
        CellGeometry(dim=dim, shape="ball", r_f=r_f),
        PhaseParams(
            c_f=10.0, c_m=1.0, c_i=3.0, rho_f=2.0, rho_m=1.0,
            delta=delta, lam=1.0, gamma=gamma,
        ),
    )


def homogeneous_micro(dim=1, c=0.0, rho=1.5, delta=0.25, gamma=0.25):
    """Single-phase limit: equal bond constants and densities."""
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Microstructure(
            CellGeometry(dim=dim, shape="ball", r_f=0.25),
            PhaseParams(
                c_f=c, c_m=c, c_i=c, rho_f=rho, rho_m=rho,
                delta=delta, lam=1.0, gamma=gamma,
            ),
        )


@pytest.fixture
def micro1d():
    return hetero_micro()


@pytest.fixture
def grid32():
    return MacroGrid((0.0,), (1.0,), (32,))


@pytest.fixture
def cell16():
    return CellGrid(1, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
