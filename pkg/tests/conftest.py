import numpy as np
import pytest

from esdgsem import thermo

ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def air_helium():
    return thermo.MixtureParams((1.5, 1.3), (1.0, 1.0))


@pytest.fixture
def three_species():
    # reference species (smallest r) sits in the middle of the user order
    return thermo.MixtureParams((1.6, 1.2, 1.4), (2.0, 1.5, 1.0))


def random_states(params, rng, n, dim=1, decades=6):
    """Admissible conserved states with rho and p spread over ``decades``."""
    nc = params.n_species
    Y = rng.dirichlet(np.ones(nc), size=n).T
    rho = 10.0 ** rng.uniform(-decades / 2, decades / 2, n)
    p = 10.0 ** rng.uniform(-decades / 2, decades / 2, n)
    v = rng.normal(size=(dim, n)) * np.sqrt(p / rho)
    return thermo.prim_to_cons(params, Y, rho, v, p)


def entropy_residual(params, uL, uR, h, n):
    """([[eta']] . h - [[psi . n]], scale) for columns of states."""
    wL = thermo.entropy_vars(params, uL)
    wR = thermo.entropy_vars(params, uR)
    psiL = thermo.entropy_potential(params, uL)
    psiR = thermo.entropy_potential(params, uR)
    nn = n.reshape(n.shape + (1,) * (uL.ndim - 1))
    jump_psi = np.sum((psiR - psiL) * nn, axis=0)
    res = np.sum((wR - wL) * h, axis=0) - jump_psi
    scale = np.sum(np.abs(wR - wL) * np.abs(h), axis=0) + np.abs(jump_psi) + 1e-300
    return res, scale
