import numpy as np
import pytest

from esdgsem import dgsem, mesh, thermo, time
from esdgsem.errors import MeshMismatch, StepLimitExceeded
from esdgsem.fluxes import FluxConfig


@pytest.mark.parametrize("name", sorted(time.SSP_TABLES))
def test_ssp_tables_are_convex(name):
    alpha, beta = time.SSP_TABLES[name]
    for a_row, b_row in zip(alpha, beta):
        assert sum(a_row) == pytest.approx(1.0, abs=1e-14)
        assert min(a_row) >= 0.0 and min(b_row) >= 0.0
        # every stage is a convex combination of forward Euler steps
        for a, b in zip(a_row, b_row):
            assert b == 0.0 or a > 0.0


@pytest.mark.parametrize("name,order", [("euler", 1), ("ssprk34", 3), ("ssprk45", 4)])
def test_order_on_linear_ode(name, order):
    lam = np.array([-1.0, -0.3])

    def rhs(u):
        return lam * u

    errs = []
    for n in (20, 40, 80):
        u = np.ones(2)
        dt = 1.0 / n
        for _ in range(n):
            u = time.ssp_step(u, rhs, dt, name)
        errs.append(np.max(np.abs(u - np.exp(lam))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > order - 0.15)


def test_order_on_nonlinear_ode():
    def rhs(u):
        return -u * u

    errs = []
    for n in (10, 20, 40):
        u = np.ones(1)
        for _ in range(n):
            u = time.ssp_step(u, rhs, 1.0 / n, "ssprk45")
        errs.append(abs(u[0] - 0.5))
    assert np.log2(errs[1] / errs[2]) > 3.8


def _uniform_field(P, n=8, p=3):
    m = mesh.build_interval(n, 0.0, 1.0, "periodic")
    disc = dgsem.discretization(m, P, FluxConfig(), dgsem.build_sbp(p))
    u0 = thermo.prim_to_cons(P, np.array([0.3, 0.7]), np.array(1.1), np.array([0.5]), np.array(0.9))
    return dgsem.SolutionField(np.broadcast_to(u0[:, None, None], (4, n, p + 1)).copy(), disc), m


@pytest.mark.parametrize("integrator", ["ssprk34", "ssprk45"])
def test_uniform_state_is_bitwise_steady(air_helium, integrator):
    fld, m = _uniform_field(air_helium)
    res = time.integrate(fld, m, air_helium, time.TimeConfig(integrator=integrator, t_end=0.3))
    np.testing.assert_array_equal(res.field.U, fld.U)
    assert res.field.t == 0.3
    assert res.stats.steps > 1 and res.stats.limiter_activations == 0


def test_callback_and_step_limit(air_helium):
    fld, m = _uniform_field(air_helium)
    seen = []
    time.integrate(fld, m, air_helium, time.TimeConfig(t_end=0.1), lambda k, f, s: seen.append((k, f.t)))
    assert [k for k, _ in seen] == list(range(1, len(seen) + 1))
    assert seen[-1][1] == pytest.approx(0.1)
    with pytest.raises(StepLimitExceeded):
        time.integrate(fld, m, air_helium, time.TimeConfig(t_end=1.0, max_steps=3))


def test_fixed_dt_hits_final_time(air_helium):
    fld, m = _uniform_field(air_helium)
    res = time.integrate(fld, m, air_helium, time.TimeConfig(t_end=0.1, dt=0.03))
    assert res.stats.steps == 4
    assert res.stats.dt_min == pytest.approx(0.01)
    assert res.field.t == 0.1


def test_time_config_validation():
    with pytest.raises(ValueError):
        time.TimeConfig(integrator="rk4")
    with pytest.raises(ValueError):
        time.TimeConfig(cfl_practical=0.7)
    with pytest.raises(ValueError):
        time.TimeConfig(dt=-1.0)


def test_entropy_budget(air_helium):
    fld, m = _uniform_field(air_helium)
    assert time.entropy_budget(fld, m, air_helium, fld) == 0.0
    other, m2 = _uniform_field(air_helium)
    with pytest.raises(MeshMismatch):
        time.entropy_budget(fld, m, air_helium, other)
    coarse, _ = _uniform_field(air_helium, n=4)
    with pytest.raises(MeshMismatch):
        time.entropy_budget(fld, m, air_helium, coarse)


def test_totals_and_total_entropy(air_helium):
    fld, m = _uniform_field(air_helium)
    tot = time.totals(fld)
    np.testing.assert_allclose(tot, fld.U[:, 0, 0], rtol=1e-14)
    eta, _ = thermo.entropy_pair(air_helium, fld.U[:, 0, 0])
    assert time.total_entropy(fld, air_helium) == pytest.approx(float(eta), rel=1e-14)


def test_forward_euler_keeps_contact_steady():
    P = thermo.MixtureParams((1.6, 1.4), (1.0, 1.0))
    m = mesh.build_interval(20, -0.5, 0.5)
    disc = dgsem.discretization(m, P, FluxConfig(), dgsem.build_sbp(2))
    uL = thermo.prim_to_cons(P, np.array([1.0, 0.0]), np.array(1.0), np.zeros(1), np.array(1.0))
    uR = thermo.prim_to_cons(P, np.array([0.0, 1.0]), np.array(0.1), np.zeros(1), np.array(1.0))
    fld = dgsem.project(disc, lambda x: np.where(x < 0, uL[:, None, None], uR[:, None, None]), nudge=True)
    res = time.integrate(fld, m, P, time.TimeConfig(integrator="euler", t_end=0.05))
    np.testing.assert_array_equal(res.field.U, fld.U)


def test_theoretical_mode_is_smaller_than_practical(air_helium):
    fld, m = _uniform_field(air_helium)
    a = time.integrate(fld, m, air_helium, time.TimeConfig(t_end=0.1)).stats
    b = time.integrate(fld, m, air_helium, time.TimeConfig(t_end=0.1, dt_mode="theoretical")).stats
    assert b.steps > a.steps
