import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esdgsem import dgsem, mesh, thermo, time
from esdgsem.errors import AverageInadmissible, Inadmissible, UnsupportedDegree
from esdgsem.fluxes import FluxConfig

from conftest import random_states

KNOWN_LGL = {
    1: ([-1.0, 1.0], [1.0, 1.0]),
    2: ([-1.0, 0.0, 1.0], [1 / 3, 4 / 3, 1 / 3]),
    3: ([-1.0, -1 / np.sqrt(5), 1 / np.sqrt(5), 1.0], [1 / 6, 5 / 6, 5 / 6, 1 / 6]),
}


def prim_state(P, Y1, rho, v, p):
    return thermo.prim_to_cons(P, np.array([Y1, 1.0 - Y1]), np.asarray(rho, dtype=float),
                               np.asarray(v, dtype=float), np.asarray(p, dtype=float))


@pytest.mark.parametrize("p", [1, 2, 3])
def test_lgl_nodes_and_weights(p):
    sbp = dgsem.build_sbp(p)
    x, w = KNOWN_LGL[p]
    np.testing.assert_allclose(sbp.nodes, x, atol=1e-15)
    np.testing.assert_allclose(sbp.weights, w, rtol=1e-14)


@pytest.mark.parametrize("p", range(1, 9))
def test_sbp_properties(p):
    sbp = dgsem.build_sbp(p)
    M = np.diag(sbp.weights)
    Q = M @ sbp.D
    B = np.zeros((p + 1, p + 1))
    B[0, 0], B[-1, -1] = -1.0, 1.0
    assert np.max(np.abs(Q + Q.T - B)) < 1e-13
    assert np.max(np.abs(sbp.D.sum(axis=1))) < 1e-13
    # exact differentiation of degree-p polynomials
    x = sbp.nodes
    np.testing.assert_allclose(sbp.D @ x ** p, p * x ** (p - 1), atol=1e-11 * p * p)
    # quadrature exact to degree 2p-1
    assert np.sum(sbp.weights * x ** (2 * p - 2)) == pytest.approx(2.0 / (2 * p - 1), rel=1e-13)


@pytest.mark.parametrize("p", [0, 9, -1, 2.0, True])
def test_unsupported_degree(p):
    with pytest.raises(UnsupportedDegree):
        dgsem.build_sbp(p)


def test_fv_equivalent_sbp():
    sbp = dgsem.fv_equivalent_sbp()
    assert sbp.degree == 0 and sbp.weights[0] == 2.0 and sbp.D.shape == (1, 1)


def _distorted_mesh(n, seed, amplitude=0.15, periodic=True):
    m = mesh.build_structured(n, n, tags={s: "periodic" for s in ("left", "right", "bottom", "top")}
                              if periodic else None)
    rng = np.random.default_rng(seed)
    v = np.array(m.vertices)
    inner = (v[:, 0] > 0) & (v[:, 0] < 1) & (v[:, 1] > 0) & (v[:, 1] < 1)
    v[inner] += rng.uniform(-amplitude, amplitude, size=(inner.sum(), 2)) / n
    return mesh.make_mesh(v, m.elements, m.boundary)


@pytest.mark.parametrize("interface", ["es-relax", "es-roe", "ec"])
def test_free_stream_on_distorted_mesh(air_helium, interface):
    m = _distorted_mesh(4, 1, periodic=False)
    disc = dgsem.discretization(m, air_helium, FluxConfig(interface=interface), dgsem.build_sbp(3))
    u0 = prim_state(air_helium, 0.3, 1.2, [0.7, -0.4], 2.0)
    U = np.broadcast_to(u0[:, None, None, None], (u0.size, disc.K, 4, 4)).copy()
    R = disc.residual(U)
    assert np.max(np.abs(R)) < 1e-13


def test_metric_identities(air_helium):
    disc = dgsem.discretization(_distorted_mesh(3, 2), air_helium, FluxConfig(), dgsem.build_sbp(4))
    D = disc.sbp.D
    div = (np.einsum("ap,kpj->kaj", D, disc.metric_xi[0]) + np.einsum("bp,kip->kib", D, disc.metric_eta[0]))
    assert np.max(np.abs(div)) < 1e-14
    assert disc.mass.sum() == pytest.approx(1.0, rel=1e-14)


def _rp4_field(params, n, p, periodic=False):
    m = mesh.build_interval(n, -0.5, 0.5, "periodic" if periodic else "nonreflecting")
    disc = dgsem.discretization(m, params, FluxConfig(), dgsem.build_sbp(p))
    uL = prim_state(params, 1.0, 1.0, [0.0], 1.0)
    uR = prim_state(params, 0.0, 0.1, [0.0], 1.0)
    return dgsem.project(disc, lambda x: np.where(x < 0.0, uL[:, None, None], uR[:, None, None]), nudge=True)


def test_stationary_contact_residual_is_zero():
    P = thermo.MixtureParams((1.6, 1.4), (1.0, 1.0))
    fld = _rp4_field(P, 10, 3)
    R = fld.disc.residual(fld.U)
    assert np.all(R[-2:] == 0.0)
    assert np.all(R[-1] == 0.0)
    assert np.max(np.abs(R)) == 0.0


def test_projection_nudge_picks_correct_side(air_helium):
    m = mesh.build_interval(2, -1.0, 1.0)
    disc = dgsem.discretization(m, air_helium, FluxConfig(), dgsem.build_sbp(1))
    plain = disc.project(lambda x: (x < 0.0)[None].astype(float))
    nudged = disc.project(lambda x: (x < 0.0)[None].astype(float), nudge=True)
    np.testing.assert_array_equal(plain[0], [[1, 0], [0, 0]])
    np.testing.assert_array_equal(nudged[0], [[1, 1], [0, 0]])


def _entropy_rate(disc, params, U):
    w = thermo.entropy_vars(params, U)
    return float(np.sum(w * disc.rhs(U) * disc.mass[None]))


def test_entropy_rate_ec_vanishes_and_es_dissipates(air_helium):
    m = mesh.build_interval(12, 0.0, 1.0, "periodic")
    rng = np.random.default_rng(5)
    a = rng.normal(size=4) * 0.2

    def init(x):
        Y1 = 0.5 + 0.3 * np.sin(2 * np.pi * x + a[0])
        rho = 1.0 + 0.3 * np.sin(2 * np.pi * x + a[1])
        u = 0.4 * np.cos(2 * np.pi * x + a[2])
        p = 1.0 + 0.2 * np.sin(4 * np.pi * x + a[3])
        return prim_state(air_helium, Y1, rho, u[None], p)

    rates = {}
    for iface in ("ec", "es-relax", "es-roe"):
        disc = dgsem.discretization(m, air_helium, FluxConfig(interface=iface), dgsem.build_sbp(3))
        U = disc.project(init)
        # break inter-element continuity so the interface fluxes see jumps
        U *= 1.0 + 0.01 * np.random.default_rng(9).normal(size=U.shape)
        rates[iface] = _entropy_rate(disc, air_helium, U)
    assert abs(rates["ec"]) < 1e-13
    assert rates["es-relax"] < -1e-12
    assert rates["es-roe"] < -1e-12


def test_entropy_rate_2d_ec(air_helium):
    m = _distorted_mesh(3, 7)
    disc = dgsem.discretization(m, air_helium, FluxConfig(interface="ec"), dgsem.build_sbp(3))

    def init(x, y):
        s = np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
        return prim_state(air_helium, 0.5 + 0.3 * s, 1.0 + 0.2 * s, np.stack([0.3 + 0.1 * s, -0.2 + 0 * s]),
                          1.0 + 0.1 * np.cos(2 * np.pi * x))

    U = disc.project(init)
    assert abs(_entropy_rate(disc, air_helium, U)) < 1e-13
    disc_es = dgsem.discretization(m, air_helium, FluxConfig(), dgsem.build_sbp(3))
    assert _entropy_rate(disc_es, air_helium, U) < 0.0
    # conservation of every variable
    tot = np.sum(disc.rhs(U) * disc.mass[None], axis=(1, 2, 3))
    assert np.max(np.abs(tot)) < 1e-13


def test_degree_zero_reproduces_fv(air_helium):
    from esdgsem import fv
    m = mesh.build_interval(20, 0.0, 1.0, "periodic")
    rng = np.random.default_rng(2)
    U = random_states(air_helium, rng, 20, decades=1)
    disc = dgsem.discretization(m, air_helium, FluxConfig(), dgsem.fv_equivalent_sbp())
    dt = 0.5 * fv.cfl_dt_1d(fv.FVState(U, m), air_helium, FluxConfig())
    fv_next = fv.step_1d(fv.FVState(U, m), air_helium, FluxConfig(), dt).U
    dg_next = U[:, :, None] + dt * disc.rhs(U[:, :, None])
    np.testing.assert_allclose(dg_next[:, :, 0], fv_next, rtol=1e-14, atol=1e-15)


# ---------------------------------------------------------------------------
# limiter

def _element_states(params, rng, K, P, spread):
    base = random_states(params, rng, K, decades=1)
    noise = rng.normal(size=(base.shape[0], K, P)) * spread
    return base[:, :, None] * (1.0 + noise)


def test_limiter_is_noop_on_admissible_data(air_helium):
    rng = np.random.default_rng(0)
    sbp = dgsem.build_sbp(3)
    U = _element_states(air_helium, rng, 50, 4, 0.01)
    w = np.broadcast_to(0.5 * sbp.weights, (50, 4)).copy()
    before = U.copy()
    assert dgsem.limit_nodes(U, w, air_helium) == 0
    assert np.array_equal(U, before)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 3.0))
def test_limiter_restores_positivity_and_keeps_averages(seed, spread):
    P = thermo.MixtureParams((1.6, 1.2, 1.4), (2.0, 1.5, 1.0))
    rng = np.random.default_rng(seed)
    sbp = dgsem.build_sbp(4)
    K, n = 40, 5
    w = np.broadcast_to(0.5 * sbp.weights, (K, n)).copy()
    avg = random_states(P, rng, K, decades=4)
    U = avg[:, :, None] + spread * rng.normal(size=(avg.shape[0], K, n)) * np.abs(avg)[:, :, None]
    # shift nodes so the weighted average equals the admissible state exactly
    U += (avg - np.sum(U * w[None], axis=2))[:, :, None]
    avg_before = np.sum(U * w[None], axis=2)
    dgsem.limit_nodes(U, w, P, eps=1e-10)
    avg_after = np.sum(U * w[None], axis=2)
    np.testing.assert_allclose(avg_after, avg_before, rtol=1e-12, atol=1e-12 * np.abs(avg_before).max())
    flat = U.reshape(U.shape[0], -1)
    rho = flat[P.n_species - 1]
    assert np.all(rho > 1e-10 * 0.999)
    assert np.all(thermo.internal_energy_density(P, flat) > 0.0)
    r, _, _, _ = thermo.mix_storage(P, thermo.mass_fractions(P, flat))
    assert np.all(r > 0.0)


def test_limiter_rejects_bad_average(air_helium):
    U = np.zeros((4, 1, 2))
    U[1] = [-1.0, 0.5]
    with pytest.raises(AverageInadmissible):
        dgsem.limit_nodes(U, np.array([[0.5, 0.5]]), air_helium)


def test_cell_average_and_apply_limiter(air_helium):
    m = mesh.build_interval(3, 0.0, 3.0)
    disc = dgsem.discretization(m, air_helium, FluxConfig(), dgsem.build_sbp(2))
    fld = dgsem.project(disc, lambda x: prim_state(air_helium, 0.5 + 0.0 * x, 1.0 + x, 0.0 * x[None], 1.0))
    # quadrature of the linear density is exact: average at the element midpoint
    assert dgsem.cell_average(fld, 1)[1] == pytest.approx(2.5, rel=1e-14)
    bad = fld.copy()
    bad.U[1, 0, 0] = -0.5
    bad.U[0, 0, 0] = -0.25
    out, count = dgsem.apply_limiter(bad, air_helium)
    assert count == 1
    assert out.U[1, 0].min() > 0.0
    assert bad.U[1, 0, 0] == -0.5
    np.testing.assert_allclose(dgsem.cell_average(out, 0), dgsem.cell_average(bad, 0), rtol=1e-14)


def test_inadmissible_nodes_raise(air_helium):
    fld = _rp4_field(thermo.MixtureParams((1.6, 1.4), (1.0, 1.0)), 4, 2)
    fld.U[1, 0, 0] = -1.0
    with pytest.raises(Inadmissible):
        fld.disc.residual(fld.U)


# ---------------------------------------------------------------------------
# time-step rules

def test_practical_dt_on_unit_square():
    P = thermo.MixtureParams((1.4, 1.4), (1.0, 1.0))
    m = mesh.build_structured(1, 1)
    disc = dgsem.discretization(m, P, FluxConfig(), dgsem.build_sbp(3))
    p = 1.0 / (1.4 * 1.05 ** 2)
    u0 = prim_state(P, 0.5, 1.0, [0.0, 0.0], p)
    fld = dgsem.SolutionField(np.broadcast_to(u0[:, None, None, None], (u0.size, 1, 4, 4)).copy(), disc)
    assert dgsem.dgsem_cfl_dt(fld, m, P, FluxConfig(), disc.sbp) == pytest.approx(0.2, rel=1e-14)
    assert dgsem.dgsem_cfl_dt(fld, m, P, FluxConfig(interface="es-roe"), disc.sbp) \
        == pytest.approx(0.1 * 1.05, rel=1e-14)
    th = dgsem.dgsem_cfl_dt(fld, m, P, FluxConfig(), disc.sbp, mode="theoretical")
    assert 0.0 < th < 0.2
    with pytest.raises(ValueError):
        dgsem.dgsem_cfl_dt(fld, m, P, FluxConfig(), disc.sbp, mode="other")


def test_dt_scales_with_mesh_size(air_helium):
    u0 = prim_state(air_helium, 0.5, 1.0, [0.3], 1.0)
    dts = []
    for n in (10, 20):
        m = mesh.build_interval(n, 0.0, 1.0, "periodic")
        disc = dgsem.discretization(m, air_helium, FluxConfig(), dgsem.build_sbp(3))
        fld = dgsem.SolutionField(np.broadcast_to(u0[:, None, None], (4, n, 4)).copy(), disc)
        dts.append(dgsem.dgsem_cfl_dt(fld, m, air_helium, FluxConfig(), disc.sbp, mode="theoretical"))
    assert dts[0] == pytest.approx(2.0 * dts[1], rel=1e-13)


def test_short_run_stays_admissible(air_helium):
    fld = _rp4_field(thermo.MixtureParams((1.6, 1.4), (1.0, 1.0)), 20, 3)
    P = fld.disc.params
    uL = prim_state(P, 1.0, 1.0, [0.5], 2.0)
    fld.U[:, :10] = uL[:, None, None]
    res = time.integrate(fld, fld.disc.mesh, P, time.TimeConfig(t_end=0.05))
    U = res.field.U
    assert np.all(U[1] > 0.0)
    assert np.all(thermo.internal_energy_density(P, U) > 0.0)
    r, _, _, _ = thermo.mix_storage(P, thermo.mass_fractions(P, U))
    assert np.all(r > 0.0)
