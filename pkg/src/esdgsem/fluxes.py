"""Two-point numerical fluxes.

All kernels are vectorised: states are arrays of shape ``(nvar, ...)`` and the
direction ``n`` is either a plain ``(d,)`` vector or an array ``(d, ...)``
broadcasting against the trailing axes. The entropy-conservative fluxes are
linear in ``n`` and accept scaled (non-unit) metric vectors, which is what the
flux-differencing volume terms need. The relaxation and Roe-type fluxes expect
unit normals.

Every flux is written so that ``h(uL, uR, n) == -h(uR, uL, -n)`` holds bit for
bit and so that equal states reproduce the physical flux exactly; both
properties are relied upon by the stationary-contact and p=0 equivalence tests.
"""

from dataclasses import dataclass

import numpy as np

from . import thermo
from .errors import DegenerateFan, Inadmissible, NonPositiveArgument

LOG_MEAN_SERIES_CUTOFF = 1e-4
EC_VARIANTS = ("primary", "alternate")
INTERFACE_FLUXES = ("ec", "es-relax", "es-roe")


@dataclass(frozen=True)
class FluxConfig:
    gamma_relax: float = None
    speed_safety: float = 1.05
    nu_ad: float = 0.5
    ec_variant: str = "primary"
    interface: str = "es-relax"

    def __post_init__(self):
        if self.speed_safety < 1.0:
            raise ValueError("speed_safety must be >= 1")
        if self.nu_ad < 0.0:
            raise ValueError("nu_ad must be non-negative")
        if self.ec_variant not in EC_VARIANTS:
            raise ValueError(f"unknown EC variant {self.ec_variant!r}")
        if self.interface not in INTERFACE_FLUXES:
            raise ValueError(f"unknown interface flux {self.interface!r}")

    def relax_gamma(self, params):
        g = params.gamma_max if self.gamma_relax is None else float(self.gamma_relax)
        if g < params.gamma_max:
            raise ValueError("gamma_relax must not be below the largest species gamma")
        return g


@dataclass
class RiemannFan:
    aL: np.ndarray
    aR: np.ndarray
    SL: np.ndarray
    SR: np.ndarray
    u_star: np.ndarray
    p_star: np.ndarray
    starL: np.ndarray
    starR: np.ndarray


def _as_n(n, ndim):
    n = np.asarray(n, dtype=float)
    if n.ndim == 1:
        return n.reshape(n.shape + (1,) * (ndim - 1))
    return n


def _dot(a, b):
    out = a[0] * b[0]
    for k in range(1, a.shape[0]):
        out = out + a[k] * b[k]
    return out


# ---------------------------------------------------------------------------
# node quantities

def node_quantities(params, u):
    """Packed per-node variables used by the flux kernels.

    Rows: rho, p, theta (=1/T), rho*r(Y), velocity (d rows), Y_1..Y_{nc-1}.
    """
    nc = params.n_species
    rho = u[nc - 1]
    Ys = thermo.mass_fractions(params, u)
    r, cv, _, _ = thermo.mix_storage(params, Ys)
    rhoe = thermo.internal_energy_density(params, u)
    p = (r / cv) * rhoe
    theta = cv * rho / rhoe
    v = u[nc:-1] / rho
    return np.concatenate([rho[None], p[None], theta[None], (rho * r)[None], v, Ys[:-1]], axis=0)


def _unpack(params, Q):
    nc = params.n_species
    d = Q.shape[0] - 4 - (nc - 1)
    return Q[0], Q[1], Q[2], Q[3], Q[4:4 + d], Q[4 + d:]


def _check_positive(*arrays):
    for a in arrays:
        if np.any(~(a > 0.0)):
            raise NonPositiveArgument("logarithmic mean needs positive arguments")


# ---------------------------------------------------------------------------
# physical flux

def _physical_flux(params, u, Q, n):
    rho, p, _, _, v, _ = _unpack(params, Q)
    n = _as_n(n, u.ndim)
    un = _dot(v, n)
    nc = params.n_species
    return np.concatenate([
        u[: nc] * un,
        u[nc:-1] * un + p * n,
        ((u[-1] + p) * un)[None],
    ], axis=0)


def physical_flux(params, u, n, check=True):
    u = thermo.as_array(u)
    if check:
        thermo.require_admissible(params, u)
    return _physical_flux(params, u, node_quantities(params, u), n)


# ---------------------------------------------------------------------------
# logarithmic mean

def _log_mean(a, b):
    # symmetric Ismail-Roe evaluation: swapping a and b only flips the sign of f
    f = (b - a) / (b + a)
    uu = f * f
    small = uu < LOG_MEAN_SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        big = (np.log(b) - np.log(a)) / (2.0 * f)
    series = 1.0 + uu * (1.0 / 3.0 + uu * (1.0 / 5.0 + uu * (1.0 / 7.0)))
    return (a + b) / (2.0 * np.where(small, series, big))


def log_mean(a_minus, a_plus):
    a = np.asarray(a_minus, dtype=float)
    b = np.asarray(a_plus, dtype=float)
    _check_positive(a, b)
    out = _log_mean(a, b)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# entropy-conservative fluxes

def _pressure_mean(pL, pR, thL, thR):
    # {p theta}/{theta} written so equal pressures come back unchanged
    th_bar = 0.5 * (thL + thR)
    return 0.5 * (pL + pR) + 0.25 * (pR - pL) * (thR - thL) / th_bar, th_bar


def _ec_primary(params, QL, QR, n):
    rhoL, pL, thL, rrL, vL, YL = _unpack(params, QL)
    rhoR, pR, thR, rrR, vR, YR = _unpack(params, QR)
    n = _as_n(n, QL.ndim)
    r_nc = params.r_ref
    cv_nc = params.cv_ref

    rho_hat = _log_mean(rhoL, rhoR)
    rnc_hat = _log_mean(rrL / r_nc, rrR / r_nc)
    th_hat = _log_mean(thL, thR)
    P, _ = _pressure_mean(pL, pR, thL, thR)

    v_bar = 0.5 * (vL + vR)
    vn = _dot(v_bar, n)
    Y_bar = 0.5 * (YL + YR)
    shape = (-1,) + (1,) * (Y_bar.ndim - 1)
    dr = (params.r_s[:-1] - r_nc).reshape(shape)
    denom = np.sum(Y_bar * dr, axis=0)
    nonzero = denom != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(nonzero, r_nc * (rnc_hat - rho_hat) / np.where(nonzero, denom, 1.0), rho_hat)

    h_rho = rho_hat * vn
    h_Y = coef * Y_bar * vn
    h_mom = h_rho * v_bar + P * n
    dcv = (params.cv_s[:-1] - cv_nc).reshape(shape)
    h_E = (np.sum(dcv * h_Y, axis=0) / th_hat
           + (cv_nc / th_hat + 0.5 * _dot(vL, vR)) * h_rho
           + P * vn)
    return np.concatenate([h_Y, h_rho[None], h_mom, h_E[None]], axis=0)


def _ec_alternate(params, QL, QR, n):
    rhoL, pL, thL, rrL, vL, YL = _unpack(params, QL)
    rhoR, pR, thR, rrR, vR, YR = _unpack(params, QR)
    n = _as_n(n, QL.ndim)

    # partial densities rho_i = rho r(Y)/r_i share one log mean up to 1/r_i
    rr_hat = _log_mean(rrL, rrR)
    th_hat = _log_mean(thL, thR)
    P, _ = _pressure_mean(pL, pR, thL, thR)

    def all_fractions(Yp):
        return np.concatenate([Yp, (1.0 - np.sum(Yp, axis=0))[None]], axis=0)

    shape = (-1,) + (1,) * (rhoL.ndim)
    r_i = params.r_s.reshape(shape)
    alphaL = r_i * all_fractions(YL) * rhoL / rrL
    alphaR = r_i * all_fractions(YR) * rhoR / rrR
    alpha_bar = 0.5 * (alphaL + alphaR)

    v_bar = 0.5 * (vL + vR)
    vn = _dot(v_bar, n)
    h_Y = alpha_bar * (rr_hat / r_i) * vn
    h_rho = np.sum(h_Y, axis=0)
    h_mom = h_rho * v_bar + P * n
    cv_i = params.cv_s.reshape(shape)
    h_E = np.sum((cv_i / th_hat + 0.5 * _dot(vL, vR)) * h_Y, axis=0) + P * vn
    return np.concatenate([h_Y[:-1], h_rho[None], h_mom, h_E[None]], axis=0)


def _ec(params, QL, QR, n, variant):
    if variant == "primary":
        return _ec_primary(params, QL, QR, n)
    if variant == "alternate":
        return _ec_alternate(params, QL, QR, n)
    raise ValueError(f"unknown EC variant {variant!r}")


def ec_flux(params, uL, uR, n, variant="primary"):
    uL = thermo.as_array(uL)
    uR = thermo.as_array(uR)
    QL = node_quantities(params, uL)
    QR = node_quantities(params, uR)
    _check_positive(QL[0], QR[0], QL[2], QR[2], QL[3], QR[3])
    return _ec(params, QL, QR, n, variant)


# ---------------------------------------------------------------------------
# relaxation solver

def _lagrangian_speeds(rhoL, unL, pL, rhoR, unR, pR, gam, safety):
    cL = np.sqrt(gam * pL / rhoL)
    cR = np.sqrt(gam * pR / rhoR)
    k = 0.5 * (gam + 1.0)
    du = unL - unR
    aL_a = rhoL * (cL + k * np.maximum((pR - pL) / (rhoR * cR) + du, 0.0))
    aR_a = rhoR * (cR + k * np.maximum((pL - pR) / aL_a + du, 0.0))
    aR_b = rhoR * (cR + k * np.maximum((pL - pR) / (rhoL * cL) + du, 0.0))
    aL_b = rhoL * (cL + k * np.maximum((pR - pL) / aR_b + du, 0.0))
    right_higher = pR >= pL
    aL = np.where(right_higher, aL_a, aL_b) * safety
    aR = np.where(right_higher, aR_a, aR_b) * safety
    return aL, aR


def wave_speed_estimates(params, primL, primR, n, config=FluxConfig()):
    """Lagrangian sound speeds ``(aL, aR)`` from two ``Primitive`` states."""
    n = np.asarray(n, dtype=float)
    for prim in (primL, primR):
        if np.any(np.asarray(prim.rho) <= 0) or np.any(np.asarray(prim.p) <= 0):
            raise Inadmissible("wave speeds need positive density and pressure")
    vL = np.asarray(primL.v, dtype=float)
    vR = np.asarray(primR.v, dtype=float)
    nn = _as_n(n, vL.ndim)
    return _lagrangian_speeds(np.asarray(primL.rho, float), _dot(vL, nn), np.asarray(primL.p, float),
                              np.asarray(primR.rho, float), _dot(vR, nn), np.asarray(primR.p, float),
                              config.relax_gamma(params), config.speed_safety)


def _relax_solve(params, uL, QL, uR, QR, n, config):
    nc = params.n_species
    rhoL, pL, _, _, vL, _ = _unpack(params, QL)
    rhoR, pR, _, _, vR, _ = _unpack(params, QR)
    n = _as_n(n, uL.ndim)
    unL = _dot(vL, n)
    unR = _dot(vR, n)
    aL, aR = _lagrangian_speeds(rhoL, unL, pL, rhoR, unR, pR,
                                config.relax_gamma(params), config.speed_safety)
    den = aL + aR
    u_star = 0.5 * (unL + unR) + (0.5 * (aL - aR) * (unL - unR) + (pL - pR)) / den
    p_star = 0.5 * (pL + pR) + (0.5 * (aR - aL) * (pL - pR) + aL * aR * (unL - unR)) / den

    # rho*/rho on each side; non-positive means a non-positive star volume
    dL = 1.0 + rhoL * (u_star - unL) / aL
    dR = 1.0 + rhoR * (unR - u_star) / aR
    if np.any(~(dL > 0.0)) or np.any(~(dR > 0.0)):
        raise DegenerateFan("non-positive star specific volume")
    ratioL = 1.0 / dL
    ratioR = 1.0 / dR

    starL = np.concatenate([
        ratioL * uL[:nc],
        ratioL * (uL[nc:-1] + rhoL * (u_star - unL) * n),
        (ratioL * (uL[-1] - rhoL * (p_star * u_star - pL * unL) / aL))[None],
    ], axis=0)
    starR = np.concatenate([
        ratioR * uR[:nc],
        ratioR * (uR[nc:-1] + rhoR * (u_star - unR) * n),
        (ratioR * (uR[-1] - rhoR * (pR * unR - p_star * u_star) / aR))[None],
    ], axis=0)
    SL = unL - aL / rhoL
    SR = unR + aR / rhoR
    return RiemannFan(aL, aR, SL, SR, u_star, p_star, starL, starR), unL, unR, pL, pR, n


def _region_flux(params, u, un, p, n):
    nc = params.n_species
    return np.concatenate([u[:nc] * un, u[nc:-1] * un + p * n, ((u[-1] + p) * un)[None]], axis=0)


def _relax_flux(params, uL, QL, uR, QR, n, config):
    fan, unL, unR, pL, pR, n = _relax_solve(params, uL, QL, uR, QR, n, config)
    FL = _region_flux(params, uL, unL, pL, n)
    FR = _region_flux(params, uR, unR, pR, n)
    FLs = _region_flux(params, fan.starL, fan.u_star, fan.p_star, n)
    FRs = _region_flux(params, fan.starR, fan.u_star, fan.p_star, n)
    return np.where(fan.SL >= 0.0, FL,
                    np.where(fan.u_star >= 0.0, FLs,
                             np.where(fan.SR > 0.0, FRs, FR)))


def relax_riemann_fan(params, uL, uR, n, config=FluxConfig()):
    uL = thermo.as_array(uL)
    uR = thermo.as_array(uR)
    thermo.require_admissible(params, uL, "left state")
    thermo.require_admissible(params, uR, "right state")
    QL = node_quantities(params, uL)
    QR = node_quantities(params, uR)
    return _relax_solve(params, uL, QL, uR, QR, n, config)[0]


def es_relax_flux(params, uL, uR, n, config=FluxConfig()):
    uL = thermo.as_array(uL)
    uR = thermo.as_array(uR)
    thermo.require_admissible(params, uL, "left state")
    thermo.require_admissible(params, uR, "right state")
    return _relax_flux(params, uL, node_quantities(params, uL), uR, node_quantities(params, uR), n, config)


# ---------------------------------------------------------------------------
# EC flux plus scalar dissipation

def _sound_speed_q(params, Q):
    rho, p, th, rr, _, Yp = _unpack(params, Q)
    Ys = np.concatenate([Yp, (1.0 - np.sum(Yp, axis=0))[None]], axis=0)
    _, _, _, gam = thermo.mix_storage(params, Ys)
    return np.sqrt(gam * p / rho)


def _roe_flux(params, QL, QR, n, config):
    h = _ec_primary(params, QL, QR, n)
    if config.nu_ad == 0.0:
        return h
    rhoL, pL, thL, rrL, vL, YL = _unpack(params, QL)
    rhoR, pR, thR, rrR, vR, YR = _unpack(params, QR)
    nn = _as_n(n, QL.ndim)
    lam = np.maximum(np.abs(_dot(vL, nn)) + _sound_speed_q(params, QL),
                     np.abs(_dot(vR, nn)) + _sound_speed_q(params, QR))
    r_nc = params.r_ref
    cv_nc = params.cv_ref
    rho_hat = _log_mean(rhoL, rhoR)
    th_hat = _log_mean(thL, thR)

    Yp_bar = 0.5 * (YL + YR)
    Y_bar = np.concatenate([Yp_bar, (1.0 - np.sum(Yp_bar, axis=0))[None]], axis=0)
    r_bar, cv_bar, _, _ = thermo.mix_storage(params, Y_bar)
    v_bar = 0.5 * (vL + vR)
    dv = vR - vL
    coef = (r_nc / r_bar) * (rrR / r_nc - rrL / r_nc)
    D_Y = np.zeros_like(YL)
    D_mom = coef * v_bar + rho_hat * dv
    D_E = (coef * (cv_nc / th_hat + 0.5 * _dot(vL, vR))
           + rho_hat * _dot(v_bar, dv)
           + rho_hat * cv_bar * (1.0 / thR - 1.0 / thL))
    D = np.concatenate([D_Y, coef[None], D_mom, D_E[None]], axis=0)
    return h - (0.5 * config.nu_ad * lam) * D


def es_roe_flux(params, uL, uR, n, config=FluxConfig()):
    uL = thermo.as_array(uL)
    uR = thermo.as_array(uR)
    QL = node_quantities(params, uL)
    QR = node_quantities(params, uR)
    _check_positive(QL[0], QR[0], QL[2], QR[2], QL[3], QR[3])
    return _roe_flux(params, QL, QR, n, config)


# ---------------------------------------------------------------------------
# wave speeds and dispatch

def max_wave_speed(params, uL, uR, n, config=FluxConfig()):
    """max over both sides of |v.n| + a/rho with the relaxation estimates."""
    uL = thermo.as_array(uL)
    uR = thermo.as_array(uR)
    thermo.require_admissible(params, uL, "left state")
    thermo.require_admissible(params, uR, "right state")
    QL = node_quantities(params, uL)
    QR = node_quantities(params, uR)
    return _max_speed_q(params, QL, QR, n, config)


def _max_speed_q(params, QL, QR, n, config):
    rhoL, pL, _, _, vL, _ = _unpack(params, QL)
    rhoR, pR, _, _, vR, _ = _unpack(params, QR)
    n = _as_n(n, QL.ndim)
    unL = _dot(vL, n)
    unR = _dot(vR, n)
    aL, aR = _lagrangian_speeds(rhoL, unL, pL, rhoR, unR, pR,
                                config.relax_gamma(params), config.speed_safety)
    return np.maximum(np.abs(unL) + aL / rhoL, np.abs(unR) + aR / rhoR)


def state_speed(params, Q, config):
    """|v| plus the signal speed used by the practical time-step rule."""
    rho, p, _, _, v, _ = _unpack(params, Q)
    speed = np.sqrt(_dot(v, v))
    if config.interface == "es-roe":
        return speed + _sound_speed_q(params, Q)
    return speed + config.speed_safety * np.sqrt(config.relax_gamma(params) * p / rho)


def _interface(params, uL, QL, uR, QR, n, config):
    if config.interface == "es-relax":
        return _relax_flux(params, uL, QL, uR, QR, n, config)
    if config.interface == "es-roe":
        return _roe_flux(params, QL, QR, n, config)
    return _ec(params, QL, QR, n, config.ec_variant)


def interface_flux(params, uL, uR, n, config=FluxConfig()):
    uL = thermo.as_array(uL)
    uR = thermo.as_array(uR)
    return _interface(params, uL, node_quantities(params, uL), uR, node_quantities(params, uR), n, config)
