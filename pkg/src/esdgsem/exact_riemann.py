"""Exact Riemann solver for two frozen-composition ideal gases.

Composition only jumps across the contact, so each side behaves as a single
polytropic gas with its own gamma(Y). The star pressure solves the usual
two-gamma pressure equation by safeguarded Newton iteration.
"""

from dataclasses import dataclass

import numpy as np

from . import thermo
from .errors import VacuumGenerated

NEWTON_TOL = 1e-14
MAX_ITER = 200


@dataclass(frozen=True)
class _Side:
    rho: float
    u: float
    p: float
    gamma: float
    c: float
    Y: np.ndarray  # user order


@dataclass(frozen=True)
class ExactFan:
    left: _Side
    right: _Side
    p_star: float
    u_star: float
    rho_star_left: float
    rho_star_right: float
    left_wave: str
    right_wave: str
    params: thermo.MixtureParams
    residual: float


def _side(params, u):
    u = thermo.as_array(u)
    if params.dim_of(u) != 1:
        raise ValueError("exact solver takes one-dimensional states")
    thermo.require_admissible(params, u)
    prim = thermo.cons_to_prim(params, u)
    _, _, _, gam = thermo.mixture_laws(params, prim.Y)
    rho, p = float(prim.rho), float(prim.p)
    return _Side(rho, float(prim.v[0]), p, float(gam), float(np.sqrt(gam * p / rho)), np.asarray(prim.Y, float))


def _f(s, p):
    g = s.gamma
    if p > s.p:
        A = 2.0 / ((g + 1.0) * s.rho)
        B = (g - 1.0) / (g + 1.0) * s.p
        root = np.sqrt(A / (p + B))
        return (p - s.p) * root, root * (1.0 - 0.5 * (p - s.p) / (p + B))
    ratio = p / s.p
    val = 2.0 * s.c / (g - 1.0) * (ratio ** ((g - 1.0) / (2.0 * g)) - 1.0)
    return val, ratio ** (-(g + 1.0) / (2.0 * g)) / (s.rho * s.c)


def _star_density(s, p_star):
    g = s.gamma
    ratio = p_star / s.p
    if p_star > s.p:
        k = (g - 1.0) / (g + 1.0)
        return s.rho * (ratio + k) / (k * ratio + 1.0)
    return s.rho * ratio ** (1.0 / g)


def solve_exact(params, uL, uR):
    L = _side(params, uL)
    R = _side(params, uR)
    du = R.u - L.u
    if 2.0 * L.c / (L.gamma - 1.0) + 2.0 * R.c / (R.gamma - 1.0) <= du:
        raise VacuumGenerated("initial data generate vacuum")

    def F(p):
        fl, dl = _f(L, p)
        fr, dr = _f(R, p)
        return fl + fr + du, dl + dr

    # two-rarefaction guess with a mean exponent
    z = 0.5 * ((L.gamma - 1.0) / (2.0 * L.gamma) + (R.gamma - 1.0) / (2.0 * R.gamma))
    gbar = 0.5 * (L.gamma + R.gamma)
    num = L.c + R.c - 0.5 * (gbar - 1.0) * du
    p = (max(num, 1e-300) / (L.c / L.p ** z + R.c / R.p ** z)) ** (1.0 / z)
    p = max(p, 1e-300)

    lo, hi = 0.0, max(L.p, R.p, p)
    while F(hi)[0] < 0.0:
        hi *= 2.0
    scale = abs(du) + L.c + R.c
    val = np.inf
    for _ in range(MAX_ITER):
        val, der = F(p)
        if abs(val) <= NEWTON_TOL * scale:
            break
        if val < 0.0:
            lo = p
        else:
            hi = p
        p_new = p - val / der
        if not (lo < p_new < hi):
            p_new = 0.5 * (lo + hi)
        if abs(p_new - p) <= 1e-16 * p:
            p = p_new
            val = F(p)[0]
            break
        p = p_new

    fl, _ = _f(L, p)
    fr, _ = _f(R, p)
    u_star = 0.5 * (L.u + R.u) + 0.5 * (fr - fl)
    return ExactFan(
        left=L, right=R, p_star=p, u_star=u_star,
        rho_star_left=_star_density(L, p), rho_star_right=_star_density(R, p),
        left_wave="shock" if p > L.p else "rarefaction",
        right_wave="shock" if p > R.p else "rarefaction",
        params=params, residual=abs(val) / scale,
    )


def _sample_side(s, fan, xi, sign):
    """Sample the side ``s`` of the fan; sign=+1 for the left side, -1 for the right."""
    g = s.gamma
    ps, us = fan.p_star, fan.u_star
    rho_s = fan.rho_star_left if sign > 0 else fan.rho_star_right
    # mirror the right side onto the left-side formulas
    x = sign * xi
    u0 = sign * s.u
    ustar = sign * us
    rho = np.full_like(x, s.rho)
    u = np.full_like(x, u0)
    p = np.full_like(x, s.p)
    if ps > s.p:
        S = u0 - s.c * np.sqrt((g + 1.0) / (2.0 * g) * ps / s.p + (g - 1.0) / (2.0 * g))
        star = x >= S
        rho[star], u[star], p[star] = rho_s, ustar, ps
    else:
        head = u0 - s.c
        c_star = s.c * (ps / s.p) ** ((g - 1.0) / (2.0 * g))
        tail = ustar - c_star
        fan_mask = (x >= head) & (x < tail)
        star = x >= tail
        xf = x[fan_mask]
        base = 2.0 / (g + 1.0) + (g - 1.0) / ((g + 1.0) * s.c) * (u0 - xf)
        rho[fan_mask] = s.rho * base ** (2.0 / (g - 1.0))
        u[fan_mask] = 2.0 / (g + 1.0) * (s.c + 0.5 * (g - 1.0) * u0 + xf)
        p[fan_mask] = s.p * base ** (2.0 * g / (g - 1.0))
        rho[star], u[star], p[star] = rho_s, ustar, ps
    return rho, sign * u, p


def sample_exact(fan, xi):
    """Primitive state at the similarity coordinates ``xi = x/t``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    left = xi < fan.u_star
    rhoL, uL, pL = _sample_side(fan.left, fan, xi, 1.0)
    rhoR, uR, pR = _sample_side(fan.right, fan, xi, -1.0)
    rho = np.where(left, rhoL, rhoR)
    u = np.where(left, uL, uR)
    p = np.where(left, pL, pR)
    sh = (-1,) + (1,) * xi.ndim
    Y = np.where(left[None], fan.left.Y.reshape(sh), fan.right.Y.reshape(sh))
    _, cv, _, gam = thermo.mixture_laws(fan.params, Y)
    e = p / ((gam - 1.0) * rho)
    return thermo.Primitive(Y=Y, rho=rho, v=u[None], p=p, T=e / cv, e=e)


def sample_conserved(fan, xi):
    prim = sample_exact(fan, xi)
    return thermo.prim_to_cons(fan.params, prim.Y, prim.rho, prim.v, prim.p)
