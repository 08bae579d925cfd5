"""Mixture thermodynamics for the multicomponent Euler model.

Conserved vectors are numpy arrays whose first axis holds the variables

    (rhoY_1, ..., rhoY_{nc-1}, rho, rho*v_1, ..., rho*v_d, rhoE)

and whose trailing axes are arbitrary (cells, nodes, pairs, ...). Species are
kept in *storage order*: the species with the smallest gas constant r_i is
moved to the last slot and is never stored explicitly. ``MixtureParams.order``
maps storage slots back to the order the user gave, and every public function
that takes or returns mass fractions ``Y`` uses the user order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import Inadmissible, NonPhysicalComposition

Y_SUM_TOL = 1e-12
# slack on mass fractions; matches the limiter epsilon
Y_SLACK = 1e-10


class MixtureParams:
    """Per-species constants (gamma_i, Cv_i, s_i^inf) and derived quantities."""

    __slots__ = (
        "n_species", "gamma", "cv", "s_inf", "order", "inverse",
        "gamma_s", "cv_s", "r_s", "cp_s", "sinf_s", "gamma_max", "_frozen",
    )

    def __init__(self, gamma, cv, s_inf=None):
        gamma = tuple(float(g) for g in gamma)
        cv = tuple(float(c) for c in cv)
        if len(gamma) < 2 or len(gamma) != len(cv):
            raise ValueError("need matching gamma and cv for at least two species")
        if s_inf is None:
            s_inf = (0.0,) * len(gamma)
        s_inf = tuple(float(s) for s in s_inf)
        if len(s_inf) != len(gamma):
            raise ValueError("s_inf must have one entry per species")
        if any(g <= 1.0 for g in gamma) or any(c <= 0.0 for c in cv):
            raise ValueError("each species needs gamma > 1 and cv > 0")

        nc = len(gamma)
        r_user = np.array([(g - 1.0) * c for g, c in zip(gamma, cv)])
        ref = int(np.argmin(r_user))
        order = np.array([i for i in range(nc) if i != ref] + [ref])

        def frozen(a):
            a = np.asarray(a, dtype=float)
            a.setflags(write=False)
            return a

        self._frozen = False
        self.n_species = nc
        self.gamma = gamma
        self.cv = cv
        self.s_inf = s_inf
        self.order = order
        self.order.setflags(write=False)
        self.inverse = np.argsort(order)
        self.inverse.setflags(write=False)
        g = np.array(gamma)[order]
        c = np.array(cv)[order]
        self.gamma_s = frozen(g)
        self.cv_s = frozen(c)
        self.r_s = frozen((g - 1.0) * c)
        self.cp_s = frozen(g * c)
        self.sinf_s = frozen(np.array(s_inf)[order])
        self.gamma_max = max(gamma)
        self._frozen = True

    def __setattr__(self, name, value):
        if getattr(self, "_frozen", False):
            raise AttributeError("MixtureParams is immutable")
        object.__setattr__(self, name, value)

    @property
    def r_ref(self):
        return self.r_s[-1]

    @property
    def cv_ref(self):
        return self.cv_s[-1]

    def n_vars(self, dim):
        return self.n_species + dim + 1

    def dim_of(self, u):
        return np.shape(u)[0] - self.n_species - 1

    def __repr__(self):
        return f"MixtureParams(gamma={self.gamma}, cv={self.cv})"


@dataclass
class State:
    """A single conserved state; ``rhoY`` is in storage order (reference species omitted)."""

    rhoY: np.ndarray
    rho: float
    mom: np.ndarray
    rhoE: float

    def to_array(self):
        return np.concatenate([np.atleast_1d(self.rhoY), [self.rho], np.atleast_1d(self.mom), [self.rhoE]])

    @classmethod
    def from_array(cls, params, u):
        u = np.asarray(u, dtype=float)
        nc = params.n_species
        return cls(u[: nc - 1].copy(), float(u[nc - 1]), u[nc:-1].copy(), float(u[-1]))


@dataclass
class Primitive:
    Y: np.ndarray
    rho: np.ndarray
    v: np.ndarray
    p: np.ndarray
    T: np.ndarray
    e: np.ndarray


def as_array(u):
    if isinstance(u, State):
        return u.to_array()
    return np.asarray(u, dtype=float)


def to_storage(params, Y):
    return np.asarray(Y, dtype=float)[params.order]


def to_user(params, Ys):
    return np.asarray(Ys)[params.inverse]


def mix_storage(params, Ys):
    """Mixture r, Cv, Cp and gamma from storage-ordered mass fractions (axis 0)."""
    shape = (-1,) + (1,) * (np.ndim(Ys) - 1)
    cv = np.sum(Ys * params.cv_s.reshape(shape), axis=0)
    cp = np.sum(Ys * params.cp_s.reshape(shape), axis=0)
    r = np.sum(Ys * params.r_s.reshape(shape), axis=0)
    return r, cv, cp, cp / cv


def check_composition(Y):
    Y = np.asarray(Y, dtype=float)
    if np.any(np.abs(np.sum(Y, axis=0) - 1.0) > Y_SUM_TOL):
        raise NonPhysicalComposition("mass fractions do not sum to one")
    if np.any(Y < -Y_SLACK) or np.any(Y > 1.0 + Y_SLACK):
        raise NonPhysicalComposition("mass fraction outside [0, 1]")


def mixture_laws(params, Y):
    """Return ``(r, Cv, Cp, gamma)`` of the mixture with user-ordered fractions ``Y``."""
    check_composition(Y)
    return mix_storage(params, to_storage(params, Y))


def mass_fractions(params, u):
    """All nc mass fractions in storage order."""
    nc = params.n_species
    rho = u[nc - 1]
    Yp = u[: nc - 1] / rho
    return np.concatenate([Yp, (1.0 - np.sum(Yp, axis=0))[None]], axis=0)


def split(params, u):
    nc = params.n_species
    return u[: nc - 1], u[nc - 1], u[nc:-1], u[-1]


def internal_energy_density(params, u):
    _, rho, mom, rhoE = split(params, u)
    return rhoE - 0.5 * np.sum(mom * mom, axis=0) / rho


def is_admissible(params, u):
    u = as_array(u)
    rho = u[params.n_species - 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        Ys = mass_fractions(params, u)
        rhoe = internal_energy_density(params, u)
        ok = (rho > 0.0) & (rhoe > 0.0)
        ok &= np.all((Ys >= -Y_SLACK) & (Ys <= 1.0 + Y_SLACK), axis=0)
    return ok


def require_admissible(params, u, what="state"):
    ok = is_admissible(params, u)
    if not np.all(ok):
        bad = np.argwhere(~np.atleast_1d(ok))[0]
        raise Inadmissible(f"{what} not admissible at index {tuple(int(b) for b in bad)}")


def prim_to_cons(params, Y, rho, v, p):
    """Conserved array from user-ordered ``Y`` (nc, ...), ``rho``, ``v`` (d, ...), ``p``."""
    Ys = to_storage(params, Y)
    rho = np.asarray(rho, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.ndim == rho.ndim:
        v = v[None]
    r, cv, _, _ = mix_storage(params, Ys)
    rhoe = p / (r / cv)
    mom = rho * v
    rhoE = rhoe + 0.5 * np.sum(mom * v, axis=0)
    return np.concatenate([Ys[:-1] * rho, rho[None], mom, rhoE[None]], axis=0)


def cons_to_prim(params, u, check=True):
    u = as_array(u)
    if check:
        rho = u[params.n_species - 1]
        if np.any(rho <= 0.0):
            raise Inadmissible("non-positive density")
        if np.any(internal_energy_density(params, u) <= 0.0):
            raise Inadmissible("non-positive internal energy")
    _, rho, mom, _ = split(params, u)
    Ys = mass_fractions(params, u)
    r, cv, _, _ = mix_storage(params, Ys)
    rhoe = internal_energy_density(params, u)
    e = rhoe / rho
    return Primitive(Y=to_user(params, Ys), rho=rho, v=mom / rho, p=(r / cv) * rhoe, T=e / cv, e=e)


def pressure(params, u):
    Ys = mass_fractions(params, u)
    r, cv, _, _ = mix_storage(params, Ys)
    return (r / cv) * internal_energy_density(params, u)


def sound_speed(params, Y, e):
    e = np.asarray(e, dtype=float)
    if np.any(e <= 0.0):
        raise Inadmissible("sound speed needs e > 0")
    _, _, _, gam = mixture_laws(params, Y)
    return np.sqrt(gam * (gam - 1.0) * e)


def _species_shape(params, ndim):
    return (-1,) + (1,) * ndim


def specific_entropy(params, u):
    Ys = mass_fractions(params, u)
    rho = u[params.n_species - 1]
    r, cv, _, _ = mix_storage(params, Ys)
    e = internal_energy_density(params, u) / rho
    sh = _species_shape(params, np.ndim(rho))
    cv_i = params.cv_s.reshape(sh)
    r_i = params.r_s.reshape(sh)
    K = np.sum(Ys * (cv_i * np.log(cv_i / cv) + r_i * np.log(r_i / r) + params.sinf_s.reshape(sh)), axis=0)
    return -r * np.log(rho) + cv * np.log(e) + K


def entropy_pair(params, u, check=True):
    """Mathematical entropy ``eta = -rho s`` and its flux ``q = -rho s v``."""
    u = as_array(u)
    if check:
        require_admissible(params, u)
    _, rho, mom, _ = split(params, u)
    s = specific_entropy(params, u)
    return -rho * s, -s * mom


def partial_entropies(params, u):
    Ys = mass_fractions(params, u)
    rho = u[params.n_species - 1]
    r, cv, _, _ = mix_storage(params, Ys)
    if np.any(r <= 0.0):
        raise NonPhysicalComposition("non-positive partial density")
    theta = cv * rho / internal_energy_density(params, u)
    sh = _species_shape(params, np.ndim(rho))
    cv_i = params.cv_s.reshape(sh)
    r_i = params.r_s.reshape(sh)
    rho_i = rho * r / r_i
    return -cv_i * np.log(theta) - r_i * np.log(rho_i) + cv_i * np.log(cv_i) + params.sinf_s.reshape(sh)


def entropy_vars(params, u, check=True):
    """Gradient of eta with respect to the conserved variables."""
    u = as_array(u)
    if check:
        require_admissible(params, u)
    _, rho, mom, _ = split(params, u)
    s_i = partial_entropies(params, u)
    Ys = mass_fractions(params, u)
    _, cv, _, _ = mix_storage(params, Ys)
    theta = cv * rho / internal_energy_density(params, u)
    v = mom / rho
    sh = _species_shape(params, np.ndim(rho))
    cp_i = params.cp_s.reshape(sh)
    w_species = s_i[-1] - s_i[:-1] + cp_i[:-1] - cp_i[-1]
    w_rho = cp_i[-1] - s_i[-1] - 0.5 * np.sum(v * v, axis=0) * theta
    return np.concatenate([w_species, w_rho[None], theta * v, -theta[None]], axis=0)


def entropy_potential(params, u, check=True):
    u = as_array(u)
    if check:
        require_admissible(params, u)
    _, rho, mom, _ = split(params, u)
    r, _, _, _ = mix_storage(params, mass_fractions(params, u))
    return r * mom
