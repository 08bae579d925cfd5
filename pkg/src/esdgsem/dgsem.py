"""Gauss-Lobatto DGSEM with flux differencing and a nodal positivity limiter.

Solution arrays are ``(nvar, K, P)`` in 1D and ``(nvar, K, P, P)`` in 2D with
``P = p + 1`` and node axes ordered ``[i (xi), j (eta)]``. The residual ``R``
returned by :func:`dg_residual` is the quadrature-weighted one, so the
semi-discrete scheme reads ``mass * dU/dt = -R`` with ``mass = w_i w_j J``.

Degree 0 is a single-node element with weight 2 that reproduces the
first-order finite-volume update; it is only reachable through
:func:`fv_equivalent_sbp`.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from . import fluxes, thermo
from .errors import (AverageInadmissible, DegenerateElement, Inadmissible, UnknownTag,
                     UnsupportedDegree)
from .fluxes import FluxConfig
from .mesh import Mesh1D, QuadMesh, bilinear_geometry, face_node_index, ghost_state, tag_kind

LIMITER_EPS = 1e-10
BISECTION_TOL = 1e-12
PRACTICAL_CFL = 0.4
PRACTICAL_CFL_ROE = 0.2
THEORETICAL_FRACTION = 0.95
NUDGE = 1e-9


# ---------------------------------------------------------------------------
# SBP operators

@dataclass(frozen=True)
class SBPOperators:
    degree: int
    nodes: np.ndarray
    weights: np.ndarray
    D: np.ndarray

    @property
    def n_nodes(self):
        return self.degree + 1


def build_sbp(p):
    if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or not 1 <= p <= 8:
        raise UnsupportedDegree(f"degree {p!r} outside 1..8")
    p = int(p)
    interior = np.sort(np.real(legendre.Legendre.basis(p).deriv().roots())) if p > 1 else np.array([])
    x = np.concatenate([[-1.0], interior, [1.0]])
    x = 0.5 * (x - x[::-1])
    Pp = legendre.Legendre.basis(p)(x)
    w = 2.0 / (p * (p + 1) * Pp * Pp)
    w = 0.5 * (w + w[::-1])

    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    D = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    for a in (x, w, D):
        a.setflags(write=False)
    return SBPOperators(p, x, w, D)


def fv_equivalent_sbp():
    """Single-node element (weight 2) reproducing the first-order FV scheme."""
    x, w, D = np.zeros(1), np.full(1, 2.0), np.zeros((1, 1))
    for a in (x, w, D):
        a.setflags(write=False)
    return SBPOperators(0, x, w, D)


def _pair_operators(sbp):
    P = sbp.n_nodes
    first, second = np.triu_indices(P, 1)
    S = 2.0 * sbp.weights[:, None] * sbp.D
    # A_first[i, q] = S[i, k] for pair q = (i, k); A_second[k, q] = S[k, i]
    A_first = np.zeros((P, first.size))
    A_second = np.zeros((P, first.size))
    A_first[first, np.arange(first.size)] = S[first, second]
    A_second[second, np.arange(first.size)] = S[second, first]
    return first, second, S, A_first, A_second


# ---------------------------------------------------------------------------
# solution container

@dataclass
class SolutionField:
    U: np.ndarray
    disc: object
    t: float = 0.0

    @property
    def degree(self):
        return self.disc.sbp.degree

    @property
    def dim(self):
        return self.disc.dim

    def copy(self):
        return SolutionField(self.U.copy(), self.disc, self.t)


def _check_nodes(params, Q, shape):
    bad = ~((Q[0] > 0.0) & (Q[2] > 0.0) & (Q[3] > 0.0))
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), shape)
        raise Inadmissible(f"nodal state not admissible at element {idx[0]}, node {tuple(int(i) for i in idx[1:])}")


def _boundary_ghost(tag, u, n, inflow_states, nc):
    kind = tag_kind(tag)
    inflow = None
    if kind == "inflow":
        name = tag.split(":", 1)[1]
        if name not in inflow_states:
            raise UnknownTag(f"no inflow state registered for {tag!r}")
        inflow = inflow_states[name]
    return ghost_state(tag, u, n, inflow=inflow, nc=nc)


# ---------------------------------------------------------------------------
# 1D

class Discretization1D:
    dim = 1

    def __init__(self, mesh, params, config, sbp, inflow_states=None):
        if not isinstance(mesh, Mesh1D):
            raise TypeError("Discretization1D needs an interval mesh")
        self.mesh, self.params, self.config, self.sbp = mesh, params, config, sbp
        self.inflow_states = dict(inflow_states or {})
        self.K = mesh.n_cells
        self.P = sbp.n_nodes
        self.jac = 0.5 * mesh.dx
        self.mass = sbp.weights[None, :] * self.jac[:, None]
        self.avg_weights = np.broadcast_to(0.5 * sbp.weights, (self.K, self.P)).copy()
        self.first, self.second, self.S, self.A_first, self.A_second = _pair_operators(sbp)
        xi = sbp.nodes
        self.x = mesh.x_faces[:-1, None] + (xi[None, :] + 1.0) * self.jac[:, None]
        self.n = np.ones(1)

    def project(self, fn, nudge=False):
        """Nodal interpolation of ``fn(x) -> (nvar, ...)``.

        ``nudge`` pulls nodes a hair towards their element centre so that
        step data placed on a mesh face are sampled from the correct side.
        """
        x = self.x
        if nudge:
            c = 0.5 * (self.mesh.x_faces[:-1] + self.mesh.x_faces[1:])[:, None]
            x = x + NUDGE * (c - x)
        return np.asarray(fn(x), dtype=float)

    def face_states(self, U):
        """Left/right states of every face with the +x normal."""
        nc = self.params.n_species
        m = self.mesh
        if m.periodic:
            uL = np.roll(U[:, :, -1], 1, axis=1)
            uR = U[:, :, 0]
        else:
            first = U[:, 0, 0]
            last = U[:, -1, -1]
            gl = _boundary_ghost(m.left, first, -self.n, self.inflow_states, nc)
            gr = _boundary_ghost(m.right, last, self.n, self.inflow_states, nc)
            uL = np.concatenate([gl[:, None], U[:, :, -1]], axis=1)
            uR = np.concatenate([U[:, :, 0], gr[:, None]], axis=1)
        return uL, uR

    def residual(self, U, check=True):
        params, cfg = self.params, self.config
        Q = fluxes.node_quantities(params, U)
        if check:
            _check_nodes(params, Q, U.shape[1:])
        R = np.zeros_like(U)
        if self.P > 1:
            hp = fluxes._ec(params, Q[:, :, self.first], Q[:, :, self.second], self.n, cfg.ec_variant)
            hd = fluxes._ec(params, Q, Q, self.n, cfg.ec_variant)
            # differences first so that locally uniform data give exact zeros
            R += np.einsum("ap,vkp->vka", self.A_first, hp - hd[:, :, self.first])
            R += np.einsum("ap,vkp->vka", self.A_second, hp - hd[:, :, self.second])

        uL, uR = self.face_states(U)
        H = fluxes._interface(params, uL, fluxes.node_quantities(params, uL),
                              uR, fluxes.node_quantities(params, uR), self.n, cfg)
        periodic = self.mesh.periodic
        H_right = np.roll(H, -1, axis=1) if periodic else H[:, 1:]
        H_left = H if periodic else H[:, :-1]
        if self.sbp.degree == 0:
            R[:, :, -1] += H_right
            R[:, :, 0] += -H_left
        else:
            f_right = fluxes._physical_flux(params, U[:, :, -1], Q[:, :, -1], self.n)
            f_left = fluxes._physical_flux(params, U[:, :, 0], Q[:, :, 0], self.n)
            R[:, :, -1] += H_right - f_right
            R[:, :, 0] += -H_left + f_left
        return R

    def rhs(self, U, check=True):
        return -self.residual(U, check) / self.mass

    def traces_speed(self, U):
        """Per-element max relaxation speed over the states at its two faces."""
        uL, uR = self.face_states(U)
        lam = fluxes._max_speed_q(self.params, fluxes.node_quantities(self.params, uL),
                                  fluxes.node_quantities(self.params, uR), self.n, self.config)
        if self.mesh.periodic:
            return np.maximum(lam, np.roll(lam, -1))
        return np.maximum(lam[:-1], lam[1:])

    def practical_dt(self, U, cfl):
        avg = cell_averages(U, self.avg_weights)
        lam = fluxes.state_speed(self.params, fluxes.node_quantities(self.params, avg), self.config)
        # 1D analogue of sqrt(sum |e|^2)/|k| for a square cell of side dx
        return cfl / np.max(2.0 / self.mesh.dx * lam)

    def theoretical_dt(self, U, fraction):
        p = max(self.sbp.degree, 1)
        bound = 1.0 / (2.0 * p * (p + 1)) if self.sbp.degree > 0 else 0.5
        lam = self.traces_speed(U)
        return fraction * bound * np.min(self.mesh.dx / lam)


# ---------------------------------------------------------------------------
# 2D

class Discretization2D:
    dim = 2

    def __init__(self, mesh, params, config, sbp, inflow_states=None):
        if not isinstance(mesh, QuadMesh):
            raise TypeError("Discretization2D needs a quadrilateral mesh")
        self.mesh, self.params, self.config, self.sbp = mesh, params, config, sbp
        self.inflow_states = dict(mesh.inflow_states)
        self.inflow_states.update(inflow_states or {})
        K, P, p = mesh.n_elements, sbp.n_nodes, sbp.degree
        self.K, self.P = K, P
        w = sbp.weights
        xy = mesh.vertices[mesh.elements]
        if p == 0:
            self.x = xy[:, :, 0].mean(axis=1)[:, None, None]
            self.y = xy[:, :, 1].mean(axis=1)[:, None, None]
            self.mass = mesh.area[:, None, None].copy()
            self.jac = 0.25 * self.mass
        else:
            x, y, jac, mxi, meta = bilinear_geometry(xy, sbp.nodes)
            if np.any(jac <= 0.0):
                k = int(np.nonzero(np.any(jac <= 0.0, axis=(1, 2)))[0][0])
                raise DegenerateElement(f"element {k} has a non-positive Jacobian")
            self.x, self.y, self.jac = x, y, jac
            self.metric_xi, self.metric_eta = mxi, meta
            self.mass = w[None, :, None] * w[None, None, :] * jac
            self.first, self.second, self.S, self.A_first, self.A_second = _pair_operators(sbp)
            f, s = self.first, self.second
            self.mxi_pair = 0.5 * (mxi[:, :, f, :] + mxi[:, :, s, :])
            self.meta_pair = 0.5 * (meta[:, :, :, f] + meta[:, :, :, s])
            self.A_full = self.A_first + self.A_second
            self.S_diag = np.diag(self.S).copy()
        self.quad_area = self.mass.sum(axis=(1, 2))
        self.avg_weights = (self.mass / self.quad_area[:, None, None]).reshape(K, -1)

        # face-node index tables, neighbour traversal reversed
        NI = np.array([[face_node_index(lf, k, p)[0] for k in range(P)] for lf in range(4)])
        NJ = np.array([[face_node_index(lf, k, p)[1] for k in range(P)] for lf in range(4)])
        self.NI, self.NJ = NI, NJ
        m = mesh
        self.inner = np.nonzero(m.neighbor >= 0)[0]
        self.bnd = np.nonzero(m.neighbor < 0)[0]
        self.own_i = NI[m.owner_local]
        self.own_j = NJ[m.owner_local]
        nl = m.neighbor_local[self.inner]
        self.nb_i = NI[nl][:, ::-1]
        self.nb_j = NJ[nl][:, ::-1]
        self.normal = m.normal.T[:, :, None]  # (2, F, 1)
        self.face_w = w[None, :] * (0.5 * m.length)[:, None]
        self.bnd_groups = {}
        for f in self.bnd:
            self.bnd_groups.setdefault(m.tag[f], []).append(f)
        self.bnd_groups = {t: np.array(v) for t, v in self.bnd_groups.items()}
        self.own_groups = [np.nonzero(m.owner_local == lf)[0] for lf in range(4)]
        self.nb_groups = [np.nonzero(nl == lf)[0] for lf in range(4)]
        edge_len = m.edge_lengths()
        self.sqrt_e2 = np.sqrt(np.sum(edge_len ** 2, axis=1))
        sub_area, sub_per = m.sub_triangles()
        self.sub_ratio = np.max(sub_per / edge_len, axis=1)
        self.perimeter = edge_len.sum(axis=1)
        if p > 0:
            jt = np.min(np.stack([self.jac[:, NI[lf], NJ[lf]] for lf in range(4)]), axis=0)
            self.jac_tilde = jt  # (K, P)

    def project(self, fn, nudge=False):
        """Nodal interpolation of ``fn(x, y) -> (nvar, ...)``."""
        x, y = self.x, self.y
        if nudge:
            xy = self.mesh.vertices[self.mesh.elements].mean(axis=1)
            x = x + NUDGE * (xy[:, 0, None, None] - x)
            y = y + NUDGE * (xy[:, 1, None, None] - y)
        return np.asarray(fn(x, y), dtype=float)

    def face_states(self, U):
        m = self.mesh
        nc = self.params.n_species
        own = U[:, m.owner[:, None], self.own_i, self.own_j]  # (nvar, F, P)
        plus = np.empty_like(own)
        plus[:, self.inner] = U[:, m.neighbor[self.inner][:, None], self.nb_i, self.nb_j]
        for tag, faces in self.bnd_groups.items():
            plus[:, faces] = _boundary_ghost(tag, own[:, faces], self.normal[:, faces], self.inflow_states, nc)
        return own, plus

    def residual(self, U, check=True):
        params, cfg = self.params, self.config
        Q = fluxes.node_quantities(params, U)
        if check:
            _check_nodes(params, Q, U.shape[1:])
        R = np.zeros_like(U)
        w = self.sbp.weights
        if self.sbp.degree > 0:
            f, s = self.first, self.second
            h = fluxes._ec(params, Q[:, :, f, :], Q[:, :, s, :], self.mxi_pair, cfg.ec_variant)
            vol = np.einsum("ap,vkpj->vkaj", self.A_full, h)
            vol += self.S_diag[None, None, :, None] * fluxes._physical_flux(params, U, Q, self.metric_xi)
            R += w[None, None, None, :] * vol
            h = fluxes._ec(params, Q[:, :, :, f], Q[:, :, :, s], self.meta_pair, cfg.ec_variant)
            vol = np.einsum("bp,vkip->vkib", self.A_full, h)
            vol += self.S_diag[None, None, None, :] * fluxes._physical_flux(params, U, Q, self.metric_eta)
            R += w[None, None, :, None] * vol

        own, plus = self.face_states(U)
        n = self.normal
        H = fluxes._interface(params, own, fluxes.node_quantities(params, own),
                              plus, fluxes.node_quantities(params, plus), n, cfg)
        inner = self.inner
        if self.sbp.degree == 0:
            d_own = H
            d_nb = -H[:, inner]
        else:
            d_own = H - fluxes.physical_flux(params, own, n, check=False)
            nb = plus[:, inner]
            d_nb = fluxes.physical_flux(params, nb, n[:, inner], check=False) - H[:, inner]
        c_own = self.face_w * d_own
        c_nb = self.face_w[inner] * d_nb
        m = self.mesh
        for lf in range(4):
            g = self.own_groups[lf]
            R[:, m.owner[g][:, None], self.NI[lf], self.NJ[lf]] += c_own[:, g]
            g = self.nb_groups[lf]
            R[:, m.neighbor[inner][g][:, None], self.NI[lf][::-1], self.NJ[lf][::-1]] += c_nb[:, g]
        return R

    def rhs(self, U, check=True):
        return -self.residual(U, check) / self.mass

    def practical_dt(self, U, cfl):
        avg = cell_averages(U, self.avg_weights)
        lam = fluxes.state_speed(self.params, fluxes.node_quantities(self.params, avg), self.config)
        return cfl / np.max(self.sqrt_e2 / self.mesh.area * lam)

    def traces_speed(self, U):
        own, plus = self.face_states(U)
        lam = fluxes._max_speed_q(self.params, fluxes.node_quantities(self.params, own),
                                  fluxes.node_quantities(self.params, plus), self.normal, self.config)
        lam = lam.max(axis=1)
        return lam[self.mesh.element_faces].max(axis=1)

    def theoretical_dt(self, U, fraction):
        p = self.sbp.degree
        lam = self.traces_speed(U)
        if p == 0:
            rate = self.perimeter / self.mesh.area * self.sub_ratio * lam
            return fraction * 0.5 / np.max(rate)
        rate = self.sub_ratio * (self.perimeter / self.jac_tilde.min(axis=1)) * lam
        return fraction / (2.0 * p * (p + 1)) / np.max(rate)


_CACHE = {}


def discretization(mesh, params, config=FluxConfig(), sbp=None, inflow_states=None):
    """Build (or reuse) the precomputed operators for ``mesh`` and ``sbp``."""
    if sbp is None:
        sbp = build_sbp(3)
    key = (id(mesh), id(params), config, sbp.degree, tuple(sorted((inflow_states or {}).keys())))
    hit = _CACHE.get(key)
    if hit is not None and hit.mesh is mesh and hit.params is params and not inflow_states:
        return hit
    cls = Discretization1D if isinstance(mesh, Mesh1D) else Discretization2D
    disc = cls(mesh, params, config, sbp, inflow_states)
    if len(_CACHE) > 32:
        _CACHE.clear()
    _CACHE[key] = disc
    return disc


def _disc_for(field, mesh, params, config, sbp):
    d = field.disc
    if d is not None and d.mesh is mesh and d.params is params and d.config == config \
            and d.sbp.degree == sbp.degree:
        return d
    return discretization(mesh, params, config, sbp, getattr(d, "inflow_states", None))


# ---------------------------------------------------------------------------
# public API

def project(disc, fn, t=0.0, nudge=False):
    return SolutionField(disc.project(fn, nudge), disc, t)


def dg_residual(field, mesh, params, config, sbp):
    return _disc_for(field, mesh, params, config, sbp).residual(field.U)


def cell_averages(U, weights):
    """All cell averages, shape (nvar, K)."""
    K = U.shape[1]
    return np.sum(U.reshape(U.shape[0], K, -1) * weights[None], axis=2)


def cell_average(field, kappa):
    U = field.U
    w = field.disc.avg_weights[kappa]
    return np.sum(U[:, kappa].reshape(U.shape[0], -1) * w[None], axis=1)


def _element_ids(bad):
    return ", ".join(str(int(k)) for k in np.nonzero(bad)[0][:5])


def limit_nodes(U, weights, params, eps=LIMITER_EPS):
    """Positivity limiter on ``U`` (modified in place); returns the activation count."""
    nc = params.n_species
    nvar, K = U.shape[0], U.shape[1]
    V = U.reshape(nvar, K, -1)
    avg = np.sum(V * weights[None], axis=2)
    rho_a = avg[nc - 1]
    rhoe_a = thermo.internal_energy_density(params, avg)
    r_a, _, _, _ = thermo.mix_storage(params, thermo.mass_fractions(params, avg))
    bad = ~((rho_a > eps) & (rhoe_a > 0.0) & (r_a > 0.0))
    if np.any(bad):
        raise AverageInadmissible(f"inadmissible cell average in element(s) {_element_ids(bad)}")
    touched = np.zeros(K, dtype=bool)
    # margins keep the bounds after the rounding of the convex combinations
    eps_rho = eps + 1e-14 * rho_a

    rho = V[nc - 1]
    rmin = rho.min(axis=1)
    act = rmin < eps_rho
    if np.any(act):
        th = np.minimum((rho_a[act] - eps_rho[act]) / (rho_a[act] - rmin[act]), 1.0)
        V[nc - 1, act] = th[:, None] * rho[act] + (1.0 - th[:, None]) * rho_a[act, None]
        touched |= act

    r_ref = params.r_ref
    for i in range(nc - 1):
        dr = params.r_s[i] - r_ref
        if dr <= 0.0:
            continue
        bound = -r_ref / ((nc - 1) * dr) + eps
        rho_b = V[nc - 1]
        Y = V[i] / rho_b
        ymin = Y.min(axis=1)
        act = ymin < bound
        if np.any(act):
            rY_a, r_a_ = avg[i, act], rho_a[act]
            th = np.minimum((rY_a - r_a_ * bound) / (rY_a - r_a_ * ymin[act]), 1.0)
            th = np.maximum(th, 0.0)
            V[i, act] = th[:, None] * V[i, act] + (1.0 - th[:, None]) * rho_b[act] * (rY_a / r_a_)[:, None]
            touched |= act

    # energy: bisection per node on the segment towards the average
    e_a = rhoe_a / rho_a
    eps_e = eps + 1e-14 * np.abs(avg[-1] / rho_a)

    def g(Vs, target):
        rho_s = Vs[nc - 1]
        mom = Vs[nc:-1]
        return Vs[-1] * rho_s - 0.5 * np.sum(mom * mom, axis=0) - target * rho_s * rho_s

    need = np.any(g(V, eps_e[:, None]) < 0.0, axis=1)
    if np.any(need):
        if np.any(e_a[need] < eps_e[need]):
            raise AverageInadmissible("cell-average internal energy below the limiter threshold")
        Vn = V[:, need]
        an = avg[:, need][:, :, None]
        tgt = eps_e[need][:, None]
        lo = np.zeros(Vn.shape[1:])
        hi = np.ones(Vn.shape[1:])
        ok1 = g(Vn, tgt) >= 0.0
        lo[ok1] = 1.0
        while np.max(hi - lo) > BISECTION_TOL:
            mid = 0.5 * (lo + hi)
            good = g(an + mid[None] * (Vn - an), tgt) >= 0.0
            lo = np.where(good, mid, lo)
            hi = np.where(good, hi, mid)
        th = lo.min(axis=1)
        idx = np.nonzero(need)[0]
        sub = th < 1.0
        idx, th = idx[sub], th[sub]
        V[:, idx] = th[None, :, None] * V[:, idx] + (1.0 - th[None, :, None]) * avg[:, idx][:, :, None]
        touched[idx] = True
    if not np.shares_memory(V, U):
        U[...] = V.reshape(U.shape)
    return int(np.count_nonzero(touched))


def apply_limiter(field, params, eps=LIMITER_EPS):
    """Limit a copy of ``field``; returns ``(field, activations)``."""
    out = field.copy()
    count = limit_nodes(out.U, field.disc.avg_weights, params, eps)
    return out, count


def dgsem_cfl_dt(field, mesh, params, config, sbp, mode="practical", cfl=None):
    disc = _disc_for(field, mesh, params, config, sbp)
    if mode == "practical":
        if cfl is None:
            cfl = PRACTICAL_CFL_ROE if config.interface == "es-roe" else PRACTICAL_CFL
        return float(disc.practical_dt(field.U, cfl))
    if mode == "theoretical":
        return float(disc.theoretical_dt(field.U, THEORETICAL_FRACTION if cfl is None else cfl))
    raise ValueError(f"unknown time-step mode {mode!r}")
