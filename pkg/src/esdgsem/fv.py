"""First-order finite-volume schemes on interval and quadrilateral meshes."""

from dataclasses import dataclass, field

import numpy as np

from . import fluxes, thermo
from .errors import CFLViolation, Inadmissible, UnknownTag
from .mesh import Mesh1D, ghost_state, tag_kind

DEFAULT_CFL = 0.45
CFL_BOUND = 0.5


@dataclass
class FVState:
    U: np.ndarray          # (nvar, N)
    mesh: object
    t: float = 0.0
    step: int = 0
    inflow_states: dict = field(default_factory=dict)


def _ghost(tag, u, n, inflow_states, nc):
    inflow = None
    if tag_kind(tag) == "inflow":
        name = tag.split(":", 1)[1]
        if name not in inflow_states:
            raise UnknownTag(f"no inflow state registered for {tag!r}")
        inflow = inflow_states[name]
    return ghost_state(tag, u, n, inflow=inflow, nc=nc)


def _require(params, U):
    ok = thermo.is_admissible(params, U)
    if not np.all(ok):
        j = int(np.argmin(ok))
        raise Inadmissible(f"cell {j} left the admissible set")


# ---------------------------------------------------------------------------
# 1D

def _faces_1d(st, params):
    m = st.mesh
    U = st.U
    nc = params.n_species
    one = np.ones(1)
    if m.periodic:
        return np.roll(U, 1, axis=1), U
    gl = _ghost(m.left, U[:, 0], -one, st.inflow_states, nc)
    gr = _ghost(m.right, U[:, -1], one, st.inflow_states, nc)
    return (np.concatenate([gl[:, None], U], axis=1),
            np.concatenate([U, gr[:, None]], axis=1))


def _cell_speeds_1d(st, params, config, uL, uR):
    lam = fluxes._max_speed_q(params, fluxes.node_quantities(params, uL),
                              fluxes.node_quantities(params, uR), np.ones(1), config)
    if st.mesh.periodic:
        return np.maximum(lam, np.roll(lam, -1))
    return np.maximum(lam[:-1], lam[1:])


def cfl_dt_1d(fvstate, params, config, cfl=DEFAULT_CFL):
    if not 0.0 < cfl <= CFL_BOUND:
        raise ValueError("cfl must lie in (0, 1/2]")
    uL, uR = _faces_1d(fvstate, params)
    lam = _cell_speeds_1d(fvstate, params, config, uL, uR)
    return float(cfl * np.min(fvstate.mesh.dx / lam))


def step_1d(fvstate, params, config, dt):
    st = fvstate
    if not isinstance(st.mesh, Mesh1D):
        raise TypeError("step_1d needs an interval mesh")
    _require(params, st.U)
    uL, uR = _faces_1d(st, params)
    QL = fluxes.node_quantities(params, uL)
    QR = fluxes.node_quantities(params, uR)
    dx = st.mesh.dx
    lam = fluxes._max_speed_q(params, QL, QR, np.ones(1), config)
    lam_cell = np.maximum(lam, np.roll(lam, -1)) if st.mesh.periodic else np.maximum(lam[:-1], lam[1:])
    if not np.all(dt * lam_cell / dx < CFL_BOUND):
        raise CFLViolation(f"dt={dt} violates the three-point CFL bound")
    H = fluxes._interface(params, uL, QL, uR, QR, np.ones(1), config)
    if st.mesh.periodic:
        acc = np.roll(H, -1, axis=1) - H
    else:
        acc = H[:, 1:] - H[:, :-1]
    U = st.U + dt * (-acc / dx)
    _require(params, U)
    return FVState(U, st.mesh, st.t + dt, st.step + 1, st.inflow_states)


# ---------------------------------------------------------------------------
# 2D

def _face_pairs_2d(st, mesh, params):
    nc = params.n_species
    U = st.U
    inner = mesh.neighbor >= 0
    own = U[:, mesh.owner]
    plus = np.empty_like(own)
    plus[:, inner] = U[:, mesh.neighbor[inner]]
    n = mesh.normal.T
    inflow = dict(mesh.inflow_states)
    inflow.update(st.inflow_states)
    tags = np.array(mesh.tag, dtype=object)
    for t in set(tags[~inner]):
        sel = np.nonzero((tags == t) & ~inner)[0]
        plus[:, sel] = _ghost(t, own[:, sel], n[:, sel], inflow, nc)
    return own, plus, n


def _rates_2d(mesh, params, config, own, plus, n):
    lam = fluxes._max_speed_q(params, fluxes.node_quantities(params, own),
                              fluxes.node_quantities(params, plus), n, config)
    lam_k = lam[mesh.element_faces].max(axis=1)
    L = mesh.edge_lengths()
    _, sub_per = mesh.sub_triangles()
    ratio = np.max(sub_per / L, axis=1)
    return L.sum(axis=1) / mesh.area * ratio * lam_k


def cfl_dt_2d(fvstate, mesh, params, config, cfl=DEFAULT_CFL):
    if not 0.0 < cfl <= CFL_BOUND:
        raise ValueError("cfl must lie in (0, 1/2]")
    own, plus, n = _face_pairs_2d(fvstate, mesh, params)
    return float(cfl / np.max(_rates_2d(mesh, params, config, own, plus, n)))


def step_2d(fvstate, mesh, params, config, dt):
    st = fvstate
    _require(params, st.U)
    own, plus, n = _face_pairs_2d(st, mesh, params)
    Qo = fluxes.node_quantities(params, own)
    Qp = fluxes.node_quantities(params, plus)
    if not np.all(dt * _rates_2d(mesh, params, config, own, plus, n) <= CFL_BOUND):
        raise CFLViolation(f"dt={dt} violates the quadrilateral CFL bound")
    H = fluxes._interface(params, own, Qo, plus, Qp, n, config)
    acc = np.zeros_like(st.U)
    inner = np.nonzero(mesh.neighbor >= 0)[0]
    L = mesh.length
    # accumulate by local edge id so every cell sums its edges in the same order
    for lf in range(4):
        sel = np.nonzero(mesh.owner_local == lf)[0]
        acc[:, mesh.owner[sel]] += L[sel] * H[:, sel]
        sel = inner[mesh.neighbor_local[inner] == lf]
        acc[:, mesh.neighbor[sel]] += L[sel] * (-H[:, sel])
    U = st.U + dt * (-acc / mesh.area)
    _require(params, U)
    return FVState(U, st.mesh, st.t + dt, st.step + 1, st.inflow_states)
