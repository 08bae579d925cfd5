"""Batch front-end: case presets, config files, writers and the convergence harness.

Config files are INI-style (``configparser``) with the sections ``[case]``,
``[mesh]``, ``[scheme]``, ``[time]`` and ``[output]``. Run
``esdgsem presets --write DIR`` to get one annotated file per built-in case.
"""

import argparse
import configparser
import json
import math
import os
import sys
import time as _clock
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dgsem, fluxes, fv, thermo
from . import mesh as meshmod
from . import time as timemod
from .errors import ConfigError, IoError, ParseError, SolverError
from .exact_riemann import sample_conserved, solve_exact

THREADS_ENV = "ESDGSEM_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
FV_CFL = 0.45

# ---------------------------------------------------------------------------
# presets

_RIEMANN_TABLE = {
    # name: (left Y1, rho, u, p), (right ...), x_s, t_end, gammas, cvs
    "rp0": ((0.4, 2.0, 0.0, 1.0), (0.6, 1.5, 0.0, 2.0), 0.0, 0.2, (1.5, 1.3), (1.0, 1.0)),
    "rp1": ((0.5, 1.0, 0.0, 1.0), (0.5, 0.125, 0.0, 0.1), 0.0, 0.2, (1.5, 1.3), (1.0, 1.0)),
    "rp2": ((1.0, 1.602, 0.0, 1e6), (0.0, 1.122, 0.0, 1e5), -0.1, 3e-4, (5.0 / 3.0, 1.4), (3.12, 0.743)),
    "rp3": ((0.2, 0.99988, -1.99931, 0.4), (0.5, 0.99988, 1.99931, 0.4), 0.0, 0.15, (1.5, 1.3), (1.0, 1.0)),
    "rp4": ((1.0, 1.0, 0.0, 1.0), (0.0, 0.1, 0.0, 1.0), 0.0, 0.08, (1.6, 1.4), (1.0, 1.0)),
    "rp5": ((1.0, 1.0, 1.0, 1.0), (0.0, 0.1, 1.0, 1.0), 0.0, 0.08, (1.6, 1.4), (1.0, 1.0)),
}


def _fmt(values):
    return ", ".join(repr(float(v)) for v in values)


def _riemann_preset(name):
    left, right, xs, t_end, gam, cv = _RIEMANN_TABLE[name]
    bc = "periodic" if name == "rp0" else "nonreflecting"
    return f"""\
# Two-material shock tube {name.upper()}; states are Y_1, rho, u, p.
[case]
kind = riemann
name = {name}
gamma = {_fmt(gam)}
cv = {_fmt(cv)}
left = {_fmt(left)}
right = {_fmt(right)}
x_s = {xs!r}

[mesh]
n = 100
domain = -0.5, 0.5
bc = {bc}

[scheme]
degree = 3
interface = es-relax

[time]
integrator = ssprk34
t_end = {t_end!r}

[output]
dir = out/{name}
diagnostics_every = 10
snapshots = 0
"""


PRESETS = {name: _riemann_preset(name) for name in _RIEMANN_TABLE}

PRESETS["density_wave"] = """\
# Convection of mass-fraction and density waves at uniform velocity and pressure.
# Each wave line is mean, amplitude, wavenumber: f(x) = mean + amp*sin(2*pi*k*x).
[case]
kind = waves
name = density_wave
gamma = 1.6, 1.4
cv = 2.0, 1.0
species = 0.5, 0.25, 2
density = 1.0, 0.5, 1
velocity = 1.0
pressure = 1.0

[mesh]
n = 16
domain = 0.0, 1.0
bc = periodic

[scheme]
degree = 3
interface = es-relax

[time]
integrator = ssprk45
t_end = 5.0

[output]
dir = out/density_wave
diagnostics_every = 100
snapshots = 0
"""

PRESETS["shock_bubble"] = """\
# Reduced-resolution smoke test: Mach 1.22 shock in air hitting a helium bubble.
# Species 1 is helium, species 2 air. Lengths in bubble diameters, speeds in
# pre-shock sound speeds. The final time is a tenth of the full-scale run.
[case]
kind = shock_interface
name = shock_bubble
smoke_test = yes
gamma = 1.648, 1.4
cv = 6.89, 1.7857
ambient = 0.0, 1.0, 0.0, 0.0, 0.714280
shock_x = 4.5
shock_mach = 1.22
post_shock_side = right
shape = circle
center = 3.5, 0.0
radius = 0.5
inner_y1 = 1.0

[mesh]
nx = 190
ny = 26
bounds = 0.0, 6.5, 0.0, 0.89
left = nonreflecting
right = nonreflecting
bottom = symmetry
top = symmetry

[scheme]
degree = 2
interface = es-relax

[time]
integrator = ssprk34
t_end = 0.674

[output]
dir = out/shock_bubble
diagnostics_every = 20
snapshots = 4
"""

PRESETS["h2_bubble"] = """\
# Reduced-resolution smoke test: Mach 2 shock standing at x = 7 in a supersonic
# air stream that carries a hydrogen bubble into it. Species 1 is hydrogen.
[case]
kind = shock_interface
name = h2_bubble
smoke_test = yes
gamma = 1.41, 1.353
cv = 7.424, 0.523
ambient = 0.0, 1.0, 1.0, 0.0, 0.184619
shock_x = 7.0
shock_mach = 2.0
post_shock_side = right
shape = circle
center = 4.0, 0.0
radius = 2.8
inner_y1 = 1.0

[mesh]
nx = 120
ny = 40
bounds = 0.0, 22.5, 0.0, 7.5
left = inflow:ambient
right = nonreflecting
bottom = symmetry
top = symmetry

[scheme]
degree = 2
interface = es-relax

[time]
integrator = ssprk34
t_end = 1.69

[output]
dir = out/h2_bubble
diagnostics_every = 20
snapshots = 4
"""

PRESETS["richtmyer_meshkov"] = """\
# Reduced-resolution smoke test: Mach 1.21 shock in an air/acetone mixture
# (species 1) hitting a single-mode perturbed interface with SF6 (species 2),
# reflecting wall on the right.
[case]
kind = shock_interface
name = richtmyer_meshkov
smoke_test = yes
gamma = 1.24815, 1.0984
cv = 3.2286, 2.0019
ambient = 1.0, 1.24815, 0.0, 0.0, 1.0
shock_x = 67.0
shock_mach = 1.21
post_shock_side = left
shape = sine
interface_x = 70.0
amplitude = 0.24
wavelength = 5.9
inner_y1 = 0.0

[mesh]
nx = 270
ny = 20
bounds = 0.0, 80.1, 0.0, 5.9
left = nonreflecting
right = reflecting
bottom = periodic
top = periodic

[scheme]
degree = 2
interface = es-relax

[time]
integrator = ssprk34
t_end = 5.0

[output]
dir = out/richtmyer_meshkov
diagnostics_every = 20
snapshots = 4
"""


# ---------------------------------------------------------------------------
# config access

class _Conf:
    """Typed access to a ConfigParser with ConfigError messages naming the field."""

    def __init__(self, parser, source):
        self.parser = parser
        self.source = source

    def _err(self, section, key, msg):
        return ConfigError(f"{self.source}: [{section}] {key}: {msg}")

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def str(self, section, key, default=None):
        if not self.has(section, key):
            if default is None:
                raise self._err(section, key, "missing")
            return default
        return self.parser.get(section, key).strip()

    def float(self, section, key, default=None):
        raw = self.str(section, key, None if default is None else repr(default))
        try:
            return float(raw)
        except ValueError:
            raise self._err(section, key, f"not a number: {raw!r}") from None

    def int(self, section, key, default=None):
        raw = self.str(section, key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError:
            raise self._err(section, key, f"not an integer: {raw!r}") from None

    def bool(self, section, key, default=False):
        if not self.has(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            raise self._err(section, key, "not a boolean") from None

    def floats(self, section, key, count=None, default=None):
        raw = self.str(section, key, None if default is None else _fmt(default))
        try:
            vals = [float(t) for t in raw.replace(",", " ").split()]
        except ValueError:
            raise self._err(section, key, f"bad number list {raw!r}") from None
        if count is not None and len(vals) != count:
            raise self._err(section, key, f"expected {count} values, got {len(vals)}")
        return vals


def load_config(source):
    """Parse a config path, preset name, INI text or ConfigParser into ``(parser, label, base_dir)``."""
    if isinstance(source, configparser.ConfigParser):
        return source, "<config>", Path.cwd()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    src = str(source)
    if src in PRESETS:
        parser.read_string(PRESETS[src], source=f"preset:{src}")
        return parser, f"preset:{src}", Path.cwd()
    if src.startswith("preset:"):
        name = src.split(":", 1)[1]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
        parser.read_string(PRESETS[name], source=src)
        return parser, src, Path.cwd()
    if "\n" in src:
        try:
            parser.read_string(src, source="<string>")
        except configparser.Error as exc:
            raise ConfigError(f"<string>: {exc}") from None
        return parser, "<string>", Path.cwd()
    path = Path(src)
    if not path.is_file():
        raise ConfigError(f"config file {src} not found (and not a preset name)")
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{src}: {exc}") from None
    return parser, str(path), path.resolve().parent


def apply_overrides(parser, refine=0, degree=None, flux=None, integrator=None, out=None):
    """Return a copy of ``parser`` with command-line overrides applied."""
    new = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    new.read_dict({s: dict(parser.items(s, raw=True)) for s in parser.sections()})
    for s in ("case", "mesh", "scheme", "time", "output"):
        if not new.has_section(s):
            new.add_section(s)
    if refine:
        for key in ("n", "nx", "ny"):
            if new.has_option("mesh", key):
                new.set("mesh", key, str(int(new.get("mesh", key)) * 2 ** int(refine)))
    if degree is not None:
        new.set("scheme", "degree", str(degree))
    if flux is not None:
        new.set("scheme", "interface", flux)
    if integrator is not None:
        new.set("time", "integrator", integrator)
    if out is not None:
        new.set("output", "dir", str(out))
    return new


# ---------------------------------------------------------------------------
# cases

@dataclass
class Case:
    name: str
    params: thermo.MixtureParams
    mesh: object
    initial: object             # callable on node coordinates
    nudge: bool = False
    exact: object = None        # callable (t, coords) -> conserved, or None
    inflow_states: dict = field(default_factory=dict)
    smoke_test: bool = False


def _build_1d_mesh(conf):
    n = conf.int("mesh", "n")
    a, b = conf.floats("mesh", "domain", 2)
    bc = [t.strip() for t in conf.str("mesh", "bc", "nonreflecting").split(",")]
    if len(bc) not in (1, 2):
        raise conf._err("mesh", "bc", "give one tag or 'left, right'")
    try:
        return meshmod.build_interval(n, a, b, bc[0] if len(bc) == 1 else tuple(bc))
    except SolverError as exc:
        raise conf._err("mesh", "n/domain/bc", str(exc)) from None


def _build_2d_mesh(conf, base_dir):
    if conf.has("mesh", "file"):
        path = Path(conf.str("mesh", "file"))
        if not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise conf._err("mesh", "file", f"mesh file {path} not found")
        try:
            return meshmod.load_mesh(path)
        except SolverError as exc:
            raise conf._err("mesh", "file", str(exc)) from None
    nx, ny = conf.int("mesh", "nx"), conf.int("mesh", "ny")
    bounds = conf.floats("mesh", "bounds", 4)
    tags = {s: conf.str("mesh", s, "nonreflecting") for s in ("left", "right", "bottom", "top")}
    try:
        return meshmod.build_structured(nx, ny, bounds, tags)
    except SolverError as exc:
        raise conf._err("mesh", "nx/ny/bounds", str(exc)) from None


def _params(conf):
    gam = conf.floats("case", "gamma")
    cv = conf.floats("case", "cv")
    try:
        return thermo.MixtureParams(gam, cv)
    except (ValueError, SolverError) as exc:
        raise conf._err("case", "gamma/cv", str(exc)) from None


def _riemann_case(conf, params):
    nc = params.n_species
    left = conf.floats("case", "left", nc + 2)
    right = conf.floats("case", "right", nc + 2)
    xs = conf.float("case", "x_s", 0.0)

    def state(vals):
        Y = list(vals[: nc - 1])
        Y.append(1.0 - sum(Y))
        rho, u, p = vals[nc - 1:]
        return thermo.prim_to_cons(params, np.array(Y), np.array(rho), np.array([u]), np.array(p))

    try:
        uL, uR = state(left), state(right)
        thermo.require_admissible(params, uL, "left state")
        thermo.require_admissible(params, uR, "right state")
    except SolverError as exc:
        raise conf._err("case", "left/right", str(exc)) from None
    mesh = _build_1d_mesh(conf)

    def initial(x):
        return np.where((x < xs)[None], uL.reshape(-1, *(1,) * x.ndim), uR.reshape(-1, *(1,) * x.ndim))

    exact = None
    if not mesh.periodic:
        fan = solve_exact(params, uL, uR)

        def exact(t, x):
            if t <= 0.0:
                return initial(x)
            return sample_conserved(fan, (x - xs) / t)

    return mesh, initial, exact, True


def _waves_case(conf, params):
    if params.n_species != 2:
        raise conf._err("case", "gamma", "wave cases are two-species")
    ys = conf.floats("case", "species", 3)
    ds = conf.floats("case", "density", 3)
    u = conf.float("case", "velocity")
    p = conf.float("case", "pressure")
    mesh = _build_1d_mesh(conf)
    if not mesh.periodic:
        raise conf._err("mesh", "bc", "wave cases need a periodic interval")
    a, b = mesh.x_faces[0], mesh.x_faces[-1]
    length = b - a

    def at(x):
        s = 2.0 * np.pi * (x - a) / length
        Y1 = ys[0] + ys[1] * np.sin(ys[2] * s)
        rho = ds[0] + ds[1] * np.sin(ds[2] * s)
        return thermo.prim_to_cons(params, np.stack([Y1, 1.0 - Y1]), rho,
                                   np.full_like(x, u)[None], np.full_like(x, p))

    def exact(t, x):
        return at(a + np.mod(x - u * t - a, length))

    return mesh, at, exact, False


def _normal_shock(params, Y, rho1, u1, v1, p1, mach, post_right):
    """Post-shock state behind a normal shock moving at Mach ``mach`` into (rho1, u1, p1)."""
    _, _, _, g = thermo.mixture_laws(params, np.asarray(Y, float))
    c1 = math.sqrt(g * p1 / rho1)
    m2 = mach * mach
    p2 = p1 * (1.0 + 2.0 * g / (g + 1.0) * (m2 - 1.0))
    rho2 = rho1 * (g + 1.0) * m2 / ((g - 1.0) * m2 + 2.0)
    w1 = mach * c1
    w2 = w1 * rho1 / rho2
    if post_right:
        s = u1 - w1
        u2 = s + w2
    else:
        s = u1 + w1
        u2 = s - w2
    return rho2, u2, v1, p2


def _shock_interface_case(conf, params):
    if params.n_species != 2:
        raise conf._err("case", "gamma", "shock/interface cases are two-species")
    y_amb, rho1, u1, v1, p1 = conf.floats("case", "ambient", 5)
    y_in = conf.float("case", "inner_y1")
    xs = conf.float("case", "shock_x")
    mach = conf.float("case", "shock_mach")
    side = conf.str("case", "post_shock_side", "right")
    if side not in ("left", "right"):
        raise conf._err("case", "post_shock_side", "use 'left' or 'right'")
    shape = conf.str("case", "shape")
    if shape == "circle":
        cx, cy = conf.floats("case", "center", 2)
        rad = conf.float("case", "radius")

        def signed(x, y):
            return np.hypot(x - cx, y - cy) - rad
    elif shape == "sine":
        xi = conf.float("case", "interface_x")
        amp = conf.float("case", "amplitude")
        lam = conf.float("case", "wavelength")

        def signed(x, y):
            return xi + amp * np.cos(2.0 * np.pi * y / lam) - x
    else:
        raise conf._err("case", "shape", "use 'circle' or 'sine'")

    Y_amb = np.array([y_amb, 1.0 - y_amb])
    r_amb, _, _, _ = thermo.mixture_laws(params, Y_amb)
    T1 = p1 / (rho1 * float(r_amb))
    post_right = side == "right"
    rho2, u2, v2, p2 = _normal_shock(params, Y_amb, rho1, u1, v1, p1, mach, post_right)
    mesh = _build_2d_mesh(conf, Path(conf.base_dir))
    # default interface width: two element diameters
    diam = float(np.max(np.sqrt(np.sum(mesh.edge_lengths() ** 2, axis=1) / 2.0)))
    delta = conf.float("case", "smoothing", 2.0 * diam)
    if not delta > 0.0:
        raise conf._err("case", "smoothing", "must be positive")
    ambient = thermo.prim_to_cons(params, Y_amb, np.array(rho1), np.array([u1, v1]), np.array(p1))

    def initial(x, y):
        # tanh-smoothed indicator of the inner region (signed distance < 0 inside)
        frac = 0.5 * (1.0 - np.tanh(signed(x, y) / delta))
        Y1 = y_amb + (y_in - y_amb) * frac
        Y = np.stack([Y1, 1.0 - Y1])
        r, _, _, _ = thermo.mix_storage(params, thermo.to_storage(params, Y))
        post = (x > xs) if post_right else (x < xs)
        rho = np.where(post, rho2, p1 / (r * T1))
        u = np.where(post, u2, u1)
        v = np.where(post, v2, v1)
        p = np.where(post, p2, p1)
        # the shocked region holds ambient gas only
        Y = np.where(post[None], Y_amb.reshape(2, *(1,) * x.ndim), Y)
        return thermo.prim_to_cons(params, Y, rho, np.stack([u, v]), p)

    return mesh, initial, None, {"ambient": ambient}


def build_case(source):
    """Resolve a config into a :class:`Case`; ``source`` as in :func:`load_config`."""
    parser, label, base_dir = source if isinstance(source, tuple) else load_config(source)
    conf = _Conf(parser, label)
    conf.base_dir = base_dir
    kind = conf.str("case", "kind")
    params = _params(conf)
    name = conf.str("case", "name", kind)
    inflow = {}
    if kind == "riemann":
        mesh, initial, exact, nudge = _riemann_case(conf, params)
    elif kind == "waves":
        mesh, initial, exact, nudge = _waves_case(conf, params)
    elif kind == "shock_interface":
        mesh, initial, exact, inflow = _shock_interface_case(conf, params)
        nudge = False
    else:
        raise conf._err("case", "kind", f"unknown case kind {kind!r}")
    return Case(name, params, mesh, initial, nudge, exact, inflow, conf.bool("case", "smoke_test"))


# ---------------------------------------------------------------------------
# writers

def _primitive_nodes(field, params):
    prim = thermo.cons_to_prim(params, field.U, check=False)
    return prim


def _schlieren(field):
    """|grad rho| / rho from the element derivative matrix."""
    disc = field.disc
    nc = disc.params.n_species
    rho = field.U[nc - 1]
    if disc.sbp.degree == 0:
        return np.zeros_like(rho)
    D = disc.sbp.D
    # subtracting one nodal value per element keeps constant data exactly gradient-free
    if disc.dim == 1:
        grad = np.einsum("ia,ka->ki", D, rho - rho[:, :1]) / disc.jac[:, None]
        return np.abs(grad) / rho
    shifted = rho - rho[:, :1, :1]
    r_xi = np.einsum("ia,kaj->kij", D, shifted)
    r_eta = np.einsum("ja,kia->kij", D, shifted)
    gx = (disc.metric_xi[0] * r_xi + disc.metric_eta[0] * r_eta) / disc.jac
    gy = (disc.metric_xi[1] * r_xi + disc.metric_eta[1] * r_eta) / disc.jac
    return np.hypot(gx, gy) / rho


def write_vtk(field, mesh, path):
    """Legacy ASCII VTK unstructured grid with one point per node."""
    disc = field.disc
    if disc.mesh is not mesh:
        raise ValueError("field does not live on this mesh")
    params = disc.params
    prim = _primitive_nodes(field, params)
    schl = _schlieren(field)
    K, P = disc.K, disc.P
    if disc.dim == 1:
        xs = disc.x.reshape(-1)
        pts = np.stack([xs, np.zeros_like(xs), np.zeros_like(xs)], axis=1)
        base = (np.arange(K) * P)[:, None]
        if P == 1:
            cells = [[int(b)] for b in base[:, 0]]
            ctype = 1
        else:
            seg = np.stack([np.arange(P - 1), np.arange(1, P)], axis=1)
            cells = (base[:, None, :] + seg[None]).reshape(-1, 2).tolist()
            ctype = 3
    else:
        xs = disc.x.reshape(-1)
        pts = np.stack([xs, disc.y.reshape(-1), np.zeros_like(xs)], axis=1)
        base = np.arange(K) * P * P
        if P == 1:
            cells = [[int(b)] for b in base]
            ctype = 1
        else:
            # node (i, j) sits at local index i*P + j
            i, j = np.meshgrid(np.arange(P - 1), np.arange(P - 1), indexing="ij")
            i, j = i.ravel(), j.ravel()
            quad = np.stack([i * P + j, (i + 1) * P + j, (i + 1) * P + j + 1, i * P + j + 1], axis=1)
            cells = (base[:, None, None] + quad[None]).reshape(-1, 4).tolist()
            ctype = 9
    npts = pts.shape[0]
    nvert = len(cells[0])
    lines = ["# vtk DataFile Version 3.0", f"esdgsem t={field.t!r}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {npts} double"]
    lines += [f"{a!r} {b!r} {c!r}" for a, b, c in pts.tolist()]
    lines.append(f"CELLS {len(cells)} {len(cells) * (nvert + 1)}")
    lines += [f"{nvert} " + " ".join(str(v) for v in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(ctype)] * len(cells)
    lines.append(f"POINT_DATA {npts}")

    def scalar(name, values):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(repr(float(v)) for v in np.ravel(values))

    scalar("rho", prim.rho)
    for s in range(params.n_species):
        scalar(f"Y_{s + 1}", prim.Y[s])
    vel = np.zeros((npts, 3))
    for d in range(prim.v.shape[0]):
        vel[:, d] = prim.v[d].ravel()
    lines.append("VECTORS velocity double")
    lines += [f"{a!r} {b!r} {c!r}" for a, b, c in vel.tolist()]
    scalar("p", prim.p)
    scalar("T", prim.T)
    scalar("schlieren", schl)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def write_csv_1d(field, path):
    """Per-node CSV with columns x, Y_1..Y_nc, rho, u, p sorted by x."""
    disc = field.disc
    if disc.dim != 1:
        raise ValueError("write_csv_1d needs a one-dimensional field")
    params = disc.params
    prim = _primitive_nodes(field, params)
    x = disc.x.ravel()
    order = np.argsort(x, kind="stable")
    cols = [x] + [prim.Y[s].ravel() for s in range(params.n_species)] \
        + [prim.rho.ravel(), prim.v[0].ravel(), prim.p.ravel()]
    header = ["x"] + [f"Y_{s + 1}" for s in range(params.n_species)] + ["rho", "u", "p"]
    rows = np.stack(cols, axis=1)[order]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows.tolist():
                fh.write(",".join(repr(v) for v in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


# ---------------------------------------------------------------------------
# diagnostics

DIAG_HEADER_TAIL = ["energy", "entropy", "min_rho", "min_e", "limiter_activations"]


def diagnostics_row(field, params, limiter_count):
    U = field.U
    nc = params.n_species
    tot = timemod.totals(field)
    partial = np.concatenate([tot[: nc - 1], [tot[nc - 1] - np.sum(tot[: nc - 1])]])
    species = thermo.to_user(params, partial)
    e = thermo.internal_energy_density(params, U) / U[nc - 1]
    return ([float(field.t)] + [float(m) for m in species]
            + [float(tot[-1]), timemod.total_entropy(field, params),
               float(U[nc - 1].min()), float(e.min()), int(limiter_count)])


def density_errors(field, params, exact):
    """L1, L2 and Linf norms of rho_h - rho at the nodes, quadrature-weighted."""
    disc = field.disc
    nc = params.n_species
    coords = (disc.x,) if disc.dim == 1 else (disc.x, disc.y)
    ref = exact(field.t, *coords)[nc - 1]
    err = field.U[nc - 1] - ref
    m = disc.mass
    return (float(np.sum(m * np.abs(err))), float(np.sqrt(np.sum(m * err * err))),
            float(np.max(np.abs(err))))


# ---------------------------------------------------------------------------
# run

@dataclass
class RunOutcome:
    status: int
    summary: dict
    field: object = None


def _scheme(conf):
    degree = conf.int("scheme", "degree", 3)
    iface = conf.str("scheme", "interface", "es-relax")
    variant = conf.str("scheme", "ec_variant", "primary")
    kw = {"interface": iface, "ec_variant": variant}
    if conf.has("scheme", "gamma_relax"):
        kw["gamma_relax"] = conf.float("scheme", "gamma_relax")
    try:
        return degree, fluxes.FluxConfig(**kw)
    except (ValueError, TypeError) as exc:
        raise conf._err("scheme", "interface/ec_variant", str(exc)) from None


def _time_config(conf, degree):
    kw = dict(integrator=conf.str("time", "integrator", "ssprk34"), t_end=conf.float("time", "t_end"))
    if conf.has("time", "cfl"):
        kw["cfl_practical"] = conf.float("time", "cfl")
    if conf.has("time", "dt"):
        kw["dt"] = conf.float("time", "dt")
    kw["dt_mode"] = conf.str("time", "dt_mode", "practical")
    if kw["dt_mode"] not in ("practical", "theoretical"):
        raise conf._err("time", "dt_mode", "use 'practical' or 'theoretical'")
    if conf.has("time", "max_steps"):
        kw["max_steps"] = conf.int("time", "max_steps")
    try:
        return timemod.TimeConfig(**kw)
    except ValueError as exc:
        raise conf._err("time", "integrator/cfl/dt", str(exc)) from None


def _thread_limit(threads):
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env and env.isdigit() else None
    if not threads:
        return None, None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return threads, None
    return threads, threadpool_limits(limits=threads)


class _Recorder:
    def __init__(self, params, out_dir, every, snapshot_times, case_name, write_files):
        self.params = params
        self.out = out_dir
        self.every = max(int(every), 0)
        self.snap_times = list(snapshot_times)
        self.name = case_name
        self.rows = []
        self.snapshots = []
        self.write = write_files
        self.min_rho = np.inf
        self.min_e = np.inf

    def _track(self, fld):
        nc = self.params.n_species
        rho = fld.U[nc - 1]
        e = thermo.internal_energy_density(self.params, fld.U) / rho
        self.min_rho = min(self.min_rho, float(rho.min()))
        self.min_e = min(self.min_e, float(e.min()))

    def record(self, step, fld, count, force=False):
        self._track(fld)
        if force or (self.every and step % self.every == 0):
            self.rows.append(diagnostics_row(fld, self.params, count))
        while self.snap_times and fld.t >= self.snap_times[0] * (1.0 - 1e-12):
            self.snap_times.pop(0)
            self.snapshot(fld)

    def snapshot(self, fld, final=False):
        if not self.write:
            return
        tag = "final" if final else f"{len(self.snapshots):04d}"
        if fld.disc.dim == 1:
            path = self.out / f"{self.name}_{tag}.csv"
            write_csv_1d(fld, path)
        else:
            path = self.out / f"{self.name}_{tag}.vtk"
            write_vtk(fld, fld.disc.mesh, path)
        self.snapshots.append(str(path))


def _run_fv(case, disc0, flux_cfg, tc, rec):
    """First-order three-point scheme, forward Euler."""
    mesh, params = case.mesh, case.params
    U0 = disc0.project(case.initial, case.nudge)
    shape = U0.shape
    st = fv.FVState(U0.reshape(shape[0], shape[1]), mesh, 0.0, 0, dict(case.inflow_states))
    cfl = tc.cfl_practical or FV_CFL
    steps, dt_min, dt_max = 0, np.inf, 0.0
    rec.record(0, dgsem.SolutionField(U0, disc0, 0.0), 0, force=True)
    while st.t < tc.t_end * (1.0 - 1e-14):
        if steps >= tc.max_steps:
            raise timemod.StepLimitExceeded(f"reached {tc.max_steps} steps at t={st.t}")
        if tc.dt is not None:
            dt = tc.dt
        elif disc0.dim == 1:
            dt = fv.cfl_dt_1d(st, params, flux_cfg, cfl)
        else:
            dt = fv.cfl_dt_2d(st, mesh, params, flux_cfg, cfl)
        dt = min(dt, tc.t_end - st.t)
        st = fv.step_1d(st, params, flux_cfg, dt) if disc0.dim == 1 \
            else fv.step_2d(st, mesh, params, flux_cfg, dt)
        steps += 1
        dt_min, dt_max = min(dt_min, dt), max(dt_max, dt)
        rec.record(steps, dgsem.SolutionField(st.U.reshape(shape), disc0, st.t), 0)
    stats = timemod.RunStats(steps, 0, dt_min, dt_max)
    return dgsem.SolutionField(st.U.reshape(shape), disc0, tc.t_end), stats


def run(config, refine=0, degree=None, flux=None, integrator=None, out=None, threads=None,
        write_files=True):
    """Run one case end to end and return a :class:`RunOutcome`.

    Solver failures are reported through ``status`` (3) rather than raised;
    configuration problems raise :class:`ConfigError`.
    """
    parser, label, base_dir = load_config(config)
    parser = apply_overrides(parser, refine, degree, flux, integrator, out)
    conf = _Conf(parser, label)
    case = build_case((parser, label, base_dir))
    p, flux_cfg = _scheme(conf)
    tc = _time_config(conf, p)
    out_dir = Path(conf.str("output", "dir", f"out/{case.name}"))
    every = conf.int("output", "diagnostics_every", 10)
    n_snap = conf.int("output", "snapshots", 0)
    snap_times = [tc.t_end * (k + 1) / (n_snap + 1) for k in range(n_snap)]
    if write_files:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoError(f"cannot create output directory {out_dir}: {exc}") from None
    try:
        sbp = dgsem.fv_equivalent_sbp() if p == 0 else dgsem.build_sbp(p)
    except SolverError as exc:
        raise conf._err("scheme", "degree", str(exc)) from None

    n_threads, limiter_ctx = _thread_limit(threads)
    rec = _Recorder(case.params, out_dir, every, snap_times, case.name, write_files)
    summary = {"case": case.name, "config": label, "degree": p, "interface": flux_cfg.interface,
               "integrator": tc.integrator if p > 0 else "forward-euler", "t_end": tc.t_end,
               "threads": n_threads, "smoke_test": case.smoke_test}
    started = _clock.perf_counter()
    fld, stats, status = None, None, EXIT_OK
    try:
        disc = dgsem.discretization(case.mesh, case.params, flux_cfg, sbp, case.inflow_states)
        summary["elements"] = int(disc.K)
        if p == 0:
            fld, stats = _run_fv(case, disc, flux_cfg, tc, rec)
        else:
            init = dgsem.project(disc, case.initial, 0.0, case.nudge)
            rec.record(0, init, 0, force=True)

            def callback(step, f, st):
                rec.record(step, f, st.limiter_activations)

            res = timemod.integrate(init, case.mesh, case.params, (flux_cfg, tc), callback)
            fld, stats = res.field, res.stats
    except SolverError as exc:
        status = EXIT_SOLVER
        summary["error"] = f"{type(exc).__name__}: {exc}"
    finally:
        if limiter_ctx is not None:
            limiter_ctx.restore_original_limits()
    summary["runtime_s"] = _clock.perf_counter() - started

    if fld is not None:
        if not rec.rows or rec.rows[-1][0] != fld.t:
            rec.rows.append(diagnostics_row(fld, case.params, stats.limiter_activations))
        rec.snapshot(fld, final=True)
        first, last = rec.rows[0], rec.rows[-1]
        nc = case.params.n_species
        drift = [abs(b - a) / max(abs(a), 1e-300) for a, b in zip(first[1:nc + 2], last[1:nc + 2])]
        summary.update(steps=stats.steps, limiter_activations=stats.limiter_activations,
                       dt_min=stats.dt_min, dt_max=stats.dt_max, min_rho=rec.min_rho,
                       min_e=rec.min_e, max_relative_change_mass_energy=max(drift), final_time=fld.t)
        if case.exact is not None:
            l1, l2, linf = density_errors(fld, case.params, case.exact)
            summary["density_error"] = {"L1": l1, "L2": l2, "Linf": linf}
    if write_files:
        header = ["t"] + [f"mass_{s + 1}" for s in range(case.params.n_species)] + DIAG_HEADER_TAIL
        try:
            with open(out_dir / "diagnostics.csv", "w", encoding="utf-8") as fh:
                fh.write(",".join(header) + "\n")
                for row in rec.rows:
                    fh.write(",".join(repr(v) for v in row) + "\n")
            summary["snapshots"] = rec.snapshots
            with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
                json.dump(summary, fh, indent=2, default=float)
        except OSError as exc:
            raise IoError(f"cannot write diagnostics in {out_dir}: {exc}") from None
    return RunOutcome(status, summary, fld)


def convergence_study(base_config, refinements, degree=None, flux=None, integrator=None):
    """Run ``refinements`` successive mesh doublings; returns one dict per level.

    Orders are ``log2(e_2h / e_h)`` for the L1, L2 and Linf density errors.
    """
    rows = []
    for k in range(int(refinements)):
        outcome = run(base_config, refine=k, degree=degree, flux=flux, integrator=integrator,
                      write_files=False)
        if outcome.status != EXIT_OK:
            raise SolverError(outcome.summary.get("error", "run failed"))
        if "density_error" not in outcome.summary:
            raise ConfigError("convergence study needs a case with an exact solution")
        err = outcome.summary["density_error"]
        row = {"elements": outcome.summary["elements"], **err}
        if rows:
            for key in ("L1", "L2", "Linf"):
                row[f"order_{key}"] = math.log2(rows[-1][key] / err[key])
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# command line

def _meshinfo(path):
    try:
        m = meshmod.load_mesh(path)
    except ParseError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    tags = {}
    for t in m.tag:
        if t:
            tags[t] = tags.get(t, 0) + 1
    info = {"vertices": int(m.vertices.shape[0]), "elements": int(m.n_elements), "faces": int(m.n_faces),
            "interior_faces": int(np.count_nonzero(m.neighbor >= 0)), "boundary_tags": tags,
            "area_min": float(m.area.min()), "area_max": float(m.area.max()),
            "shape_regularity_max": float(np.max(m.shape_regularity()))}
    return info


def _parser():
    ap = argparse.ArgumentParser(prog="esdgsem", description="Entropy-stable multicomponent DGSEM solver")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run one case")
    s.add_argument("config", help="config file or preset name")
    s.add_argument("--refine", type=int, default=0, help="halve the mesh size k times")
    s.add_argument("--p", type=int, default=None, help="polynomial degree (0 = finite volume)")
    s.add_argument("--flux", choices=fluxes.INTERFACE_FLUXES, default=None)
    s.add_argument("--integrator", choices=sorted(timemod.SSP_TABLES), default=None)
    s.add_argument("--out", default=None, help="output directory")
    s.add_argument("--threads", type=int, default=None, help=f"thread count (default ${THREADS_ENV})")
    c = sub.add_parser("convergence", help="mesh-refinement study against the exact solution")
    c.add_argument("config")
    c.add_argument("--levels", type=int, default=3)
    c.add_argument("--p", type=int, default=None)
    c.add_argument("--flux", choices=fluxes.INTERFACE_FLUXES, default=None)
    c.add_argument("--integrator", choices=sorted(timemod.SSP_TABLES), default=None)
    m = sub.add_parser("meshinfo", help="summarise a quadrilateral mesh file")
    m.add_argument("meshfile")
    pr = sub.add_parser("presets", help="list built-in cases or write them as config files")
    pr.add_argument("--write", metavar="DIR", default=None)
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "solve":
            outcome = run(args.config, args.refine, args.p, args.flux, args.integrator, args.out, args.threads)
            print(json.dumps(outcome.summary, indent=2, default=float))
            if outcome.status != EXIT_OK:
                print(f"error: {outcome.summary.get('error')}", file=sys.stderr)
            return outcome.status
        if args.command == "convergence":
            rows = convergence_study(args.config, args.levels, args.p, args.flux, args.integrator)
            print(f"{'K':>8} {'L1':>12} {'O1':>6} {'L2':>12} {'O2':>6} {'Linf':>12} {'Oinf':>6}")
            for r in rows:
                o = [r.get(f"order_{k}") for k in ("L1", "L2", "Linf")]
                o = ["" if v is None else f"{v:.2f}" for v in o]
                print(f"{r['elements']:>8} {r['L1']:12.5e} {o[0]:>6} {r['L2']:12.5e} {o[1]:>6} "
                      f"{r['Linf']:12.5e} {o[2]:>6}")
            return EXIT_OK
        if args.command == "meshinfo":
            print(json.dumps(_meshinfo(args.meshfile), indent=2))
            return EXIT_OK
        if args.command == "presets":
            if args.write:
                d = Path(args.write)
                d.mkdir(parents=True, exist_ok=True)
                for name, text in sorted(PRESETS.items()):
                    (d / f"{name}.cfg").write_text(text, encoding="utf-8")
                print(f"wrote {len(PRESETS)} config files to {d}")
            else:
                print("\n".join(sorted(PRESETS)))
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
