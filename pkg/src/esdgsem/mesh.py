"""Interval and straight-sided quadrilateral meshes.

Quad elements list their vertices counter-clockwise. Local edge ``k`` runs
from vertex ``k`` to vertex ``k+1``, which on the reference square
[-1, 1]^2 gives

    edge 0: eta = -1, edge 1: xi = +1, edge 2: eta = +1, edge 3: xi = -1.

Face-local node ``k`` follows the counter-clockwise direction of its owning
element, so the neighbour sees the same physical node as ``p - k``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BadExtent, DegenerateElement, ParseError, TopologyError, UnknownTag

BOUNDARY_KINDS = ("periodic", "symmetry", "reflecting", "nonreflecting", "inflow")
CLOSURE_TOL = 1e-13


def tag_kind(tag):
    kind = tag.split(":", 1)[0]
    if kind not in BOUNDARY_KINDS:
        raise UnknownTag(f"unknown boundary tag {tag!r}")
    if kind in ("periodic", "inflow") and ":" not in tag:
        raise UnknownTag(f"tag {tag!r} needs a ':<name>' suffix")
    return kind


# ---------------------------------------------------------------------------
# 1D

@dataclass(frozen=True)
class Mesh1D:
    x_faces: np.ndarray
    left: str = "nonreflecting"
    right: str = "nonreflecting"

    def __post_init__(self):
        x = np.asarray(self.x_faces, dtype=float)
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0.0):
            raise BadExtent("interval mesh needs increasing face coordinates")
        x.setflags(write=False)
        object.__setattr__(self, "x_faces", x)
        periodic = [self.left.startswith("periodic"), self.right.startswith("periodic")]
        if periodic[0] != periodic[1]:
            raise TopologyError("periodic boundaries must be paired")
        for t in (self.left, self.right):
            if t != "periodic":
                tag_kind(t)

    @property
    def n_cells(self):
        return self.x_faces.size - 1

    @property
    def dx(self):
        return np.diff(self.x_faces)

    @property
    def centers(self):
        return 0.5 * (self.x_faces[1:] + self.x_faces[:-1])

    @property
    def periodic(self):
        return self.left.startswith("periodic")


def build_interval(n, a, b, bc="nonreflecting"):
    if n < 1 or not b > a:
        raise BadExtent(f"bad interval mesh n={n}, [{a}, {b}]")
    left, right = (bc, bc) if isinstance(bc, str) else bc
    return Mesh1D(np.linspace(a, b, n + 1), left, right)


# ---------------------------------------------------------------------------
# 2D

@dataclass
class QuadMesh:
    vertices: np.ndarray
    elements: np.ndarray
    boundary: list
    # derived connectivity, filled by _connect
    face_vertices: np.ndarray = None
    owner: np.ndarray = None
    owner_local: np.ndarray = None
    neighbor: np.ndarray = None
    neighbor_local: np.ndarray = None
    normal: np.ndarray = None
    length: np.ndarray = None
    tag: list = None
    element_faces: np.ndarray = None
    area: np.ndarray = None
    inflow_states: dict = field(default_factory=dict)

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def n_faces(self):
        return self.owner.shape[0]

    @property
    def interior(self):
        return self.neighbor >= 0

    def edge_lengths(self):
        """Element edge lengths, shape (K, 4)."""
        xy = self.vertices[self.elements]
        return np.linalg.norm(np.roll(xy, -1, axis=1) - xy, axis=2)

    def edge_normals(self):
        """Outward unit normals of every element edge, shape (K, 4, 2)."""
        xy = self.vertices[self.elements]
        t = np.roll(xy, -1, axis=1) - xy
        L = np.linalg.norm(t, axis=2)
        return np.stack([t[..., 1] / L, -t[..., 0] / L], axis=-1)

    def sub_triangles(self):
        """Areas and perimeters of the four sub-triangles sharing the vertex centroid."""
        xy = self.vertices[self.elements]
        c = xy.mean(axis=1, keepdims=True)
        a = xy
        b = np.roll(xy, -1, axis=1)
        cross = (a[..., 0] - c[..., 0]) * (b[..., 1] - c[..., 1]) - (a[..., 1] - c[..., 1]) * (b[..., 0] - c[..., 0])
        per = (np.linalg.norm(b - a, axis=2) + np.linalg.norm(a - c, axis=2) + np.linalg.norm(b - c, axis=2))
        return 0.5 * cross, per

    def shape_regularity(self):
        """Per-element inscribed-radius proxy over diameter (2|k|/|dk| / diameter)."""
        xy = self.vertices[self.elements]
        diam = np.max(np.linalg.norm(xy[:, :, None, :] - xy[:, None, :, :], axis=-1), axis=(1, 2))
        return 2.0 * self.area / self.edge_lengths().sum(axis=1) / diam


def _quad_area(xy):
    # diagonal cross product; exact for planar quads
    return 0.5 * ((xy[:, 2, 0] - xy[:, 0, 0]) * (xy[:, 3, 1] - xy[:, 1, 1])
                  - (xy[:, 3, 0] - xy[:, 1, 0]) * (xy[:, 2, 1] - xy[:, 0, 1]))


def _validate_elements(vertices, elements):
    xy = vertices[elements]
    e = np.roll(xy, -1, axis=1) - xy
    turn = e[:, :, 0] * np.roll(e, -1, axis=1)[:, :, 1] - e[:, :, 1] * np.roll(e, -1, axis=1)[:, :, 0]
    bad = np.nonzero(np.any(turn <= 0.0, axis=1))[0]
    if bad.size:
        k = int(bad[0])
        raise TopologyError(f"element {k} is not strictly convex and counter-clockwise")
    L = np.linalg.norm(e, axis=2)
    closure = np.abs(np.stack([e[..., 1], -e[..., 0]], axis=-1).sum(axis=1)).max(axis=1)
    scale = L.sum(axis=1)
    bad = np.nonzero(closure > CLOSURE_TOL * np.maximum(scale, 1.0))[0]
    if bad.size:
        raise TopologyError(f"element {int(bad[0])} fails the closed-boundary check")


def _pair_periodic(edges, mids, lengths, scale):
    """Match edges of one periodic group by a single translation vector."""
    n = len(edges)
    if n % 2:
        raise TopologyError("periodic group has an odd number of edges")
    tol = 1e-9 * scale

    def key(m):
        return (round(m[0] / tol), round(m[1] / tol))

    index = {}
    for i in range(n):
        k = key(mids[i])
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                index.setdefault((k[0] + dx, k[1] + dy), []).append(i)
    cands = sorted(range(1, n), key=lambda j: -np.linalg.norm(mids[j] - mids[0]))
    for j in cands:
        d = mids[j] - mids[0]
        if np.linalg.norm(d) <= tol:
            continue
        pairs = {}
        ok = True
        for i in range(n):
            if i in pairs:
                continue
            k = key(mids[i] + d)
            match = [m for m in index.get(k, []) if m != i and np.linalg.norm(mids[m] - mids[i] - d) <= tol
                     and abs(lengths[m] - lengths[i]) <= tol]
            if not match:
                k = key(mids[i] - d)
                match = [m for m in index.get(k, []) if m != i and np.linalg.norm(mids[i] - mids[m] - d) <= tol
                         and abs(lengths[m] - lengths[i]) <= tol]
            if not match or match[0] in pairs:
                ok = False
                break
            pairs[i] = match[0]
            pairs[match[0]] = i
        if ok:
            return pairs
    raise TopologyError("could not pair periodic edges by a translation")


def _connect(mesh):
    vertices, elements = mesh.vertices, mesh.elements
    K = elements.shape[0]
    _validate_elements(vertices, elements)

    edge_map = {}
    for k in range(K):
        for l in range(4):
            a, b = int(elements[k, l]), int(elements[k, (l + 1) % 4])
            edge_map.setdefault((min(a, b), max(a, b)), []).append((k, l, a, b))

    btags = {}
    for a, b, t in mesh.boundary:
        tag_kind(t)
        key = (min(a, b), max(a, b))
        if key not in edge_map:
            raise TopologyError(f"boundary entry {a} {b} is not an element edge")
        btags[key] = t

    fv, own, ownl, nb, nbl, tags = [], [], [], [], [], []
    boundary_slots = []
    for key, owners in edge_map.items():
        if len(owners) > 2:
            raise TopologyError(f"edge {key} shared by more than two elements")
        if len(owners) == 2:
            (k0, l0, a, b), (k1, l1, a1, b1) = owners
            if (a, b) != (b1, a1):
                raise TopologyError(f"elements {k0} and {k1} traverse edge {key} in the same direction")
            if key in btags:
                raise TopologyError(f"interior edge {key} carries a boundary tag")
            fv.append((a, b)); own.append(k0); ownl.append(l0); nb.append(k1); nbl.append(l1); tags.append("")
        else:
            k0, l0, a, b = owners[0]
            if key not in btags:
                raise TopologyError(f"boundary edge {key} of element {k0} has no tag")
            boundary_slots.append(len(own))
            fv.append((a, b)); own.append(k0); ownl.append(l0); nb.append(-1); nbl.append(-1); tags.append(btags[key])

    # periodic pairing: the face of the first edge in each pair is kept
    groups = {}
    for s in boundary_slots:
        if tags[s].startswith("periodic:"):
            groups.setdefault(tags[s], []).append(s)
    drop = set()
    bbox = vertices.max(axis=0) - vertices.min(axis=0)
    scale = float(max(bbox.max(), 1.0))
    for g, slots in groups.items():
        mids = [0.5 * (vertices[fv[s][0]] + vertices[fv[s][1]]) for s in slots]
        lens = [np.linalg.norm(vertices[fv[s][1]] - vertices[fv[s][0]]) for s in slots]
        pairs = _pair_periodic(slots, mids, lens, scale)
        for i, j in pairs.items():
            if i < j:
                si, sj = slots[i], slots[j]
                nb[si], nbl[si] = own[sj], ownl[sj]
                drop.add(sj)

    keep = [i for i in range(len(own)) if i not in drop]
    mesh.face_vertices = np.array([fv[i] for i in keep], dtype=int).reshape(-1, 2)
    mesh.owner = np.array([own[i] for i in keep], dtype=int)
    mesh.owner_local = np.array([ownl[i] for i in keep], dtype=int)
    mesh.neighbor = np.array([nb[i] for i in keep], dtype=int)
    mesh.neighbor_local = np.array([nbl[i] for i in keep], dtype=int)
    mesh.tag = [tags[i] for i in keep]

    t = vertices[mesh.face_vertices[:, 1]] - vertices[mesh.face_vertices[:, 0]]
    L = np.linalg.norm(t, axis=1)
    mesh.length = L
    mesh.normal = np.stack([t[:, 1] / L, -t[:, 0] / L], axis=1)

    ef = -np.ones((K, 4), dtype=int)
    ef[mesh.owner, mesh.owner_local] = np.arange(mesh.n_faces)
    inner = mesh.neighbor >= 0
    ef[mesh.neighbor[inner], mesh.neighbor_local[inner]] = np.nonzero(inner)[0]
    if np.any(ef < 0):
        raise TopologyError("element edge without a face")
    mesh.element_faces = ef
    mesh.area = _quad_area(vertices[elements])
    for arr in (mesh.vertices, mesh.elements, mesh.face_vertices, mesh.owner, mesh.owner_local,
                mesh.neighbor, mesh.neighbor_local, mesh.normal, mesh.length, mesh.element_faces, mesh.area):
        arr.setflags(write=False)
    return mesh


def make_mesh(vertices, elements, boundary):
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    elements = np.array(elements, dtype=int).reshape(-1, 4)
    if elements.size and (elements.min() < 0 or elements.max() >= vertices.shape[0]):
        raise TopologyError("element references a missing vertex")
    boundary = [(int(a), int(b), str(t)) for a, b, t in boundary]
    return _connect(QuadMesh(vertices, elements, boundary))


def build_structured(nx, ny, bounds=(0.0, 1.0, 0.0, 1.0), tags=None):
    """Axis-aligned nx-by-ny grid.

    ``tags`` maps 'left', 'right', 'bottom', 'top' to boundary tags; the plain
    value 'periodic' pairs opposite sides.
    """
    x0, x1, y0, y1 = (float(b) for b in bounds)
    if nx < 1 or ny < 1 or not x1 > x0 or not y1 > y0:
        raise BadExtent(f"bad structured mesh {nx}x{ny} on {bounds}")
    tags = dict(tags or {})
    side = {s: tags.get(s, "nonreflecting") for s in ("left", "right", "bottom", "top")}
    for a, b, g in (("left", "right", "periodic:x"), ("bottom", "top", "periodic:y")):
        if (side[a] == "periodic") != (side[b] == "periodic"):
            raise TopologyError(f"{a}/{b} periodicity must be paired")
        if side[a] == "periodic":
            side[a] = side[b] = g

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return j * (nx + 1) + i

    elements = [(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
                for j in range(ny) for i in range(nx)]
    boundary = []
    for i in range(nx):
        boundary.append((vid(i, 0), vid(i + 1, 0), side["bottom"]))
        boundary.append((vid(i + 1, ny), vid(i, ny), side["top"]))
    for j in range(ny):
        boundary.append((vid(nx, j), vid(nx, j + 1), side["right"]))
        boundary.append((vid(0, j + 1), vid(0, j), side["left"]))
    return make_mesh(vertices, elements, boundary)


# ---------------------------------------------------------------------------
# text format

def load_mesh(path):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ParseError(f"cannot read mesh file {path}: {exc}") from exc

    entries = []
    for no, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            entries.append((no, text.split()))
    pos = 0

    def next_entry(what):
        nonlocal pos
        if pos >= len(entries):
            last = entries[-1][0] if entries else 1
            raise ParseError(f"unexpected end of file, expected {what}", last)
        pos += 1
        return entries[pos - 1]

    no, tok = next_entry("header")
    if tok != ["quadmesh", "1"]:
        raise ParseError("expected header 'quadmesh 1'", no)

    def section(name):
        no, tok = next_entry(f"'{name} N'")
        if len(tok) != 2 or tok[0] != name:
            raise ParseError(f"expected '{name} N'", no)
        try:
            count = int(tok[1])
        except ValueError:
            raise ParseError(f"bad {name} count {tok[1]!r}", no) from None
        if count < 0:
            raise ParseError(f"negative {name} count", no)
        return count

    vertices, elements, boundary = [], [], []
    for _ in range(section("vertices")):
        no, tok = next_entry("vertex")
        try:
            if len(tok) != 2:
                raise ValueError
            vertices.append((float(tok[0]), float(tok[1])))
        except ValueError:
            raise ParseError("vertex line needs two numbers", no) from None
    for _ in range(section("elements")):
        no, tok = next_entry("element")
        try:
            if len(tok) != 4:
                raise ValueError
            ids = tuple(int(t) for t in tok)
        except ValueError:
            raise ParseError("element line needs four vertex ids", no) from None
        if min(ids) < 0 or max(ids) >= len(vertices):
            raise ParseError("element references a missing vertex", no)
        elements.append(ids)
    for _ in range(section("boundary")):
        no, tok = next_entry("boundary edge")
        try:
            if len(tok) != 3:
                raise ValueError
            a, b = int(tok[0]), int(tok[1])
        except ValueError:
            raise ParseError("boundary line needs 'v0 v1 tag'", no) from None
        try:
            tag_kind(tok[2])
        except UnknownTag as exc:
            raise ParseError(str(exc), no) from None
        boundary.append((a, b, tok[2]))
    if pos != len(entries):
        raise ParseError("trailing content after boundary section", entries[pos][0])
    return make_mesh(vertices, elements, boundary)


def save_mesh(mesh, path):
    out = ["quadmesh 1", f"vertices {mesh.vertices.shape[0]}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out.append(f"elements {mesh.n_elements}")
    out += [" ".join(str(v) for v in e) for e in mesh.elements.tolist()]
    out.append(f"boundary {len(mesh.boundary)}")
    out += [f"{a} {b} {t}" for a, b, t in mesh.boundary]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class ElementGeometry:
    x: np.ndarray          # (P, P) node coordinates, indexed [i (xi), j (eta)]
    y: np.ndarray
    jac: np.ndarray        # (P, P)
    metric_xi: np.ndarray  # (2, P, P) J grad(xi) = (y_eta, -x_eta)
    metric_eta: np.ndarray  # (2, P, P) J grad(eta) = (-y_xi, x_xi)
    face_jac: np.ndarray   # (4,) |e|/2
    sub_area: np.ndarray   # (4,)
    sub_perimeter: np.ndarray  # (4,)
    jac_tilde: np.ndarray  # (P,) min over faces of J at face node k
    area: float


def bilinear_geometry(xy, nodes):
    """Map, Jacobian and metric terms at tensor nodes for quads ``xy`` (K, 4, 2)."""
    xi = np.asarray(nodes, dtype=float)[:, None]
    eta = np.asarray(nodes, dtype=float)[None, :]
    X = [xy[:, a, 0][:, None, None] for a in range(4)]
    Y = [xy[:, a, 1][:, None, None] for a in range(4)]

    def interp(V):
        return 0.25 * (V[0] * (1 - xi) * (1 - eta) + V[1] * (1 + xi) * (1 - eta)
                       + V[2] * (1 + xi) * (1 + eta) + V[3] * (1 - xi) * (1 + eta))

    def d_xi(V):
        return 0.25 * ((V[1] - V[0]) * (1 - eta) + (V[2] - V[3]) * (1 + eta)) + 0.0 * xi

    def d_eta(V):
        return 0.25 * ((V[3] - V[0]) * (1 - xi) + (V[2] - V[1]) * (1 + xi)) + 0.0 * eta

    x, y = interp(X), interp(Y)
    x_xi, y_xi, x_eta, y_eta = d_xi(X), d_xi(Y), d_eta(X), d_eta(Y)
    jac = x_xi * y_eta - x_eta * y_xi
    metric_xi = np.stack([y_eta, -x_eta], axis=0)
    metric_eta = np.stack([-y_xi, x_xi], axis=0)
    return x, y, jac, metric_xi, metric_eta


def face_node_index(local_face, k, p):
    """Volume node (i, j) of face-local node k on local face ``local_face``."""
    return [(k, 0), (p, k), (p - k, p), (0, p - k)][local_face]


def element_geometry(mesh, kappa, sbp_ops):
    p = sbp_ops.degree
    xy = mesh.vertices[mesh.elements[kappa]][None]
    x, y, jac, mxi, meta = bilinear_geometry(xy, sbp_ops.nodes)
    x, y, jac, mxi, meta = x[0], y[0], jac[0], mxi[:, 0], meta[:, 0]
    if np.any(jac <= 0.0):
        raise DegenerateElement(f"element {kappa} has non-positive Jacobian")
    L = mesh.edge_lengths()[kappa]
    sub_area, sub_per = (a[kappa] for a in mesh.sub_triangles())
    jt = np.array([min(jac[face_node_index(f, k, p)] for f in range(4)) for k in range(p + 1)])
    return ElementGeometry(x, y, jac, mxi, meta, 0.5 * L, sub_area, sub_per, jt, float(mesh.area[kappa]))


# ---------------------------------------------------------------------------
# boundary states

def ghost_state(bc_tag, interior_state, n, paired=None, inflow=None, nc=None):
    """Exterior state for a boundary face.

    ``interior_state`` has shape (nvar, ...), ``n`` shape (d,) or (d, ...).
    Periodic faces take the ``paired`` trace, inflow faces the frozen
    ``inflow`` state. ``nc`` (species count) locates the momentum rows; by
    default it is inferred from ``n``.
    """
    kind = tag_kind(bc_tag) if bc_tag not in ("periodic",) else "periodic"
    u = np.asarray(interior_state, dtype=float)
    if kind == "periodic":
        if paired is None:
            raise ValueError("periodic ghost needs the paired trace")
        return np.array(paired, dtype=float)
    if kind == "nonreflecting":
        return u.copy()
    if kind == "inflow":
        if inflow is None:
            raise UnknownTag(f"no inflow state registered for {bc_tag!r}")
        inflow = np.asarray(inflow, dtype=float)
        return np.broadcast_to(inflow.reshape(inflow.shape + (1,) * (u.ndim - 1)), u.shape).copy()
    # symmetry / reflecting
    n = np.asarray(n, dtype=float)
    d = n.shape[0]
    if n.ndim == 1:
        n = n.reshape((d,) + (1,) * (u.ndim - 1))
    start = u.shape[0] - d - 1 if nc is None else nc
    g = u.copy()
    mom = u[start:start + d]
    mn = np.sum(mom * n, axis=0)
    g[start:start + d] = mom - 2.0 * mn * n
    return g
