import numpy as np
import pytest

from esdgsem import dgsem, mesh
from esdgsem.errors import BadExtent, ParseError, TopologyError, UnknownTag

UNIT_SQUARE = """quadmesh 1
vertices 4
0 0
1 0
1 1
0 1
elements 1
0 1 2 3
boundary 4
0 1 reflecting
1 2 nonreflecting
2 3 symmetry
3 0 inflow:jet
"""


def test_interval_basics():
    m = mesh.build_interval(4, -1.0, 1.0)
    assert m.n_cells == 4
    np.testing.assert_allclose(m.dx, 0.5)
    np.testing.assert_allclose(m.centers, [-0.75, -0.25, 0.25, 0.75])
    assert not m.periodic
    assert mesh.build_interval(3, 0, 1, "periodic").periodic
    with pytest.raises(BadExtent):
        mesh.build_interval(0, 0, 1)
    with pytest.raises(BadExtent):
        mesh.build_interval(3, 1, 0)
    with pytest.raises(TopologyError):
        mesh.build_interval(3, 0, 1, ("periodic", "reflecting"))


def test_structured_counts():
    m = mesh.build_structured(5, 3)
    assert m.n_elements == 15
    # interior faces: 4*3 vertical + 5*2 horizontal, boundary: 2*(5+3)
    assert m.n_faces == 12 + 10 + 16
    assert np.count_nonzero(m.interior) == 22
    np.testing.assert_allclose(m.area, 1.0 / 15.0, rtol=1e-14)


def test_periodic_pairing_removes_duplicates():
    m = mesh.build_structured(4, 3, tags={"left": "periodic", "right": "periodic",
                                          "bottom": "periodic", "top": "periodic"})
    assert m.n_faces == 2 * m.n_elements
    assert np.all(m.interior)
    # every element appears in exactly four faces
    counts = np.bincount(np.concatenate([m.owner, m.neighbor]), minlength=m.n_elements)
    np.testing.assert_array_equal(counts, 4)


def test_unpaired_periodic_rejected():
    with pytest.raises(TopologyError):
        mesh.build_structured(2, 2, tags={"left": "periodic"})


def test_single_element_geometry():
    m = mesh.make_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1, 2, 3)],
                       [(0, 1, "reflecting"), (1, 2, "nonreflecting"), (2, 3, "symmetry"),
                        (3, 0, "inflow:jet")])
    geo = mesh.element_geometry(m, 0, dgsem.build_sbp(3))
    np.testing.assert_allclose(geo.jac, 0.25, rtol=1e-15)
    np.testing.assert_allclose(geo.face_jac, 0.5, rtol=1e-15)
    np.testing.assert_allclose(geo.metric_xi[0], 0.5)
    np.testing.assert_allclose(geo.metric_xi[1], 0.0, atol=1e-16)
    np.testing.assert_allclose(geo.metric_eta[1], 0.5)
    assert geo.area == pytest.approx(1.0)
    np.testing.assert_allclose(geo.sub_area, 0.25)


def test_affine_map_has_constant_jacobian():
    xy = np.array([[[0.0, 0.0], [2.0, 0.5], [3.0, 2.5], [1.0, 2.0]]])
    nodes = dgsem.build_sbp(4).nodes
    x, y, jac, _, _ = mesh.bilinear_geometry(xy, nodes)
    area = 2.0 * 2.0 - 0.5 * 1.0
    np.testing.assert_allclose(jac, area / 4.0, rtol=1e-14)
    assert x[0, 0, 0] == 0.0 and y[0, -1, -1] == 2.5


def test_closure_of_outward_normals():
    rng = np.random.default_rng(0)
    m = mesh.build_structured(4, 4)
    v = np.array(m.vertices)
    inner = (v[:, 0] > 0) & (v[:, 0] < 1) & (v[:, 1] > 0) & (v[:, 1] < 1)
    v[inner] += rng.uniform(-0.08, 0.08, size=(inner.sum(), 2))
    m = mesh.make_mesh(v, m.elements, m.boundary)
    closure = np.sum(m.edge_lengths()[..., None] * m.edge_normals(), axis=1)
    assert np.max(np.abs(closure)) < 1e-15
    # shoelace areas add up to the domain
    assert m.area.sum() == pytest.approx(1.0, rel=1e-14)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    m = mesh.build_structured(3, 2, bounds=(0.0, 1.0 / 3.0, -0.1, 0.7),
                              tags={"left": "inflow:a", "top": "periodic", "bottom": "periodic"})
    v = np.array(m.vertices)
    inner = (v[:, 0] > 0) & (v[:, 0] < 1 / 3) & (v[:, 1] > -0.1) & (v[:, 1] < 0.7)
    v[inner] += rng.uniform(-1e-3, 1e-3, size=(inner.sum(), 2))
    m = mesh.make_mesh(v, m.elements, m.boundary)
    path = tmp_path / "m.txt"
    mesh.save_mesh(m, path)
    m2 = mesh.load_mesh(path)
    np.testing.assert_array_equal(m2.vertices, m.vertices)
    np.testing.assert_array_equal(m2.elements, m.elements)
    assert m2.boundary == m.boundary
    np.testing.assert_array_equal(m2.neighbor, m.neighbor)
    np.testing.assert_array_equal(m2.normal, m.normal)


def test_parse_error_reports_line(tmp_path):
    bad = UNIT_SQUARE.replace("1 0\n1 1", "1 0\n1 x")
    path = tmp_path / "bad.txt"
    path.write_text(bad)
    with pytest.raises(ParseError) as info:
        mesh.load_mesh(path)
    assert info.value.line == 5
    with pytest.raises(ParseError):
        mesh.load_mesh(tmp_path / "missing.txt")
    path.write_text(UNIT_SQUARE.replace("symmetry", "wall"))
    with pytest.raises(ParseError) as info:
        mesh.load_mesh(path)
    assert info.value.line == 12


def test_comments_are_ignored(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# a comment\n" + UNIT_SQUARE.replace("0 1 2 3", "0 1 2 3  # the element"))
    assert mesh.load_mesh(path).n_elements == 1


def test_clockwise_element_rejected():
    with pytest.raises(TopologyError):
        mesh.make_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 3, 2, 1)],
                       [(0, 3, "reflecting"), (3, 2, "reflecting"), (2, 1, "reflecting"),
                        (1, 0, "reflecting")])


def test_flipped_neighbour_rejected():
    verts = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]
    boundary = [(0, 1, "reflecting"), (1, 2, "reflecting"), (2, 5, "reflecting"), (5, 4, "reflecting"),
                (4, 3, "reflecting"), (3, 0, "reflecting")]
    m = mesh.make_mesh(verts, [(0, 1, 4, 3), (1, 2, 5, 4)], boundary)
    assert np.count_nonzero(m.interior) == 1
    with pytest.raises(TopologyError):
        mesh.make_mesh(verts, [(0, 1, 4, 3), (1, 4, 5, 2)], boundary)


def test_non_convex_element_rejected():
    with pytest.raises(TopologyError):
        mesh.make_mesh([(0, 0), (2, 0), (0.5, 0.5), (0, 2)], [(0, 1, 2, 3)],
                       [(0, 1, "reflecting"), (1, 2, "reflecting"), (2, 3, "reflecting"),
                        (3, 0, "reflecting")])


def test_missing_boundary_tag_and_unknown_tag():
    verts = [(0, 0), (1, 0), (1, 1), (0, 1)]
    with pytest.raises(TopologyError):
        mesh.make_mesh(verts, [(0, 1, 2, 3)], [(0, 1, "reflecting")])
    with pytest.raises(UnknownTag):
        mesh.make_mesh(verts, [(0, 1, 2, 3)], [(0, 1, "wall"), (1, 2, "wall"), (2, 3, "wall"),
                                               (3, 0, "wall")])
    with pytest.raises(UnknownTag):
        mesh.tag_kind("inflow")


def test_ghost_states():
    u = np.array([[0.3], [1.0], [0.5], [-0.2], [3.0]])
    n = np.array([0.6, 0.8])
    g = mesh.ghost_state("reflecting", u, n, nc=2)
    # normal momentum flips, tangential kept, scalars kept
    m, mg = u[2:4, 0], g[2:4, 0]
    assert np.dot(mg, n) == pytest.approx(-np.dot(m, n), rel=1e-15)
    t = np.array([-0.8, 0.6])
    assert np.dot(mg, t) == pytest.approx(np.dot(m, t), rel=1e-15)
    np.testing.assert_array_equal(g[[0, 1, 4]], u[[0, 1, 4]])
    np.testing.assert_array_equal(mesh.ghost_state("symmetry", u, n, nc=2), g)
    np.testing.assert_array_equal(mesh.ghost_state("nonreflecting", u, n), u)
    inflow = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    np.testing.assert_array_equal(mesh.ghost_state("inflow:a", u, n, inflow=inflow)[:, 0], inflow)
    with pytest.raises(UnknownTag):
        mesh.ghost_state("inflow:a", u, n)
    paired = u * 2
    np.testing.assert_array_equal(mesh.ghost_state("periodic:x", u, n, paired=paired), paired)


def test_shape_regularity_of_square():
    m = mesh.build_structured(2, 2)
    # inscribed-radius proxy 2|k|/|dk| = h/2, diameter h*sqrt(2)
    np.testing.assert_allclose(m.shape_regularity(), 0.5 / np.sqrt(2.0), rtol=1e-14)
