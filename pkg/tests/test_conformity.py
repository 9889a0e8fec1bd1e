import itertools
import math

import numpy as np
import pytest

from ncbem.conformity import LinkedMeshes, classify_pair, element_map, link_interfaces
from ncbem.errors import Ambiguous, NoPartner
from ncbem.geometry import BilinearQuad, SphereOctant
from ncbem.mesh import structured_mesh
from ncbem.quadrature import Case

FREE = (0, 1, 2, 3)


def square(x0, y0, x1, y1, free=FREE, name=""):
    return BilinearQuad(corners=((x0, y0, 0), (x1, y0, 0), (x1, y1, 0), (x0, y1, 0)),
                        free_edges=free, name=name)


@pytest.fixture(scope="module")
def two_squares():
    # A = [0,1]^2 with 2 segments along the shared edge x = 1, B = [1,2]x[0,1] with 3
    a = structured_mesh(square(0, 0, 1, 1, name="A"), 1, 2)
    b = structured_mesh(square(1, 0, 2, 1, name="B"), 1, 3)
    return LinkedMeshes([a, b])


def test_hanging_nodes_on_shared_edge(two_squares):
    L = two_squares
    assert L.findings == []
    inner = [h for h in L.hanging if not h.snapped]
    into_a = sorted(h.edge_param for h in inner if h.host_mesh == 0)
    into_b = sorted(h.edge_param for h in inner if h.host_mesh == 1)
    # B's nodes at y = 1/3, 2/3 land in A's elements [0, 1/2] and [1/2, 1]
    assert len(into_a) == 2 and len(into_b) == 1
    ys = sorted(L.meshes[h.foreign_mesh].vertices[h.foreign_vertex][1] for h in inner if h.host_mesh == 0)
    assert np.allclose(ys, [1 / 3, 2 / 3], atol=1e-14)
    assert into_b[0] == pytest.approx(0.5, abs=1e-12)
    for h in inner:
        assert h.distance <= L.tol_gap


def test_local_coords_reproduce_foreign_vertex(two_squares):
    L = two_squares
    for h in L.hanging:
        host = L.meshes[h.host_mesh].corners(h.host_element)
        x = element_map(host, np.array([h.local_coords]))[0]
        y = L.meshes[h.foreign_mesh].vertices[h.foreign_vertex]
        assert np.linalg.norm(x - y) <= L.tol_gap
        s, t = h.local_coords
        assert min(s, t, 1 - s, 1 - t) <= L.tol_on_edge


def test_conforming_interface_snaps_everything():
    a = structured_mesh(square(0, 0, 1, 1), 2, 2)
    b = structured_mesh(square(1, 0, 2, 1), 2, 2)
    L = LinkedMeshes([a, b])
    assert L.hanging and all(h.snapped for h in L.hanging)
    # subdivision is a no-op: every pair has one sub-pair
    for i, j in L.touching_pairs():
        assert len(L.classify_pair(i, j).sub_pairs) == 1


def test_octant_arc_hanging_count_matches_brute_force():
    # octants sharing the meridian v = 1 / v = 0, nu = 4 vs nu = 6 along it
    a = structured_mesh(SphereOctant(signs=(1, 1, 1), free_edges=(1, 0)), 4, 3)
    b = structured_mesh(SphereOctant(signs=(-1, 1, 1), free_edges=(1, 2)), 6, 3)
    L = LinkedMeshes([a, b])
    assert L.findings == []
    fine_into_coarse = [h for h in L.hanging if h.host_mesh == 0 and not h.snapped]
    # brute force: fine vertices on the shared arc that are not coarse vertices
    arc_b = b.vertices[b.boundary_vertices[0]]
    arc_a = a.vertices[a.boundary_vertices[2]]
    d = np.linalg.norm(arc_b[:, None] - arc_a[None], axis=2).min(axis=1)
    brute = int(np.sum(d > 1e-9))
    assert len(fine_into_coarse) == brute == 4
    for h in fine_into_coarse:
        assert h.distance <= L.tol_gap


def test_classify_identical(two_squares):
    pc = two_squares.classify_pair(0, 0)
    assert pc.case is Case.IDENTICAL
    assert len(pc.sub_pairs) == 1 and pc.sub_pairs[0][2] is Case.IDENTICAL


def test_classify_conforming_edge():
    m = structured_mesh(square(0, 0, 2, 1), 2, 1)
    L = LinkedMeshes([m])
    pc = L.classify_pair(0, 1)
    assert pc.case is Case.COMMON_EDGE and len(pc.sub_pairs) == 1


def test_half_split_gives_edge_and_vertex_subpairs():
    # coarse A spans [0,1] on the shared edge, B1 spans [0, 1/2]
    a = structured_mesh(square(0, 0, 1, 1), 1, 1)
    b = structured_mesh(square(1, 0, 2, 1), 1, 2)
    L = LinkedMeshes([a, b])
    pc = L.classify_pair(0, 1)
    cases = sorted(c.value for _, _, c in pc.sub_pairs)
    assert pc.case is Case.COMMON_EDGE
    assert cases.count("common_edge") == 1
    assert "common_vertex" in cases
    # 1-D interval oracle: A's edge pieces [0,1/2], [1/2,1]; B's edge [0,1/2]
    # -> exactly one piece coincides, one touches at a point
    assert all(c in ("common_edge", "common_vertex", "regular") for c in cases)


def test_measure_conservation(two_squares):
    L = two_squares
    for i, j in L.touching_pairs():
        pc = L.classify_pair(i, j)
        for side, g in ((0, i), (1, j)):
            cells = {id(s[side]): s[side] for s in pc.sub_pairs}
            if i == j:
                cells = {0: pc.sub_pairs[0][0]}
            # each distinct sub-cell counted once
            uniq = {}
            for c in cells.values():
                uniq[tuple(np.round(np.sort(c.ref, axis=0).ravel(), 15))] = c
            total = sum(L.cell_area(c) for c in uniq.values())
            assert total == pytest.approx(L.element_area(g), rel=1e-12)


def test_transpose_symmetry(two_squares):
    L = two_squares
    for i, j in L.touching_pairs():
        ab, ba = L.classify_pair(i, j), L.classify_pair(j, i)
        assert ab.case is ba.case
        assert len(ab.sub_pairs) == len(ba.sub_pairs)
        for (x1, y1, c1), (y2, x2, c2) in zip(ab.sub_pairs, ba.sub_pairs):
            assert c1 is c2
            assert np.array_equal(x1.ref, x2.ref) and np.array_equal(y1.ref, y2.ref)


def test_conforming_classification_matches_vertex_count():
    ms = [structured_mesh(SphereOctant(signs=s), 3, 3) for s in itertools.product((1, -1), repeat=3)]
    L = LinkedMeshes(ms)
    expect = {0: Case.REGULAR, 1: Case.COMMON_VERTEX, 2: Case.COMMON_EDGE}
    for i, j in L.touching_pairs():
        if i == j:
            continue
        shared = len(set(L.labels(i)) & set(L.labels(j)))
        pc = classify_pair(L, i, j)
        assert len(pc.sub_pairs) == 1
        assert pc.case is expect[shared]


def test_open_model_reports_no_partner():
    ms = [structured_mesh(SphereOctant(signs=s), 3, 3) for s in itertools.product((1, -1), repeat=3)]
    with pytest.raises(NoPartner) as exc:
        link_interfaces(ms[:-1])
    assert exc.value.findings
    assert all(f.kind == "no_partner" for f in exc.value.findings)


def test_duplicated_patch_reports_ambiguous():
    a = structured_mesh(square(0, 0, 1, 1, free=(0, 2, 3)), 1, 2)
    b = structured_mesh(square(1, 0, 2, 1, free=(0, 1, 2)), 1, 3)
    c = structured_mesh(square(1, 0, 2, 1, free=(0, 1, 2)), 1, 2)
    with pytest.raises(Ambiguous):
        link_interfaces([a, b, c])


def test_hanging_csv(tmp_path, two_squares):
    path = two_squares.export_hanging_csv(tmp_path / "h.csv")
    rows = open(path).read().strip().splitlines()
    assert rows[0] == "mesh_a,vertex_id,mesh_b,element_id,r,s,distance"
    assert len(rows) == 1 + len(two_squares.hanging)


def test_curved_hanging_nodes_within_sagitta():
    a = structured_mesh(SphereOctant(signs=(1, 1, 1), free_edges=(1, 0)), 4, 3)
    b = structured_mesh(SphereOctant(signs=(-1, 1, 1), free_edges=(1, 2)), 6, 3)
    L = LinkedMeshes([a, b])
    for hn in L.hanging:
        host = L.meshes[hn.host_mesh].corners(hn.host_element)
        # chord deviation from the unit sphere for the longest host edge
        ang = max(math.acos(np.clip(host[k] @ host[(k + 1) % len(host)], -1, 1))
                  for k in range(len(host)))
        sagitta = 1 - math.cos(ang / 2)
        x = element_map(host, np.array([hn.local_coords]))[0]
        y = L.meshes[hn.foreign_mesh].vertices[hn.foreign_vertex]
        assert np.linalg.norm(x - y) <= sagitta * (1 + 1e-9)


def test_rigid_transform_keeps_links(two_squares):
    rot = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], float)
    T = two_squares.transformed(rot, [1, 2, 3])
    assert np.allclose(T.vertices, two_squares.vertices @ rot.T + [1, 2, 3])
    assert T.hanging == two_squares.hanging
    assert [T.labels(g) for g in range(T.n_elements)] == \
        [two_squares.labels(g) for g in range(two_squares.n_elements)]
