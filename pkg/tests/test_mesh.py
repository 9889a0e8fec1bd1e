import math

import numpy as np
import pytest

from ncbem.errors import MeshError
from ncbem.geometry import BilinearQuad, CylinderSegment, SphereOctant
from ncbem.mesh import element_area, mesh_quality, structured_mesh
from ncbem.quadrature import Shape


def test_unit_square_quads():
    m = structured_mesh(BilinearQuad(), 3, 2)
    assert m.n_elements == 6
    assert len(m.vertices) == 12
    assert np.all(m.shapes == 4)
    assert m.areas().sum() == pytest.approx(1.0, abs=1e-14)


def test_unit_square_triangles():
    m = structured_mesh(BilinearQuad(), 2, 2, Shape.TRI)
    assert m.n_elements == 8
    assert np.all(m.shapes == 3)
    assert np.allclose(m.areas(), 0.125)


def test_boundary_vertex_lists():
    m = structured_mesh(BilinearQuad(), 3, 2)
    assert sorted(m.boundary_vertices) == [0, 1, 2, 3]
    assert len(m.boundary_vertices[0]) == 4 and len(m.boundary_vertices[1]) == 3
    # edge 1 is u = 1
    assert np.allclose(m.vertices[m.boundary_vertices[1]][:, 0], 1.0)


def test_octant_pole_becomes_triangles():
    m = structured_mesh(SphereOctant(), 4, 5)
    pole = np.nonzero(np.all(np.isclose(m.vertices, [0, 0, 1]), axis=1))[0]
    assert len(pole) == 1
    tris = np.nonzero(m.shapes == 3)[0]
    assert len(tris) == 5
    assert all(pole[0] in m.cells[t] for t in tris)
    assert 3 not in m.boundary_vertices


def test_periodic_seam_glued():
    m = structured_mesh(CylinderSegment(radius=1.0, z0=0.0, z1=1.0), 8, 2)
    assert len(m.vertices) == 8 * 3
    assert sorted(m.boundary_vertices) == [0, 2]


def test_elements_follow_patch_normal():
    for patch in (SphereOctant(signs=(-1, 1, -1)), CylinderSegment(orientation=-1)):
        m = structured_mesh(patch, 4, 4)
        for e in range(m.n_elements):
            c = m.corners(e)
            g = np.cross(c[1] - c[0], c[2] - c[0])
            centre = c.mean(axis=0)
            uv = np.nanmean(m.cell_params[e], axis=0)
            n = patch.normal(np.array([uv[0]]), np.array([uv[1]]))[0]
            assert g @ n > 0, (e, centre)


def test_inscribed_sphere_area_converges():
    exact = 4 * math.pi / 8
    errs = []
    for n in (4, 8, 16):
        errs.append(exact - structured_mesh(SphereOctant(), n, n).areas().sum())
    assert all(e > 0 for e in errs)
    # flat panels: second order in h
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_element_area_bilinear():
    c = np.array([[0, 0, 0], [2, 0, 0], [2, 1, 0], [0, 1, 0]], float)
    assert element_area(c) == pytest.approx(2.0)
    assert element_area(c[:3]) == pytest.approx(1.0)


def test_mesh_quality():
    q = mesh_quality(structured_mesh(BilinearQuad(), 2, 2))
    assert q.min_angle == pytest.approx(90.0)
    assert q.max_aspect_ratio == pytest.approx(1.0)
    assert q.acceptable
    assert q.min_area == pytest.approx(0.25)


def test_invalid_density():
    with pytest.raises(MeshError):
        structured_mesh(BilinearQuad(), 0, 2)


def test_transformed_mesh():
    m = structured_mesh(BilinearQuad(), 2, 2)
    rot = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], float)
    t = m.transformed(rot, [0, 0, 1])
    assert np.allclose(t.vertices, m.vertices @ rot.T + [0, 0, 1])
    assert np.array_equal(t.cells, m.cells)
    assert np.allclose(t.areas(), m.areas())
