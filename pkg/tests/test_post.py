import math

import numpy as np
import pytest

from ncbem.errors import ConfigError, EvaluationError, PointOnSurface
from ncbem.model import build_model, build_scenario
from ncbem.operators import P0, ShapeFunctionSpace, build_block_system
from ncbem.post import (capacitance, eval_field, eval_potential, eval_samples, export_csv,
                        export_vtk, foil_profile, free_charge, report, total_charge)
from ncbem.solver import Solution, solve_dense


@pytest.fixture(scope="module")
def sphere():
    model = build_model(build_scenario("SingleSphere", density=6))
    space = ShapeFunctionSpace(model.linked, P0)
    system = build_block_system(model, space)
    return model, space, system, solve_dense(system)


def test_exterior_potential_is_R_over_r(sphere):
    model, space, _, sol = sphere
    for r in (2.0, 5.0, 100.0):
        pts = r * np.array([[1.0, 0, 0], [0, 0.6, 0.8], [-0.48, 0.6, -0.64]])
        assert np.allclose(eval_potential(sol, model, space, pts), 1.0 / r, rtol=0.01)


def test_interior_potential_constant(sphere):
    model, space, _, sol = sphere
    pts = np.array([[0, 0, 0], [0.5, 0, 0], [0, -0.3, 0.4], [0.2, 0.2, -0.2]])
    assert np.allclose(eval_potential(sol, model, space, pts), 1.0, rtol=0.01)


def test_field_matches_finite_differences(sphere):
    model, space, _, sol = sphere
    x = np.array([1.3, 0.4, -0.7])
    h = 1e-4
    E = eval_field(sol, model, space, x)[0]
    fd = np.empty(3)
    for k in range(3):
        d = np.zeros(3)
        d[k] = h
        up, um = eval_potential(sol, model, space, np.array([x + d, x - d]))
        fd[k] = -(up - um) / (2 * h)
    assert np.linalg.norm(E - fd) <= 1e-3 * np.linalg.norm(fd)


def test_far_field_decay(sphere):
    model, space, _, sol = sphere
    q = total_charge(sol, model, space, "sphere")
    for r in (50.0, 500.0):
        u = eval_potential(sol, model, space, np.array([[0.0, r / math.sqrt(2), r / math.sqrt(2)]]))[0]
        assert u == pytest.approx(q / (4 * math.pi * r), rel=0.02)


def test_point_on_surface_rejected(sphere):
    model, space, _, sol = sphere
    v = model.linked.vertices[5]
    with pytest.raises(PointOnSurface):
        eval_potential(sol, model, space, v[None, :])
    with pytest.raises(EvaluationError):
        eval_potential(sol, model, space, np.zeros((1, 2)))


def test_capacitance_single_sphere(sphere):
    model, space, _, sol = sphere
    c = capacitance(sol, model, space, "sphere")
    assert c == pytest.approx(4 * math.pi, rel=0.01)
    assert free_charge(sol, model, space, "sphere") == pytest.approx(c)
    with pytest.raises(ConfigError):
        capacitance(sol, model, space, "sphere", "sphere")
    with pytest.raises(ConfigError):
        total_charge(sol, model, space, "nope")


def test_capacitance_arithmetic():
    # the pair formula uses the voltage difference: +100 / -100 -> 200
    model = build_model(build_scenario("TwoSpheres", density=2))
    space = ShapeFunctionSpace(model.linked, P0)
    sol = solve_dense(build_block_system(model, space))
    q = free_charge(sol, model, space, "plus")
    assert capacitance(sol, model, space, "plus", "minus") == pytest.approx(q / 200.0, rel=1e-14)
    # antisymmetric drive: equal and opposite charges up to the mesh asymmetry
    assert total_charge(sol, model, space, "minus") == pytest.approx(-q, rel=0.05)


def test_rotation_invariance(sphere):
    model, space, _, sol = sphere
    a = 0.7
    rot = np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])
    rot = rot @ np.array([[1, 0, 0], [0, math.cos(1.1), -math.sin(1.1)], [0, math.sin(1.1), math.cos(1.1)]])
    shift = np.array([0.3, -2.0, 1.0])
    moved = model.transformed(rot, shift)
    ms = ShapeFunctionSpace(moved.linked, P0)
    msol = solve_dense(build_block_system(moved, ms))
    assert np.allclose(msol.sigma, sol.sigma, rtol=1e-9, atol=0)
    x = np.array([[1.5, 0.2, -0.9]])
    u0 = eval_potential(sol, model, space, x)
    u1 = eval_potential(msol, moved, ms, x @ rot.T + shift)
    assert u1 == pytest.approx(u0, rel=1e-9)


def test_vtk_and_csv(tmp_path, sphere):
    model, space, _, sol = sphere
    samples = eval_samples(sol, model, space, np.array([[2.0, 0, 0], [0, 3.0, 0]]))
    files = export_vtk(model, sol, space, tmp_path / "s.vtk", samples)
    assert len(files) == 2
    lines = (tmp_path / "s.vtk").read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0" and lines[3] == "DATASET POLYDATA"
    n_el = model.n_elements
    k = lines.index(next(l for l in lines if l.startswith("POLYGONS")))
    assert lines[k].split()[1] == str(n_el)
    assert f"CELL_DATA {n_el}" in lines
    i = lines.index("SCALARS sigma double 1")
    assert np.allclose([float(v) for v in lines[i + 2:i + 2 + n_el]], sol.sigma)
    assert "SCALARS region_id int 1" in lines
    s = (tmp_path / "s_samples.vtk").read_text().splitlines()
    assert "VECTORS E double" in s and "POINT_DATA 2" in s
    path = export_csv(model, sol, space, tmp_path / "s.csv")
    rows = open(path).read().strip().splitlines()
    assert rows[0] == "element_id,region,area,sigma" and len(rows) == n_el + 1
    assert float(rows[1].split(",")[3]) == sol.sigma[0]


def test_report_contents(sphere):
    model, space, system, sol = sphere
    r = report(sol, model, space, system)
    assert r["capacitance"]["value"] == pytest.approx(4 * math.pi, rel=0.01)
    assert r["capacitance"]["minus"] is None
    assert r["dofs"]["total"] == space.n_dofs
    assert r["regions"]["sphere"]["kind"] == "electrode"
    assert r["alpha"] == []


def test_foil_profile_on_cylinder():
    model = build_model(build_scenario("Bushing", density=0.5))
    space = ShapeFunctionSpace(model.linked, P0)
    cen = np.array([model.linked.corners(g).mean(axis=0) for g in range(model.n_elements)])
    # synthetic density: axial position plus a bump at azimuth 0
    sigma = cen[:, 2] + (np.abs(np.arctan2(cen[:, 1], cen[:, 0])) < 0.3)
    sol = Solution(sigma, np.zeros(4), 0.0, 1.0)
    z, s = foil_profile(sol, model, space, "foil3")
    # foil k spans |z| <= 17 - 2k; one sample per axial ring, all at azimuth 0
    assert np.all(np.diff(z) > 0) and -11 < z[0] and z[-1] < 11
    assert len(z) == model.mesh_specs[[p.name for p, _ in model.items].index("foil3")].nv
    assert np.allclose(s, z + 1.0)
