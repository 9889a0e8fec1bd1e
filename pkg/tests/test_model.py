import numpy as np
import pytest

from ncbem.errors import ConfigError
from ncbem.geometry import RegionGroup, SphereOctant
from ncbem.model import MeshSpec, Model, build_model, build_scenario
from ncbem.quadrature import Shape


def test_mesh_spec_round_trip():
    s = MeshSpec(3, 4, "tri")
    assert s.shape is Shape.TRI
    assert MeshSpec.from_dict(s.to_dict()) == s
    with pytest.raises(ConfigError):
        MeshSpec(2, 2, "hex")


def test_kinds_are_contiguous_in_order():
    m = build_model(build_scenario("SphericalCapacitor", density=2))
    kinds = list(m.element_kinds())
    first = {k: kinds.index(k) for k in set(kinds)}
    assert first["dielectric"] < first["electrode"]
    # one change of kind only
    assert sum(a != b for a, b in zip(kinds, kinds[1:])) == 1
    lam = m.element_lambda()
    assert np.allclose(lam[np.array(kinds) == "dielectric"], 0.75)


def test_bushing_variants_differ_only_in_the_shell():
    conf = build_scenario("Bushing", variant="conforming")
    non = build_scenario("Bushing", variant="nonconforming")
    diff = [n for n in conf.meshing if conf.meshing[n] != non.meshing[n]]
    assert diff == ["shell"]
    assert non.meshing["shell"].shape is Shape.TRI
    with pytest.raises(ConfigError):
        build_scenario("Bushing", variant="sideways")


def test_bushing_model_links_cleanly():
    m = build_model(build_scenario("Bushing", density=0.5, variant="nonconforming"))
    assert m.linked.findings == []
    assert m.floating_group_ids() == ["foil2", "foil3", "foil4", "foil5"]
    assert m.capacitance_pair == ("conductor", "foil6")
    assert m.summary()["hanging_nodes"] > 0


def test_two_spheres_every_interface_nonconforming():
    m = build_model(build_scenario("TwoSpheres", density=4))
    hosts = {(h.host_mesh, h.foreign_mesh) for h in m.linked.hanging if not h.snapped}
    # every octant hosts a hanging node from at least one neighbour
    assert {a for a, _ in hosts} == set(range(16))


def test_model_rejects_bad_input():
    g = RegionGroup.electrode("e", 1.0)
    p = SphereOctant(name="a", group="e")
    with pytest.raises(ConfigError):
        Model([(p, g), (SphereOctant(name="a", group="e", signs=(-1, 1, 1)), g)], {"a": MeshSpec(2, 2)})
    with pytest.raises(ConfigError):
        Model([(p, g)], {})
    f = RegionGroup.floating("f", 1)
    q = SphereOctant(name="b", group="f", center=(5.0, 0, 0))
    with pytest.raises(ConfigError):
        Model([(p, g), (q, f)], {"a": MeshSpec(2, 2), "b": MeshSpec(2, 2)}, strict=False)


def test_transformed_model_moves_vertices_only():
    m = build_model(build_scenario("SingleSphere", density=2))
    t = m.transformed(np.eye(3), [1.0, 0, 0])
    assert np.allclose(t.linked.vertices, m.linked.vertices + [1.0, 0, 0])
    assert np.array_equal(t.element_group, m.element_group)
    assert np.allclose(m.linked.vertices, build_model(build_scenario("SingleSphere", density=2)).linked.vertices)
