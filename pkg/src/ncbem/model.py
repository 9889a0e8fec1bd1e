"""Model plumbing: built-in scenarios, per-patch meshing and the linked model
that the operators consume."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .conformity import LinkedMeshes
from .errors import ConfigError, GeometryError
from .geometry import (ConeFrustumSegment, CylinderSegment, ParametricPatch, RegionGroup,
                       SphereOctant, TagKind)
from .mesh import structured_mesh
from .quadrature import Shape

__all__ = ["MeshSpec", "Scenario", "Model", "SCENARIOS", "build_scenario", "build_model"]

SCENARIOS = ("TwoSpheres", "Bushing", "SphericalCapacitor", "SingleSphere")
_KIND_ORDER = {TagKind.DIELECTRIC: 0, TagKind.ELECTRODE: 1, TagKind.FLOATING: 2}


@dataclass(frozen=True)
class MeshSpec:
    nu: int
    nv: int
    shape: Shape = Shape.QUAD

    def __post_init__(self):
        if int(self.nu) < 1 or int(self.nv) < 1:
            raise ConfigError("mesh densities must be >= 1")
        object.__setattr__(self, "shape", _shape(self.shape))

    def to_dict(self):
        return {"nu": int(self.nu), "nv": int(self.nv), "shape": "tri" if self.shape is Shape.TRI else "quad"}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["nu"]), int(d["nv"]), d.get("shape", "quad"))


def _shape(s):
    if isinstance(s, Shape):
        return s
    key = str(s).lower()
    if key in ("tri", "triangle", "3"):
        return Shape.TRI
    if key in ("quad", "quadrilateral", "4"):
        return Shape.QUAD
    raise ConfigError(f"unknown element shape {s!r}")


@dataclass
class Scenario:
    """Patches with their groups and mesh densities.

    Iterating yields ``(patch, group)`` pairs.
    """

    name: str
    items: list                        # (ParametricPatch, RegionGroup)
    meshing: dict                      # patch name -> MeshSpec
    capacitance: tuple = None          # (plus group id, minus group id)
    params: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    @property
    def groups(self) -> dict:
        out = {}
        for _, g in self.items:
            out.setdefault(g.id, g)
        return out


# --- scenarios ----------------------------------------------------------------

_OCTANTS = [s for s in itertools.product((1, -1), repeat=3)]


def _octants(prefix, radius, center, group, nu, nv, shape):
    items, mesh = [], {}
    for k, signs in enumerate(_OCTANTS):
        p = SphereOctant(radius=radius, center=center, signs=signs, name=f"{prefix}{k}", group=group.id)
        items.append((p, group))
        mesh[p.name] = MeshSpec(nu(signs), nv(signs), shape)
    return items, mesh


def _two_spheres(density=6, radius=1.0, gap=None, voltage=100.0):
    # every patch boundary is non-conforming: azimuthal neighbours differ in
    # nu, the two hemispheres differ in nv, the spheres differ in shape
    n = int(density)
    gap = radius if gap is None else float(gap)
    d = 2 * radius + gap
    plus = RegionGroup.electrode("plus", voltage)
    minus = RegionGroup.electrode("minus", -voltage)

    def alt(a, b):
        return lambda s: a if s[0] * s[1] > 0 else b

    items, mesh = _octants("p", radius, (-d / 2, 0.0, 0.0), plus,
                           alt(n, n + 1), lambda s: n + 1 if s[2] > 0 else n, Shape.QUAD)
    m = max(2, int(round(0.75 * n)))
    i2, m2 = _octants("m", radius, (d / 2, 0.0, 0.0), minus,
                      alt(m + 1, m), lambda s: m if s[2] > 0 else m + 1, Shape.TRI)
    mesh.update(m2)
    return Scenario("TwoSpheres", items + i2, mesh, ("plus", "minus"),
                    {"radius": radius, "center_distance": d, "voltage": voltage, "density": n})


def _single_sphere(density=6, radius=1.0, voltage=1.0):
    n = int(density)
    g = RegionGroup.electrode("sphere", voltage)
    items, mesh = _octants("s", radius, (0.0, 0.0, 0.0), g, lambda s: n, lambda s: n, Shape.QUAD)
    return Scenario("SingleSphere", items, mesh, None, {"radius": radius, "voltage": voltage, "density": n})


def _spherical_capacitor(density=6, a=1.0, b=1.5, c=2.0, eps1=5.0, eps2=1.0, voltage=1.0):
    if not 0 < a < b < c:
        raise GeometryError("need 0 < a < b < c")
    n = int(density)
    inner = RegionGroup.electrode("inner", voltage, eps=eps1)
    iface = RegionGroup.dielectric("interface", eps_plus=eps2, eps_minus=eps1)
    outer = RegionGroup.electrode("outer", 0.0, eps=eps2)
    items, mesh = [], {}
    for prefix, r, g, k in (("a", a, inner, n), ("b", b, iface, n), ("c", c, outer, n)):
        it, ms = _octants(prefix, r, (0.0, 0.0, 0.0), g, lambda s, k=k: k, lambda s, k=k: k, Shape.QUAD)
        items += it
        mesh.update(ms)
    return Scenario("SphericalCapacitor", items, mesh, ("inner", "outer"),
                    {"a": a, "b": b, "c": c, "eps1": eps1, "eps2": eps2, "voltage": voltage,
                     "density": n})


def _bushing(density=1, variant="conforming", r=1.0, v_hv=100.0, v_gnd=0.0,
             eps_out=1.0, eps_in=5.0):
    """Condenser bushing: conductor, graded foils, dielectric body of two cones and a cylinder.

    Lengths are multiples of the conductor radius ``r``.  Foil k (k = 2..6)
    sits at radius k*r with half-height (17 - 2k)*r; the outermost one is
    grounded and the others float.
    """
    if variant not in ("conforming", "nonconforming"):
        raise ConfigError(f"unknown bushing mesh variant {variant!r}")
    s = float(density)
    na = int(round(24 * s))                       # azimuthal elements

    def nz(length):
        return max(1, int(round(length * s / 2.0)))

    hv = RegionGroup.electrode("conductor", v_hv, eps=eps_in)
    body = RegionGroup.dielectric("body", eps_plus=eps_out, eps_minus=eps_in)
    items, mesh = [], {}

    def add(patch, group, spec):
        items.append((patch, group))
        mesh[patch.name] = spec

    for name, z0, z1 in (("cond_lo", -20, -16), ("cond_mid", -16, 16), ("cond_hi", 16, 20)):
        free = {"cond_lo": (0,), "cond_hi": (2,), "cond_mid": ()}[name]
        add(CylinderSegment(radius=r, z0=z0 * r, z1=z1 * r, name=name, group=hv.id, free_edges=free),
            hv, MeshSpec(na, nz(z1 - z0)))
    slant = math.hypot(6.0, 12.0)
    add(ConeFrustumSegment(r0=r, r1=7 * r, z0=-16 * r, z1=-4 * r, name="cone_lo", group=body.id),
        body, MeshSpec(na, nz(slant)))
    add(ConeFrustumSegment(r0=7 * r, r1=r, z0=4 * r, z1=16 * r, name="cone_hi", group=body.id),
        body, MeshSpec(na, nz(slant)))
    if variant == "conforming":
        cyl = MeshSpec(na, nz(8))
    else:
        cyl = MeshSpec(max(3, int(round(na * 2 / 3))) + 1, max(1, nz(8) - 1), Shape.TRI)
    add(CylinderSegment(radius=7 * r, z0=-4 * r, z1=4 * r, name="shell", group=body.id), body, cyl)
    for k in range(2, 7):
        h = (17 - 2 * k) * r
        if k == 6:
            g = RegionGroup.electrode("foil6", v_gnd, eps=eps_in)
        else:
            g = RegionGroup.floating(f"foil{k}", k - 2)
        add(CylinderSegment(radius=k * r, z0=-h, z1=h, name=f"foil{k}", group=g.id, free_edges=(0, 2)),
            g, MeshSpec(na, nz(2 * h)))
    return Scenario("Bushing", items, mesh, ("conductor", "foil6"),
                    {"variant": variant, "density": s, "r": r, "v_hv": v_hv, "v_gnd": v_gnd,
                     "eps_out": eps_out, "eps_in": eps_in})


_BUILDERS = {"TwoSpheres": _two_spheres, "Bushing": _bushing,
             "SphericalCapacitor": _spherical_capacitor, "SingleSphere": _single_sphere}


def build_scenario(name: str, density=None, **params) -> Scenario:
    """Patch list with region tags and default mesh densities for a built-in scenario."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
    if density is not None:
        if float(density) <= 0:
            raise ConfigError("density must be positive")
        params["density"] = density
    try:
        return builder(**params)
    except TypeError as exc:
        raise ConfigError(f"scenario {name}: {exc}") from None


# --- model ----------------------------------------------------------------------

class Model:
    """Meshed, linked model with element-level region data.

    Meshes are ordered dielectric, electrode, floating (stable within a
    kind), so the DOFs of each region kind form one contiguous range.
    """

    def __init__(self, items, meshing, capacitance=None, tol_gap=None, tol_cpp=None, name="custom",
                 strict=True):
        items = list(items)
        names = [p.name for p, _ in items]
        if len(set(names)) != len(names) or any(not n for n in names):
            raise ConfigError("patch names must be unique and non-empty")
        groups = {}
        for p, g in items:
            if g.id in groups and groups[g.id] != g:
                raise ConfigError(f"group {g.id!r} defined twice with different tags")
            groups[g.id] = g
        idx = sorted(range(len(items)), key=lambda k: _KIND_ORDER[items[k][1].kind])
        self.name = name
        self.items = [items[k] for k in idx]
        self.groups = groups
        self.capacitance_pair = tuple(capacitance) if capacitance else None
        missing = [p.name for p, _ in self.items if p.name not in meshing]
        if missing:
            raise ConfigError(f"no mesh density for patches {missing}")
        self.mesh_specs = [meshing[p.name] for p, _ in self.items]
        self.meshes = [structured_mesh(p, s.nu, s.nv, s.shape, name=p.name)
                       for (p, _), s in zip(self.items, self.mesh_specs)]
        self.linked = LinkedMeshes(self.meshes, tol_gap=tol_gap, tol_cpp=tol_cpp)
        if strict:
            self.linked.raise_findings()
        per = [m.n_elements for m in self.meshes]
        self.element_group = np.repeat(np.array([g.id for _, g in self.items], dtype=object), per)
        floats = sorted({g.group_index for g in groups.values() if g.kind is TagKind.FLOATING})
        if floats != list(range(len(floats))):
            raise ConfigError(f"floating group indices must be 0..n-1, got {floats}")

    @classmethod
    def from_scenario(cls, sc: Scenario, **kw):
        return cls(sc.items, sc.meshing, sc.capacitance, name=sc.name, **kw)

    @property
    def n_elements(self) -> int:
        return self.linked.n_elements

    def group(self, gid) -> RegionGroup:
        try:
            return self.groups[gid]
        except KeyError:
            raise ConfigError(f"unknown region {gid!r}") from None

    def element_kinds(self) -> np.ndarray:
        return np.array([self.groups[g].kind.value for g in self.element_group])

    def group_elements(self, gid) -> np.ndarray:
        self.group(gid)
        return np.nonzero(self.element_group == gid)[0]

    def floating_group_ids(self) -> list:
        fl = [g for g in self.groups.values() if g.kind is TagKind.FLOATING]
        return [g.id for g in sorted(fl, key=lambda g: g.group_index)]

    def element_lambda(self) -> np.ndarray:
        return np.array([self.groups[g].jump_coefficient if self.groups[g].kind is TagKind.DIELECTRIC
                         else 0.0 for g in self.element_group])

    def element_voltage(self) -> np.ndarray:
        return np.array([self.groups[g].voltage for g in self.element_group])

    def region_ids(self) -> np.ndarray:
        """Integer region index per element, in order of first appearance."""
        order = {gid: k for k, gid in enumerate(dict.fromkeys(self.element_group))}
        return np.array([order[g] for g in self.element_group], dtype=np.int64)

    def transformed(self, rotation=None, shift=None) -> "Model":
        out = object.__new__(Model)
        out.__dict__.update(self.__dict__)
        out.linked = self.linked.transformed(rotation, shift)
        out.meshes = out.linked.meshes
        return out

    def summary(self) -> dict:
        return {"name": self.name, "patches": len(self.items), "elements": self.n_elements,
                "hanging_nodes": sum(1 for h in self.linked.hanging if not h.snapped),
                "groups": {gid: g.to_dict() for gid, g in sorted(self.groups.items())}}


def build_model(scenario: Scenario, **kw) -> Model:
    return Model.from_scenario(scenario, **kw)
