"""Analytic parametric surface patches and region groups.

Every patch maps the unit square ``(u, v) in [0, 1]^2`` into model space.
Parameter-domain edges are numbered

    0: v = 0,   1: u = 1,   2: v = 1,   3: u = 0

Rotational primitives use ``u`` for the angle.  A patch whose angular
extent is a full turn is periodic in ``u`` (edges 1 and 3 are glued).
The sphere octant collapses edge 3 onto the pole.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .errors import GeometryError

__all__ = [
    "TagKind",
    "RegionGroup",
    "ParametricPatch",
    "SphereOctant",
    "CylinderSegment",
    "ConeFrustumSegment",
    "AnnulusSector",
    "BilinearQuad",
    "evaluate",
    "normal",
    "closest_point",
    "patch_from_dict",
    "patch_to_dict",
]

TWO_PI = 2.0 * math.pi


class TagKind(str, enum.Enum):
    ELECTRODE = "electrode"
    DIELECTRIC = "dielectric"
    FLOATING = "floating"


@dataclass(frozen=True)
class RegionGroup:
    """A set of patches sharing one boundary condition.

    ``voltage`` is used by electrodes; ``eps_plus``/``eps_minus`` are the
    relative permittivities on the side the normal points to and the
    opposite side of a dielectric interface; ``eps`` is the permittivity of
    the medium touching an electrode (used to turn layer charge into free
    charge for capacitances).
    """

    id: str
    kind: TagKind
    voltage: float = 0.0
    eps_plus: float = 1.0
    eps_minus: float = 1.0
    eps: float = 1.0
    group_index: int = -1

    def __post_init__(self):
        object.__setattr__(self, "kind", TagKind(self.kind))
        if self.kind is TagKind.DIELECTRIC:
            if self.eps_plus <= 0 or self.eps_minus <= 0:
                raise GeometryError(f"group {self.id}: permittivities must be positive")
            if self.eps_plus == self.eps_minus:
                raise GeometryError(f"group {self.id}: eps_plus == eps_minus is not an interface")
        if self.eps <= 0:
            raise GeometryError(f"group {self.id}: eps must be positive")

    @classmethod
    def electrode(cls, id, voltage, eps=1.0):
        return cls(id, TagKind.ELECTRODE, voltage=float(voltage), eps=float(eps))

    @classmethod
    def dielectric(cls, id, eps_plus, eps_minus):
        return cls(id, TagKind.DIELECTRIC, eps_plus=float(eps_plus), eps_minus=float(eps_minus))

    @classmethod
    def floating(cls, id, group_index):
        return cls(id, TagKind.FLOATING, group_index=int(group_index))

    @property
    def jump_coefficient(self) -> float:
        """Coefficient of the identity in the Galerkin dielectric row."""
        ep, em = self.eps_plus, self.eps_minus
        return -(ep + em) / (2.0 * (ep - em))

    def to_dict(self):
        d = {"id": self.id, "kind": self.kind.value}
        if self.kind is TagKind.ELECTRODE:
            d.update(voltage=self.voltage, eps=self.eps)
        elif self.kind is TagKind.DIELECTRIC:
            d.update(eps_plus=self.eps_plus, eps_minus=self.eps_minus)
        else:
            d.update(group_index=self.group_index)
        return d

    @classmethod
    def from_dict(cls, d):
        kind = TagKind(d["kind"])
        if kind is TagKind.ELECTRODE:
            return cls.electrode(d["id"], d["voltage"], d.get("eps", 1.0))
        if kind is TagKind.DIELECTRIC:
            return cls.dielectric(d["id"], d["eps_plus"], d["eps_minus"])
        return cls.floating(d["id"], d.get("group_index", -1))


@dataclass(frozen=True)
class ParametricPatch:
    """Base class of the analytic primitives.

    Subclasses implement ``_point`` and ``_tangents`` on arrays and
    ``_natural_normal`` giving the outward direction before ``orientation``
    is applied.
    """

    kind: ClassVar[str] = ""
    params: ClassVar[tuple] = ()

    name: str = field(default="", kw_only=True)
    group: str = field(default="", kw_only=True)
    orientation: int = field(default=1, kw_only=True)
    free_edges: tuple = field(default=(), kw_only=True)

    def __post_init__(self):
        if self.orientation not in (1, -1):
            raise GeometryError("orientation must be +1 or -1")
        object.__setattr__(self, "free_edges", tuple(sorted(set(int(e) for e in self.free_edges))))

    # -- hooks ---------------------------------------------------------------
    def _point(self, u, v):
        raise NotImplementedError

    def _tangents(self, u, v):
        raise NotImplementedError

    def _natural_normal(self, u, v):
        xu, xv = self._tangents(u, v)
        n = np.cross(xu, xv)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    @property
    def periodic_u(self) -> bool:
        return False

    @property
    def collapsed_edges(self) -> tuple:
        return ()

    def guess_uv(self, points):
        """Rough parameters of points near the surface (seed for projection)."""
        return np.full((len(points), 2), 0.5)

    # -- public --------------------------------------------------------------
    def evaluate(self, u, v):
        u, v = _check_uv(u, v)
        return self._point(u, v)

    def tangents(self, u, v):
        u, v = _check_uv(u, v)
        return self._tangents(u, v)

    def normal(self, u, v):
        u, v = _check_uv(u, v)
        n = self._natural_normal(u, v)
        if not np.all(np.isfinite(n)):
            raise GeometryError(f"{self.kind}: normal undefined at degenerate parameter point")
        return self.orientation * n

    def area(self, n: int = 40) -> float:
        """Surface area by tensor Gauss quadrature of the metric."""
        g, w = np.polynomial.legendre.leggauss(n)
        g, w = 0.5 * (g + 1), 0.5 * w
        U, V = np.meshgrid(g, g, indexing="ij")
        xu, xv = self._tangents(U.ravel(), V.ravel())
        jac = np.linalg.norm(np.cross(xu, xv), axis=-1)
        return float(jac @ np.outer(w, w).ravel())

    def diameter(self) -> float:
        t = np.linspace(0.0, 1.0, 9)
        U, V = np.meshgrid(t, t)
        p = self._point(U.ravel(), V.ravel())
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))

    def edge_param(self, edge: int, t):
        """Parameter points on edge ``edge`` at edge parameter ``t``."""
        t = np.asarray(t, dtype=float)
        z, o = np.zeros_like(t), np.ones_like(t)
        return {0: (t, z), 1: (o, t), 2: (t, o), 3: (z, t)}[edge]

    def to_dict(self):
        return patch_to_dict(self)


def _check_uv(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    tol = 1e-12
    if np.any(u < -tol) or np.any(u > 1 + tol) or np.any(v < -tol) or np.any(v > 1 + tol):
        raise GeometryError("parameters outside the unit square")
    return np.clip(u, 0.0, 1.0), np.clip(v, 0.0, 1.0)


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def _wrap_angle(phi, phi0, extent):
    return np.mod(phi - phi0 + (TWO_PI - extent) / 2, TWO_PI) - (TWO_PI - extent) / 2


@dataclass(frozen=True)
class SphereOctant(ParametricPatch):
    """One eighth of a sphere.

    ``u`` runs along the polar angle from the pole on the ``signs[2]`` side
    of the z axis, ``v`` along the azimuth over the quadrant selected by
    ``signs[0], signs[1]``.
    """

    kind: ClassVar[str] = "sphere_octant"
    params: ClassVar[tuple] = ("radius", "center", "signs")

    radius: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    signs: tuple = (1, 1, 1)

    def __post_init__(self):
        super().__post_init__()
        if self.radius <= 0:
            raise GeometryError("sphere radius must be positive")
        if any(s not in (1, -1) for s in self.signs) or len(self.signs) != 3:
            raise GeometryError("octant signs must be three values of +-1")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))

    @property
    def phi0(self) -> float:
        sx, sy, _ = self.signs
        return {(1, 1): 0.0, (-1, 1): 0.5, (-1, -1): 1.0, (1, -1): 1.5}[(sx, sy)] * math.pi

    @property
    def collapsed_edges(self):
        return (3,)

    def _angles(self, u, v):
        return 0.5 * math.pi * u, self.phi0 + 0.5 * math.pi * v

    def _point(self, u, v):
        th, ph = self._angles(u, v)
        sz = self.signs[2]
        st = np.sin(th)
        d = _stack(st * np.cos(ph), st * np.sin(ph), sz * np.cos(th))
        return np.asarray(self.center) + self.radius * d

    def _tangents(self, u, v):
        th, ph = self._angles(u, v)
        sz = self.signs[2]
        c = 0.5 * math.pi * self.radius
        xu = c * _stack(np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -sz * np.sin(th))
        xv = c * _stack(-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), 0.0 * th)
        return xu, xv

    def _natural_normal(self, u, v):
        return (self._point(u, v) - np.asarray(self.center)) / self.radius

    def guess_uv(self, points):
        d = np.asarray(points, dtype=float) - np.asarray(self.center)
        r = np.linalg.norm(d, axis=-1)
        th = np.arccos(np.clip(self.signs[2] * d[:, 2] / np.maximum(r, 1e-300), -1, 1))
        ph = np.arctan2(d[:, 1], d[:, 0])
        u = th / (0.5 * math.pi)
        v = _wrap_angle(ph, self.phi0, 0.5 * math.pi) / (0.5 * math.pi)
        return np.clip(np.column_stack([u, v]), 0.0, 1.0)


class _Rotational(ParametricPatch):
    def _radius_z(self, v):
        raise NotImplementedError

    def _dradius_dz(self):
        raise NotImplementedError

    @property
    def extent(self) -> float:
        return self.phi1 - self.phi0

    @property
    def periodic_u(self) -> bool:
        return abs(self.extent - TWO_PI) < 1e-12

    def _check_angles(self):
        if not 0 < self.phi1 - self.phi0 <= TWO_PI + 1e-12:
            raise GeometryError("angular extent must lie in (0, 2 pi]")


@dataclass(frozen=True)
class CylinderSegment(_Rotational):
    """Cylinder around the z axis; ``u`` is the angle, ``v`` runs z0 -> z1."""

    kind: ClassVar[str] = "cylinder_segment"
    params: ClassVar[tuple] = ("radius", "z0", "z1", "phi0", "phi1")

    radius: float = 1.0
    z0: float = 0.0
    z1: float = 1.0
    phi0: float = 0.0
    phi1: float = TWO_PI

    def __post_init__(self):
        super().__post_init__()
        if self.radius <= 0 or self.z1 <= self.z0:
            raise GeometryError("cylinder needs radius > 0 and z1 > z0")
        self._check_angles()

    def _point(self, u, v):
        ph = self.phi0 + u * self.extent
        z = self.z0 + v * (self.z1 - self.z0)
        return _stack(self.radius * np.cos(ph), self.radius * np.sin(ph), z)

    def _tangents(self, u, v):
        ph = self.phi0 + u * self.extent
        a = self.extent * self.radius
        xu = _stack(-a * np.sin(ph), a * np.cos(ph), 0.0 * ph)
        xv = _stack(0.0 * ph, 0.0 * ph, (self.z1 - self.z0) + 0.0 * v)
        return xu, xv

    def _natural_normal(self, u, v):
        ph = self.phi0 + u * self.extent + 0.0 * v
        return _stack(np.cos(ph), np.sin(ph), 0.0 * ph)

    def guess_uv(self, points):
        p = np.asarray(points, dtype=float)
        ph = np.arctan2(p[:, 1], p[:, 0])
        u = _wrap_angle(ph, self.phi0, self.extent) / self.extent
        v = (p[:, 2] - self.z0) / (self.z1 - self.z0)
        return np.clip(np.column_stack([u, v]), 0.0, 1.0)


@dataclass(frozen=True)
class ConeFrustumSegment(_Rotational):
    """Truncated cone around the z axis.

    ``v`` runs from the circle (r0, z0) to the circle (r1, z1); both radii
    must be positive so the apex is never part of the patch.
    """

    kind: ClassVar[str] = "cone_frustum_segment"
    params: ClassVar[tuple] = ("r0", "r1", "z0", "z1", "phi0", "phi1")

    r0: float = 1.0
    r1: float = 2.0
    z0: float = 0.0
    z1: float = 1.0
    phi0: float = 0.0
    phi1: float = TWO_PI

    def __post_init__(self):
        super().__post_init__()
        if self.r0 <= 0 or self.r1 <= 0:
            raise GeometryError("cone frustum radii must be positive (apex excluded)")
        if self.z0 == self.z1:
            raise GeometryError("cone frustum needs z0 != z1")
        self._check_angles()

    def _point(self, u, v):
        ph = self.phi0 + u * self.extent
        r = self.r0 + v * (self.r1 - self.r0)
        z = self.z0 + v * (self.z1 - self.z0)
        return _stack(r * np.cos(ph), r * np.sin(ph), z)

    def _tangents(self, u, v):
        ph = self.phi0 + u * self.extent
        r = self.r0 + v * (self.r1 - self.r0)
        dr, dz = self.r1 - self.r0, self.z1 - self.z0
        a = self.extent * r
        xu = _stack(-a * np.sin(ph), a * np.cos(ph), 0.0 * ph)
        xv = _stack(dr * np.cos(ph), dr * np.sin(ph), dz + 0.0 * ph)
        return xu, xv

    def _natural_normal(self, u, v):
        # away from the axis
        ph = self.phi0 + u * self.extent + 0.0 * v
        dr, dz = self.r1 - self.r0, self.z1 - self.z0
        s = math.hypot(dr, dz)
        nr, nz = abs(dz) / s, -dr * math.copysign(1.0, dz) / s
        return _stack(nr * np.cos(ph), nr * np.sin(ph), nz + 0.0 * ph)

    def guess_uv(self, points):
        p = np.asarray(points, dtype=float)
        ph = np.arctan2(p[:, 1], p[:, 0])
        u = _wrap_angle(ph, self.phi0, self.extent) / self.extent
        r = np.hypot(p[:, 0], p[:, 1])
        dr, dz = self.r1 - self.r0, self.z1 - self.z0
        v = ((r - self.r0) * dr + (p[:, 2] - self.z0) * dz) / (dr * dr + dz * dz)
        return np.clip(np.column_stack([u, v]), 0.0, 1.0)


@dataclass(frozen=True)
class AnnulusSector(_Rotational):
    """Flat annulus sector in the plane z = const; ``v`` runs r_in -> r_out."""

    kind: ClassVar[str] = "annulus_sector"
    params: ClassVar[tuple] = ("r_in", "r_out", "z", "phi0", "phi1")

    r_in: float = 0.5
    r_out: float = 1.0
    z: float = 0.0
    phi0: float = 0.0
    phi1: float = TWO_PI

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.r_in < self.r_out:
            raise GeometryError("annulus needs 0 < r_in < r_out")
        self._check_angles()

    def _point(self, u, v):
        ph = self.phi0 + u * self.extent
        r = self.r_in + v * (self.r_out - self.r_in)
        return _stack(r * np.cos(ph), r * np.sin(ph), self.z + 0.0 * r)

    def _tangents(self, u, v):
        ph = self.phi0 + u * self.extent
        r = self.r_in + v * (self.r_out - self.r_in)
        a = self.extent * r
        dr = self.r_out - self.r_in
        xu = _stack(-a * np.sin(ph), a * np.cos(ph), 0.0 * ph)
        xv = _stack(dr * np.cos(ph), dr * np.sin(ph), 0.0 * ph)
        return xu, xv

    def _natural_normal(self, u, v):
        u, v = np.broadcast_arrays(u, v)
        return _stack(0.0 * u, 0.0 * u, 1.0 + 0.0 * u)

    def guess_uv(self, points):
        p = np.asarray(points, dtype=float)
        ph = np.arctan2(p[:, 1], p[:, 0])
        u = _wrap_angle(ph, self.phi0, self.extent) / self.extent
        v = (np.hypot(p[:, 0], p[:, 1]) - self.r_in) / (self.r_out - self.r_in)
        return np.clip(np.column_stack([u, v]), 0.0, 1.0)


@dataclass(frozen=True)
class BilinearQuad(ParametricPatch):
    """Bilinear patch through corners ``p00, p10, p11, p01``."""

    kind: ClassVar[str] = "bilinear_quad"
    params: ClassVar[tuple] = ("corners",)

    corners: tuple = ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (1.0, 1.0, 0.0), (0.0, 1.0, 0.0))

    def __post_init__(self):
        super().__post_init__()
        c = np.asarray(self.corners, dtype=float)
        if c.shape != (4, 3):
            raise GeometryError("bilinear patch needs four 3-D corners")
        object.__setattr__(self, "corners", tuple(tuple(map(float, p)) for p in c))
        n = self._natural_normal(np.array([0.5]), np.array([0.5]))
        if not np.all(np.isfinite(n)):
            raise GeometryError("degenerate bilinear patch")

    def _point(self, u, v):
        p00, p10, p11, p01 = (np.asarray(p) for p in self.corners)
        u, v = np.asarray(u)[..., None], np.asarray(v)[..., None]
        return (1 - u) * (1 - v) * p00 + u * (1 - v) * p10 + u * v * p11 + (1 - u) * v * p01

    def _tangents(self, u, v):
        p00, p10, p11, p01 = (np.asarray(p) for p in self.corners)
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        u, v = u[..., None], v[..., None]
        xu = (1 - v) * (p10 - p00) + v * (p11 - p01)
        xv = (1 - u) * (p01 - p00) + u * (p11 - p10)
        return xu, xv


_KINDS = {cls.kind: cls for cls in (SphereOctant, CylinderSegment, ConeFrustumSegment,
                                    AnnulusSector, BilinearQuad)}


def evaluate(patch: ParametricPatch, u, v):
    return patch.evaluate(u, v)


def normal(patch: ParametricPatch, u, v):
    return patch.normal(u, v)


def closest_point(patch: ParametricPatch, points, uv0=None, tol=1e-14, max_iter=20):
    """Project points onto a patch by damped Gauss-Newton in parameter space.

    Returns ``(uv, q, dist, iterations)``; iteration stops once the projected
    point moves less than ``tol`` (absolute, model units).
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    uv = patch.guess_uv(p) if uv0 is None else np.clip(np.array(uv0, dtype=float), 0, 1)
    q = patch._point(uv[:, 0], uv[:, 1])
    mu = np.full(len(p), 1e-12)
    it = 0
    for it in range(1, max_iter + 1):
        xu, xv = patch._tangents(uv[:, 0], uv[:, 1])
        r = p - q
        a11 = np.einsum("ij,ij->i", xu, xu)
        a12 = np.einsum("ij,ij->i", xu, xv)
        a22 = np.einsum("ij,ij->i", xv, xv)
        b1 = np.einsum("ij,ij->i", xu, r)
        b2 = np.einsum("ij,ij->i", xv, r)
        scale = np.maximum(a11 + a22, 1e-300)
        d11 = a11 + mu * scale
        d22 = a22 + mu * scale
        det = d11 * d22 - a12 * a12
        du = (d22 * b1 - a12 * b2) / det
        dv = (d11 * b2 - a12 * b1) / det
        new = np.clip(uv + np.column_stack([du, dv]), 0.0, 1.0)
        qn = patch._point(new[:, 0], new[:, 1])
        worse = np.linalg.norm(p - qn, axis=1) > np.linalg.norm(r, axis=1) * (1 + 1e-15) + 1e-300
        # reject steps that increase the distance and raise damping there
        new[worse] = uv[worse]
        qn[worse] = q[worse]
        mu = np.where(worse, mu * 100.0, np.maximum(mu * 0.1, 1e-14))
        move = np.linalg.norm(qn - q, axis=1)
        uv, q = new, qn
        if np.all((move < tol) & ~worse) or np.all(mu > 1e6):
            break
    dist = np.linalg.norm(p - q, axis=1)
    return uv, q, dist, it


def patch_to_dict(patch: ParametricPatch) -> dict:
    d = {"kind": patch.kind, "name": patch.name, "group": patch.group,
         "orientation": patch.orientation}
    if patch.free_edges:
        d["free_edges"] = list(patch.free_edges)
    for key in patch.params:
        val = getattr(patch, key)
        d[key] = [list(x) if isinstance(x, tuple) else x for x in val] if isinstance(val, tuple) else val
    return d


def patch_from_dict(d: dict) -> ParametricPatch:
    d = dict(d)
    try:
        cls = _KINDS[d.pop("kind")]
    except KeyError as exc:
        raise GeometryError(f"unknown patch kind {exc}") from None
    kw = {}
    for key in cls.params:
        if key in d:
            val = d.pop(key)
            kw[key] = tuple(tuple(x) if isinstance(x, list) else x for x in val) if isinstance(val, list) else val
    kw["name"] = d.pop("name", "")
    kw["group"] = d.pop("group", "")
    kw["orientation"] = int(d.pop("orientation", 1))
    kw["free_edges"] = tuple(d.pop("free_edges", ()))
    if d:
        raise GeometryError(f"unexpected patch fields {sorted(d)}")
    return cls(**kw)
