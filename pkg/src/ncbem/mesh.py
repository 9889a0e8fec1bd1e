"""Per-patch structured surface meshes with flat triangles and bilinear quads."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError
from .geometry import ParametricPatch
from .quadrature import Shape, tensor_rule

__all__ = ["Element", "SurfaceMesh", "MeshQuality", "structured_mesh", "mesh_quality",
           "element_area", "MIN_ANGLE_DEG"]

MIN_ANGLE_DEG = 5.0
WARP_LIMIT_DEG = 30.0


@dataclass(frozen=True)
class Element:
    shape: Shape
    vertex_ids: tuple


@dataclass(frozen=True)
class SurfaceMesh:
    """Mesh of one patch.

    ``cells`` is an ``(n, 4)`` index array; triangles carry ``-1`` in the
    last column.  Vertices are ordered counter-clockwise with respect to
    the patch normal.  ``boundary_vertices`` maps each open parameter edge
    to its vertex ids in edge order.
    """

    patch: ParametricPatch
    vertices: np.ndarray
    params: np.ndarray
    cells: np.ndarray
    boundary_vertices: dict = field(default_factory=dict)
    name: str = ""
    cell_params: np.ndarray = None

    @property
    def shapes(self) -> np.ndarray:
        return np.where(self.cells[:, 3] < 0, 3, 4)

    @property
    def n_elements(self) -> int:
        return len(self.cells)

    @property
    def elements(self) -> list:
        return [Element(Shape(int(s)), tuple(int(i) for i in c[:s]))
                for c, s in zip(self.cells, self.shapes)]

    def corners(self, e: int) -> np.ndarray:
        c = self.cells[e]
        return self.vertices[c[c >= 0]]

    def areas(self) -> np.ndarray:
        return np.array([element_area(self.corners(e)) for e in range(self.n_elements)])

    def transformed(self, rotation=None, shift=None) -> "SurfaceMesh":
        """Copy with vertices moved rigidly (patch data is kept as is)."""
        x = self.vertices
        if rotation is not None:
            x = x @ np.asarray(rotation).T
        if shift is not None:
            x = x + np.asarray(shift)
        return SurfaceMesh(self.patch, x, self.params, self.cells, self.boundary_vertices, self.name,
                           self.cell_params)


def _geom(corners, ref):
    """Point, tangents of the element map at reference points."""
    s, t = ref[:, :1], ref[:, 1:]
    if len(corners) == 3:
        a, b, c = corners
        xs = np.broadcast_to(b - a, (len(ref), 3))
        xt = np.broadcast_to(c - a, (len(ref), 3))
        return a + s * (b - a) + t * (c - a), xs, xt
    a, b, c, d = corners
    x = (1 - s) * (1 - t) * a + s * (1 - t) * b + s * t * c + (1 - s) * t * d
    xs = (1 - t) * (b - a) + t * (c - d)
    xt = (1 - s) * (d - a) + s * (c - b)
    return x, xs, xt


def element_area(corners) -> float:
    corners = np.asarray(corners, dtype=float)
    if len(corners) == 3:
        return 0.5 * float(np.linalg.norm(np.cross(corners[1] - corners[0], corners[2] - corners[0])))
    rule = tensor_rule(Shape.QUAD, 4)
    _, xs, xt = _geom(corners, rule.points)
    return float(rule.weights @ np.linalg.norm(np.cross(xs, xt), axis=1))


def _corner_normals(c):
    k = len(c)
    out = []
    for i in range(k):
        n = np.cross(c[(i + 1) % k] - c[i], c[i - 1] - c[i])
        out.append(n / np.linalg.norm(n))
    return np.array(out)


def _warp_angle(c) -> float:
    n = _corner_normals(c)
    m = n.mean(axis=0)
    m /= np.linalg.norm(m)
    return float(np.degrees(np.max(np.arccos(np.clip(n @ m, -1, 1)))) * 2)


def structured_mesh(patch: ParametricPatch, nu: int, nv: int, shape=Shape.QUAD,
                    name: str = "") -> SurfaceMesh:
    """Mesh the parameter square with an ``nu x nv`` grid.

    Quads become two triangles for ``shape=TRI`` (diagonal from grid corner
    (i, j) to (i + 1, j + 1)).  Cells touching a collapsed edge degenerate
    to triangles; periodic seams are glued so the mesh is conforming across
    them.  Quads whose corner normals deviate by more than 30 degrees are
    split as well.
    """
    shape = Shape(shape)
    if int(nu) < 1 or int(nv) < 1:
        raise MeshError("mesh densities must be >= 1")
    nu, nv = int(nu), int(nv)
    us = np.linspace(0.0, 1.0, nu + 1)
    vs = np.linspace(0.0, 1.0, nv + 1)
    U, V = np.meshgrid(us, vs, indexing="ij")

    ids = np.arange((nu + 1) * (nv + 1)).reshape(nu + 1, nv + 1)
    if patch.periodic_u:
        ids[nu, :] = ids[0, :]
    for e in patch.collapsed_edges:
        sl = {0: (slice(None), 0), 1: (nu, slice(None)), 2: (slice(None), nv), 3: (0, slice(None))}[e]
        ids[sl] = ids[sl].flat[0]
    _, first, inverse = np.unique(ids.ravel(), return_index=True, return_inverse=True)
    ids = inverse.reshape(ids.shape)
    params = np.column_stack([U.ravel()[first], V.ravel()[first]])
    verts = patch.evaluate(params[:, 0], params[:, 1])

    xu, xv = patch.tangents(np.array([0.5]), np.array([0.5]))
    flip = float(np.dot(np.cross(xu[0], xv[0]), patch.normal(np.array([0.5]), np.array([0.5]))[0])) < 0

    cells, cparams = [], []

    def add(nodes):
        cells.append([ids[n] for n in nodes] + [-1] * (4 - len(nodes)))
        cparams.append([(U[n], V[n]) for n in nodes] + [(np.nan, np.nan)] * (4 - len(nodes)))

    for i in range(nu):
        for j in range(nv):
            q = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            if flip:
                # keep (i, j) first so the split diagonal is the same either way
                q = [q[0], q[3], q[2], q[1]]
            uniq, seen = [], set()
            for n in q:
                if ids[n] not in seen:
                    seen.add(ids[n])
                    uniq.append(n)
            if len(uniq) < 3:
                continue
            if len(uniq) == 3:
                add(uniq)
                continue
            if shape is Shape.TRI or _warp_angle(verts[[ids[n] for n in q]]) > WARP_LIMIT_DEG:
                a, b, c, d = q
                add([a, b, c])
                add([a, c, d])
            else:
                add(q)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 4)
    cparams = np.array(cparams, dtype=float).reshape(-1, 4, 2)

    boundary = {}
    edge_ids = {0: ids[:, 0], 1: ids[nu, :], 2: ids[:, nv], 3: ids[0, :]}
    for e, line in edge_ids.items():
        if e in patch.collapsed_edges:
            continue
        if patch.periodic_u and e in (1, 3):
            continue
        boundary[e] = [int(k) for k in line]

    mesh = SurfaceMesh(patch, verts, params, cells, boundary, name or patch.name, cparams)
    _check_orientation(mesh)
    return mesh


def _check_orientation(mesh: SurfaceMesh):
    for e in range(mesh.n_elements):
        c = mesh.corners(e)
        if len(c) == 3:
            g = np.cross(c[1] - c[0], c[2] - c[0])
        else:
            g = np.cross(c[2] - c[0], c[3] - c[1])
        if np.linalg.norm(g) == 0:
            raise MeshError(f"degenerate element {e} in mesh {mesh.name!r}")
        uv = np.nanmean(mesh.cell_params[e], axis=0)
        n = mesh.patch.normal(np.array([uv[0]]), np.array([uv[1]]))[0]
        if np.dot(g, n) <= 0:
            raise MeshError(f"element {e} of mesh {mesh.name!r} is not oriented with the patch normal")


@dataclass(frozen=True)
class MeshQuality:
    min_area: float
    max_area: float
    min_angle: float
    max_aspect_ratio: float

    @property
    def acceptable(self) -> bool:
        return self.min_angle >= MIN_ANGLE_DEG and self.min_area > 0

    def to_dict(self):
        return {"min_area": self.min_area, "max_area": self.max_area,
                "min_angle_deg": self.min_angle, "max_aspect_ratio": self.max_aspect_ratio}


def _angles(c):
    k = len(c)
    out = []
    for i in range(k):
        a = c[(i + 1) % k] - c[i]
        b = c[i - 1] - c[i]
        cosang = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
        out.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
    return out


def _aspect(c):
    if len(c) == 3:
        edges = [np.linalg.norm(c[(i + 1) % 3] - c[i]) for i in range(3)]
        area = 0.5 * np.linalg.norm(np.cross(c[1] - c[0], c[2] - c[0]))
        # longest edge over shortest altitude, scaled so an equilateral triangle gives 1
        return max(edges) / (2 * area / max(edges)) * np.sqrt(3) / 2
    m1 = np.linalg.norm((c[1] + c[2]) / 2 - (c[0] + c[3]) / 2)
    m2 = np.linalg.norm((c[2] + c[3]) / 2 - (c[0] + c[1]) / 2)
    return max(m1, m2) / min(m1, m2)


def mesh_quality(mesh: SurfaceMesh) -> MeshQuality:
    areas = mesh.areas()
    angles, aspects = [], []
    for e in range(mesh.n_elements):
        c = mesh.corners(e)
        angles.extend(_angles(c))
        aspects.append(_aspect(c))
    return MeshQuality(float(areas.min()), float(areas.max()), float(min(angles)), float(max(aspects)))
