"""Quadrature rules on the reference triangle and square.

Reference domains used throughout the package:

* triangle: ``{(s, t): s >= 0, t >= 0, s + t <= 1}`` with vertices
  ``(0, 0), (1, 0), (0, 1)``
* square: ``[0, 1]^2`` with vertices ``(0, 0), (1, 0), (1, 1), (0, 1)``

Singular rules for touching element pairs follow the regularizing
coordinate transforms of Sauter and Schwab.  They expect the pair in
canonical position: a shared edge runs from local vertex 0 to local
vertex 1 in *both* elements, a shared vertex is local vertex 0 of both.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Shape",
    "Case",
    "QuadRule",
    "SingularRule",
    "NearSingularRule",
    "gauss_legendre",
    "tensor_rule",
    "singular_rule",
    "near_singular_rule",
    "reference_vertices",
]


class Shape(enum.IntEnum):
    TRI = 3
    QUAD = 4


class Case(enum.Enum):
    IDENTICAL = "identical"
    COMMON_EDGE = "common_edge"
    COMMON_VERTEX = "common_vertex"
    REGULAR = "regular"


def reference_vertices(shape: Shape) -> np.ndarray:
    if Shape(shape) is Shape.TRI:
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True)
class SingularRule:
    """Point-pair rule for one singular configuration.

    ``x[m]`` lies in the reference domain of the first element, ``y[m]`` in
    that of the second; ``weights[m]`` already contains every Jacobian of
    the regularizing transform.
    """

    case: Case
    shapes: tuple
    order: int
    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)

    def integrate(self, f):
        """Apply the rule to ``f(x, y)`` evaluated on arrays of reference points."""
        return float(np.dot(self.weights, f(self.x, self.y)))


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int) -> QuadRule:
    """n-point Gauss-Legendre rule on [0, 1], exact up to degree 2n - 1."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= 30:
        raise ValueError(f"Gauss-Legendre order must be in [1, 30], got {n!r}")
    x, w = _gauss_legendre(int(n))
    return QuadRule(x, w)


@lru_cache(maxsize=None)
def tensor_rule(shape: Shape, n: int) -> QuadRule:
    """n x n tensor Gauss rule on the unit square, Duffy-collapsed for triangles."""
    g = gauss_legendre(n)
    a, b = np.meshgrid(g.points, g.points, indexing="ij")
    wa, wb = np.meshgrid(g.weights, g.weights, indexing="ij")
    a, b = a.ravel(), b.ravel()
    w = (wa * wb).ravel()
    if Shape(shape) is Shape.TRI:
        # (a, b) in the square -> (a (1 - b), b) in the triangle, Jacobian 1 - b
        pts = np.column_stack([a * (1.0 - b), b])
        w = w * (1.0 - b)
    else:
        pts = np.column_stack([a, b])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(pts, w)


def _cube(n: int):
    g = gauss_legendre(n)
    grids = np.meshgrid(g.points, g.points, g.points, g.points, indexing="ij")
    wgrids = np.meshgrid(g.weights, g.weights, g.weights, g.weights, indexing="ij")
    xi, e1, e2, e3 = (v.ravel() for v in grids)
    w = np.prod([v.ravel() for v in wgrids], axis=0)
    return xi, e1, e2, e3, w


def _ss_to_unit(p1, p2):
    # Sauter-Schwab triangle {0 <= x2 <= x1 <= 1} -> unit triangle
    return np.column_stack([p1 - p2, p2])


def _tri_tri(case: Case, n: int):
    xi, e1, e2, e3, w = _cube(n)
    xs, ys, ws = [], [], []

    def add(xp, yp, weight):
        xs.append(_ss_to_unit(*xp))
        ys.append(_ss_to_unit(*yp))
        ws.append(weight)

    if case is Case.IDENTICAL:
        wt = w * xi**3 * e1**2 * e2
        add((xi, xi * (1 - e1 + e1 * e2)), (xi * (1 - e1 * e2 * e3), xi * (1 - e1)), wt)
        add((xi * (1 - e1 * e2 * e3), xi * (1 - e1)), (xi, xi * (1 - e1 + e1 * e2)), wt)
        add((xi, xi * e1 * (1 - e2 + e2 * e3)), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), wt)
        add((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * (1 - e2 + e2 * e3)), wt)
        add((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * (1 - e2)), wt)
        add((xi, xi * e1 * (1 - e2)), (xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), wt)
    elif case is Case.COMMON_EDGE:
        w1 = w * xi**3 * e1**2
        w2 = w1 * e2
        add((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), w1)
        add((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), w2)
        add((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e2 * e3), w2)
        add((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1), w2)
        add((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2), w2)
    elif case is Case.COMMON_VERTEX:
        wt = w * xi**3 * e2
        add((xi, xi * e1), (xi * e2, xi * e2 * e3), wt)
        add((xi * e2, xi * e2 * e1), (xi, xi * e3), wt)
    else:
        raise ValueError(f"no singular rule for case {case}")
    return np.vstack(xs), np.vstack(ys), np.concatenate(ws)


# Splits of the unit square into two triangles.  Each triangle is given by
# its three corners (in square coordinates) in the order the sub-rule uses.
_SQ_T1 = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])  # contains edge 0-1
_SQ_T2 = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]])  # contains vertex 0 only
_SQ_T2_DIAG = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
_SQ_T1_DIAG = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0]])


def _map_tri(corners, pts):
    c0, c1, c2 = corners
    return c0 + pts[:, :1] * (c1 - c0) + pts[:, 1:] * (c2 - c0)


def _tri_det(corners):
    c0, c1, c2 = corners
    a, b = c1 - c0, c2 - c0
    return abs(a[0] * b[1] - a[1] * b[0])


def _compose(parts):
    xs, ys, ws = [], [], []
    for case, ca, cb, n in parts:
        x, y, w = _tri_tri(case, n)
        xs.append(x if ca is None else _map_tri(ca, x))
        ys.append(y if cb is None else _map_tri(cb, y))
        da = 1.0 if ca is None else _tri_det(ca)
        db = 1.0 if cb is None else _tri_det(cb)
        ws.append(w * da * db)
    return np.vstack(xs), np.vstack(ys), np.concatenate(ws)


@lru_cache(maxsize=None)
def singular_rule(case: Case, shapes: tuple, n: int) -> SingularRule:
    """Sauter-Schwab point-pair rule for a touching element pair.

    Quadrilaterals are split along the diagonal through local vertex 0 so
    that every resulting triangle pair is itself singular and canonical.
    The number of point pairs grows as O(n^4).
    """
    case = Case(case)
    sa, sb = (Shape(s) for s in shapes)
    if not 1 <= n <= 30:
        raise ValueError(f"singular order must be in [1, 30], got {n}")
    T, Q = Shape.TRI, Shape.QUAD
    if case is Case.IDENTICAL:
        if sa != sb:
            raise ValueError("identical pair needs equal shapes")
        if sa is T:
            parts = [(case, None, None, n)]
        else:
            parts = [
                (Case.IDENTICAL, _SQ_T1, _SQ_T1, n),
                (Case.IDENTICAL, _SQ_T2, _SQ_T2, n),
                # the two halves share the diagonal, which must be edge 0-1 of both
                (Case.COMMON_EDGE, _SQ_T1_DIAG, _SQ_T2_DIAG, n),
                (Case.COMMON_EDGE, _SQ_T2_DIAG, _SQ_T1_DIAG, n),
            ]
    elif case is Case.COMMON_EDGE:
        ta = [(None, True)] if sa is T else [(_SQ_T1, True), (_SQ_T2, False)]
        tb = [(None, True)] if sb is T else [(_SQ_T1, True), (_SQ_T2, False)]
        parts = []
        for ca, ea in ta:
            for cb, eb in tb:
                sub = Case.COMMON_EDGE if (ea and eb) else Case.COMMON_VERTEX
                parts.append((sub, ca, cb, n))
    elif case is Case.COMMON_VERTEX:
        ta = [None] if sa is T else [_SQ_T1, _SQ_T2]
        tb = [None] if sb is T else [_SQ_T1, _SQ_T2]
        parts = [(case, ca, cb, n) for ca in ta for cb in tb]
    else:
        raise ValueError(f"no singular rule for case {case}")
    x, y, w = _compose(parts)
    for arr in (x, y, w):
        arr.setflags(write=False)
    return SingularRule(case, (sa, sb), n, x, y, w)


# -- near-singular -----------------------------------------------------------


@dataclass(frozen=True)
class NearSingularRule:
    """Leaf cell pairs of an adaptive subdivision.

    ``pairs`` holds ``(rule_a, rule_b)`` with points in the parent reference
    domains and weights already scaled to the parent measure.
    """

    pairs: list
    depth: int

    def integrate(self, f):
        total = 0.0
        for ra, rb in self.pairs:
            vals = f(ra.points[:, None, :], rb.points[None, :, :])
            total += float(ra.weights @ vals @ rb.weights)
        return total


def _split_cell(shape, corners):
    """Quadrisect a reference cell given by its corners."""
    if shape is Shape.TRI:
        a, b, c = corners
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        return [np.array(t) for t in ([a, ab, ca], [ab, b, bc], [ca, bc, c], [bc, ca, ab])]
    a, b, c, d = corners
    ab, bc, cd, da = (a + b) / 2, (b + c) / 2, (c + d) / 2, (d + a) / 2
    m = (a + b + c + d) / 4
    return [np.array(q) for q in ([a, ab, m, da], [ab, b, bc, m], [m, bc, c, cd], [da, m, cd, d])]


def _cell_rule(shape, corners, n):
    base = tensor_rule(shape, n)
    o = corners[0]
    e1 = corners[1] - o
    e2 = (corners[2] if shape is Shape.TRI else corners[3]) - o
    pts = o + base.points[:, :1] * e1 + base.points[:, 1:] * e2
    det = abs(e1[0] * e2[1] - e1[1] * e2[0])
    return QuadRule(pts, base.weights * det)


def near_singular_rule(elem_a, elem_b, distance_ratio: float = 2.0, n: int = 4,
                       max_depth: int = 5) -> NearSingularRule:
    """Adaptive cell-pair subdivision for disjoint but close elements.

    ``elem_a`` and ``elem_b`` are objects with ``shape`` and ``map(ref)``
    (reference -> model space).  While the gap between two cells is below
    ``distance_ratio`` times the larger cell diameter, the larger cell is
    quadrisected, up to ``max_depth`` levels per element.
    """
    out = []
    deepest = 0
    stack = [(reference_vertices(elem_a.shape), 0, reference_vertices(elem_b.shape), 0)]

    def ball(elem, corners):
        p = elem.map(corners)
        c = p.mean(axis=0)
        return c, float(np.max(np.linalg.norm(p - c, axis=1)))

    while stack:
        ca, da, cb, db = stack.pop()
        xa, ra = ball(elem_a, ca)
        xb, rb = ball(elem_b, cb)
        gap = max(0.0, float(np.linalg.norm(xa - xb)) - ra - rb)
        diam = 2.0 * max(ra, rb)
        if gap < distance_ratio * diam and (da < max_depth or db < max_depth):
            if (ra >= rb and da < max_depth) or db >= max_depth:
                for sub in _split_cell(elem_a.shape, ca):
                    stack.append((sub, da + 1, cb, db))
            else:
                for sub in _split_cell(elem_b.shape, cb):
                    stack.append((ca, da, sub, db + 1))
            continue
        deepest = max(deepest, da, db)
        out.append((_cell_rule(elem_a.shape, ca, n), _cell_rule(elem_b.shape, cb, n)))
    return NearSingularRule(out, deepest)
