"""Galerkin matrices of the single layer (V), adjoint double layer (K'), mass (M)
and the floating-potential coupling blocks, plus the full block system.

Every element pair is integrated exactly once.  Touching pairs go through
``LinkedMeshes.classify_pair`` and Sauter-Schwab rules; close disjoint
pairs are refined by recursive cell splitting; the rest use tensor Gauss
rules.  One pass over a pair fills both (i, j) and (j, i), which makes V
exactly symmetric.  Loops run in a fixed order, so matrices are bitwise
reproducible.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .conformity import LinkedMeshes
from .errors import AssemblyError
from .quadrature import Case, Shape, singular_rule, tensor_rule

log = logging.getLogger(__name__)

__all__ = [
    "P0", "P1",
    "kernel_U",
    "kernel_gradU_dot_n",
    "ShapeFunctionSpace",
    "QuadratureOrders",
    "assemble_V",
    "assemble_Kprime",
    "assemble_M",
    "assemble_F_H",
    "BlockSystem",
    "build_block_system",
]

P0, P1 = "p0", "p1"
OP_NONE, OP_V, OP_K = -1, 0, 1
INV4PI = 1.0 / (4.0 * math.pi)


def kernel_U(x, y) -> float:
    r = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    if r == 0.0:
        raise ValueError("kernel_U is singular at x == y")
    return INV4PI / r


def kernel_gradU_dot_n(x, y, n_x) -> float:
    d = np.asarray(x, float) - np.asarray(y, float)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise ValueError("kernel_gradU_dot_n is singular at x == y")
    return -INV4PI * float(d @ np.asarray(n_x, float)) / r**3


@dataclass(frozen=True)
class QuadratureOrders:
    regular: int = 4
    singular: int = 5
    far: int = 2              # order for pairs farther than far_ratio diameters
    far_ratio: float = 6.0
    near_ratio: float = 0.5   # refine disjoint pairs closer than this many diameters
    near_depth: int = 5

    def __post_init__(self):
        for name in ("regular", "singular", "far"):
            v = getattr(self, name)
            if not 1 <= v <= 30:
                raise ValueError(f"quadrature order {name}={v} outside [1, 30]")

    def to_dict(self):
        return {"regular": self.regular, "singular": self.singular, "far": self.far,
                "far_ratio": self.far_ratio, "near_ratio": self.near_ratio,
                "near_depth": self.near_depth}


class ShapeFunctionSpace:
    """Discontinuous P0 or P1 functions on the elements of a LinkedMeshes set."""

    def __init__(self, linked: LinkedMeshes, order: str = P0):
        order = str(order).lower()
        if order not in (P0, P1):
            raise ValueError(f"unknown space order {order!r}")
        self.order = order
        self.linked = linked
        nloc = np.ones(linked.n_elements, dtype=np.int64) if order == P0 else linked.shapes.astype(np.int64)
        self.n_local = nloc
        self.dof_start = np.concatenate([[0], np.cumsum(nloc)]).astype(np.int64)

    @property
    def n_dofs(self) -> int:
        return int(self.dof_start[-1])

    @property
    def order_code(self) -> int:
        return 0 if self.order == P0 else 1

    def dofs(self, g: int) -> np.ndarray:
        return np.arange(self.dof_start[g], self.dof_start[g + 1])

    def dofs_of(self, elements) -> np.ndarray:
        elements = np.asarray(elements, dtype=np.int64)
        if elements.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([self.dofs(g) for g in elements])

    def dof_element(self) -> np.ndarray:
        return np.repeat(np.arange(self.linked.n_elements), self.n_local)

    def integrals(self) -> np.ndarray:
        """int phi_i ds for every DOF."""
        out = np.zeros(self.n_dofs)
        rule = {s: tensor_rule(Shape(s), 4) for s in (3, 4)}
        for g in range(self.linked.n_elements):
            c = _corners4(self.linked, g)
            nv = int(self.linked.shapes[g])
            r = rule[nv]
            for p, w in zip(r.points, r.weights):
                jac = _geo(c, nv, p[0], p[1])[3]
                for k in range(self.n_local[g]):
                    out[self.dof_start[g] + k] += w * jac * _shape(nv, self.order_code, p[0], p[1], k)
        return out

    def to_dict(self):
        return {"order": self.order, "n_dofs": self.n_dofs}


# --- numba geometry -------------------------------------------------------------

@njit(cache=True)
def _geo(c, nv, s, t):
    """Point, unit normal and surface Jacobian of a flat triangle / bilinear quad."""
    if nv == 3:
        xs0, xs1, xs2 = c[1, 0] - c[0, 0], c[1, 1] - c[0, 1], c[1, 2] - c[0, 2]
        xt0, xt1, xt2 = c[2, 0] - c[0, 0], c[2, 1] - c[0, 1], c[2, 2] - c[0, 2]
        x0 = c[0, 0] + s * xs0 + t * xt0
        x1 = c[0, 1] + s * xs1 + t * xt1
        x2 = c[0, 2] + s * xs2 + t * xt2
    else:
        q0 = c[0, 0] - c[1, 0] + c[2, 0] - c[3, 0]
        q1 = c[0, 1] - c[1, 1] + c[2, 1] - c[3, 1]
        q2 = c[0, 2] - c[1, 2] + c[2, 2] - c[3, 2]
        a0, a1, a2 = c[1, 0] - c[0, 0], c[1, 1] - c[0, 1], c[1, 2] - c[0, 2]
        b0, b1, b2 = c[3, 0] - c[0, 0], c[3, 1] - c[0, 1], c[3, 2] - c[0, 2]
        x0 = c[0, 0] + s * a0 + t * b0 + s * t * q0
        x1 = c[0, 1] + s * a1 + t * b1 + s * t * q1
        x2 = c[0, 2] + s * a2 + t * b2 + s * t * q2
        xs0, xs1, xs2 = a0 + t * q0, a1 + t * q1, a2 + t * q2
        xt0, xt1, xt2 = b0 + s * q0, b1 + s * q1, b2 + s * q2
    n0 = xs1 * xt2 - xs2 * xt1
    n1 = xs2 * xt0 - xs0 * xt2
    n2 = xs0 * xt1 - xs1 * xt0
    jac = math.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
    return x0, x1, x2, jac, n0 / jac, n1 / jac, n2 / jac


@njit(cache=True)
def _shape(nv, order, s, t, k):
    if order == 0:
        return 1.0
    if nv == 3:
        if k == 0:
            return 1.0 - s - t
        return s if k == 1 else t
    if k == 0:
        return (1.0 - s) * (1.0 - t)
    if k == 1:
        return s * (1.0 - t)
    if k == 2:
        return s * t
    return (1.0 - s) * t


@njit(cache=True)
def _scatter_point(A, rowop, dof0, nloc, nvs, order, ea, eb, sa, ta, sb, tb, wv, wka, wkb, both):
    """Add one point-pair contribution: rows of ea (and of eb if ``both``)."""
    opa = rowop[ea]
    opb = rowop[eb]
    for ka in range(nloc[ea]):
        pa = _shape(nvs[ea], order, sa, ta, ka)
        for kb in range(nloc[eb]):
            pb = _shape(nvs[eb], order, sb, tb, kb)
            if opa == 0:
                A[dof0[ea] + ka, dof0[eb] + kb] += wv * pa * pb
            elif opa == 1:
                A[dof0[ea] + ka, dof0[eb] + kb] += wka * pa * pb
            if both:
                if opb == 0:
                    A[dof0[eb] + kb, dof0[ea] + ka] += wv * pa * pb
                elif opb == 1:
                    A[dof0[eb] + kb, dof0[ea] + ka] += wkb * pa * pb


@njit(cache=True)
def _pair_point(C, ea, eb, nvs, sa, ta, sb, tb, w):
    xa = _geo(C[ea], nvs[ea], sa, ta)
    xb = _geo(C[eb], nvs[eb], sb, tb)
    d0, d1, d2 = xa[0] - xb[0], xa[1] - xb[1], xa[2] - xb[2]
    r2 = d0 * d0 + d1 * d1 + d2 * d2
    r = math.sqrt(r2)
    ww = w * xa[3] * xb[3] * INV4PI
    wv = ww / r
    r3 = r2 * r
    wka = -ww * (d0 * xa[4] + d1 * xa[5] + d2 * xa[6]) / r3
    wkb = ww * (d0 * xb[4] + d1 * xb[5] + d2 * xb[6]) / r3
    return wv, wka, wkb


@njit(cache=True)
def _singular_batch(A, C, nvs, rowop, dof0, nloc, order, rx, ry, rw, recs, aff):
    """Apply one singular rule to many sub-pairs.

    ``recs[m] = (ea, eb, both)``; ``aff[m] = (oa(2), Ma(4), ob(2), Mb(4), det)``
    maps rule points into the parent reference domains.
    """
    for m in range(recs.shape[0]):
        ea, eb, both = recs[m, 0], recs[m, 1], recs[m, 2]
        f = aff[m]
        for q in range(rw.shape[0]):
            sa = f[0] + f[2] * rx[q, 0] + f[3] * rx[q, 1]
            ta = f[1] + f[4] * rx[q, 0] + f[5] * rx[q, 1]
            sb = f[6] + f[8] * ry[q, 0] + f[9] * ry[q, 1]
            tb = f[7] + f[10] * ry[q, 0] + f[11] * ry[q, 1]
            wv, wka, wkb = _pair_point(C, ea, eb, nvs, sa, ta, sb, tb, rw[q] * f[12])
            _scatter_point(A, rowop, dof0, nloc, nvs, order, ea, eb, sa, ta, sb, tb,
                           wv, wka, wkb, both == 1)


# --- near-singular subdivision ----------------------------------------------------

@njit(cache=True)
def _seg_seg(p, q, a, b):
    """Squared distance between segments pq and ab."""
    d1 = q - p
    d2 = b - a
    r = p - a
    aa = d1 @ d1
    ee = d2 @ d2
    f = d2 @ r
    if aa <= 1e-300 and ee <= 1e-300:
        return r @ r
    if aa <= 1e-300:
        s = 0.0
        t = min(1.0, max(0.0, f / ee))
    else:
        c = d1 @ r
        if ee <= 1e-300:
            t = 0.0
            s = min(1.0, max(0.0, -c / aa))
        else:
            bb = d1 @ d2
            den = aa * ee - bb * bb
            s = min(1.0, max(0.0, (bb * f - c * ee) / den)) if den > 1e-300 else 0.0
            t = (bb * s + f) / ee
            if t < 0.0:
                t = 0.0
                s = min(1.0, max(0.0, -c / aa))
            elif t > 1.0:
                t = 1.0
                s = min(1.0, max(0.0, (bb - c) / aa))
    dv = p + s * d1 - (a + t * d2)
    return dv @ dv


@njit(cache=True)
def _point_tri(p, a, b, c):
    """Squared distance from p to triangle abc."""
    ab = b - a
    ac = c - a
    n = np.cross(ab, ac)
    nn = n @ n
    if nn > 1e-300:
        ap = p - a
        m11, m12, m22 = ab @ ab, ab @ ac, ac @ ac
        r1, r2 = ab @ ap, ac @ ap
        det = m11 * m22 - m12 * m12
        u = (m22 * r1 - m12 * r2) / det
        v = (m11 * r2 - m12 * r1) / det
        if u >= 0.0 and v >= 0.0 and u + v <= 1.0:
            h = ap @ n
            return h * h / nn
    return min(_seg_seg(p, p, a, b), min(_seg_seg(p, p, b, c), _seg_seg(p, p, c, a)))


@njit(cache=True)
def _poly_gap(pa, na, pb, nb):
    """Distance between two flat polygons (corner-fan approximation for quads)."""
    best = 1e300
    for k in range(na):
        for j in range(1, nb - 1):
            best = min(best, _point_tri(pa[k], pb[0], pb[j], pb[j + 1]))
    for k in range(nb):
        for j in range(1, na - 1):
            best = min(best, _point_tri(pb[k], pa[0], pa[j], pa[j + 1]))
    for k in range(na):
        for j in range(nb):
            best = min(best, _seg_seg(pa[k], pa[(k + 1) % na], pb[j], pb[(j + 1) % nb]))
    return math.sqrt(best)


@njit(cache=True)
def _split(cell, nc, out):
    """Quadrisect a reference cell; children written to out[0:4]."""
    if nc == 3:
        a, b, c = cell[0], cell[1], cell[2]
        ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        out[0, 0], out[0, 1], out[0, 2] = a, ab, ca
        out[1, 0], out[1, 1], out[1, 2] = ab, b, bc
        out[2, 0], out[2, 1], out[2, 2] = ca, bc, c
        out[3, 0], out[3, 1], out[3, 2] = bc, ca, ab
    else:
        a, b, c, d = cell[0], cell[1], cell[2], cell[3]
        ab, bc, cd, da = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + d), 0.5 * (d + a)
        m = 0.25 * (a + b + c + d)
        out[0, 0], out[0, 1], out[0, 2], out[0, 3] = a, ab, m, da
        out[1, 0], out[1, 1], out[1, 2], out[1, 3] = ab, b, bc, m
        out[2, 0], out[2, 1], out[2, 2], out[2, 3] = m, bc, c, cd
        out[3, 0], out[3, 1], out[3, 2], out[3, 3] = da, m, cd, d


@njit(cache=True)
def _cell_points(cell, nc, base_tri, base_quad):
    """Tensor rule mapped affinely onto a reference cell; returns points and weights."""
    base = base_tri if nc == 3 else base_quad
    o = cell[0]
    e1 = cell[1] - o
    e2 = (cell[2] if nc == 3 else cell[3]) - o
    det = abs(e1[0] * e2[1] - e1[1] * e2[0])
    nq = base.shape[0]
    pts = np.empty((nq, 3))
    for q in range(nq):
        pts[q, 0] = o[0] + base[q, 0] * e1[0] + base[q, 1] * e2[0]
        pts[q, 1] = o[1] + base[q, 0] * e1[1] + base[q, 1] * e2[1]
        pts[q, 2] = base[q, 2] * det
    return pts


@njit(cache=True)
def _near_pair(A, C, nvs, rowop, dof0, nloc, order, ea, eb, cell_a, nca, cell_b, ncb,
               both, ratio, max_depth, base_tri, base_quad):
    """Recursive cell splitting for a disjoint but close pair of (sub-)cells."""
    cap = 4 * 2 * max_depth + 8
    st_a = np.empty((cap, 4, 2))
    st_b = np.empty((cap, 4, 2))
    st_da = np.empty(cap, dtype=np.int64)
    st_db = np.empty(cap, dtype=np.int64)
    kids = np.empty((4, 4, 2))
    st_a[0] = cell_a
    st_b[0] = cell_b
    st_da[0] = 0
    st_db[0] = 0
    top = 1
    nva, nvb = nvs[ea], nvs[eb]
    leaves = 0
    while top > 0:
        top -= 1
        ca = st_a[top].copy()
        cb = st_b[top].copy()
        da = st_da[top]
        db = st_db[top]
        pa = np.empty((4, 3))
        pb = np.empty((4, 3))
        ra = 0.0
        rb = 0.0
        for k in range(nca):
            g = _geo(C[ea], nva, ca[k, 0], ca[k, 1])
            pa[k, 0], pa[k, 1], pa[k, 2] = g[0], g[1], g[2]
        for k in range(ncb):
            g = _geo(C[eb], nvb, cb[k, 0], cb[k, 1])
            pb[k, 0], pb[k, 1], pb[k, 2] = g[0], g[1], g[2]
        for k in range(nca):
            for j in range(k + 1, nca):
                ra = max(ra, math.sqrt(((pa[k] - pa[j]) ** 2).sum()))
        for k in range(ncb):
            for j in range(k + 1, ncb):
                rb = max(rb, math.sqrt(((pb[k] - pb[j]) ** 2).sum()))
        gap = _poly_gap(pa, nca, pb, ncb)
        if gap < ratio * max(ra, rb) and (da < max_depth or db < max_depth):
            if (ra >= rb and da < max_depth) or db >= max_depth:
                _split(ca, nca, kids)
                for k in range(4):
                    st_a[top] = kids[k]
                    st_b[top] = cb
                    st_da[top] = da + 1
                    st_db[top] = db
                    top += 1
            else:
                _split(cb, ncb, kids)
                for k in range(4):
                    st_a[top] = ca
                    st_b[top] = kids[k]
                    st_da[top] = da
                    st_db[top] = db + 1
                    top += 1
            continue
        leaves += 1
        qa = _cell_points(ca, nca, base_tri, base_quad)
        qb = _cell_points(cb, ncb, base_tri, base_quad)
        for i in range(qa.shape[0]):
            for j in range(qb.shape[0]):
                wv, wka, wkb = _pair_point(C, ea, eb, nvs, qa[i, 0], qa[i, 1], qb[j, 0], qb[j, 1],
                                           qa[i, 2] * qb[j, 2])
                _scatter_point(A, rowop, dof0, nloc, nvs, order, ea, eb, qa[i, 0], qa[i, 1],
                               qb[j, 0], qb[j, 1], wv, wka, wkb, both)
    return leaves


@njit(cache=True)
def _near_batch(A, C, nvs, rowop, dof0, nloc, order, recs, cells, ncs, ratio, max_depth,
                base_tri, base_quad):
    total = 0
    for m in range(recs.shape[0]):
        total += _near_pair(A, C, nvs, rowop, dof0, nloc, order, recs[m, 0], recs[m, 1],
                            cells[m, 0], ncs[m, 0], cells[m, 1], ncs[m, 1], recs[m, 2] == 1,
                            ratio, max_depth, base_tri, base_quad)
    return total


@njit(cache=True)
def _element_points(C, nvs, base_tri, base_quad, order, nloc_max):
    n = C.shape[0]
    nq = base_tri.shape[0]
    X = np.empty((n, nq, 3))
    Nrm = np.empty((n, nq, 3))
    W = np.empty((n, nq))
    S = np.zeros((n, nq, nloc_max))
    for e in range(n):
        base = base_tri if nvs[e] == 3 else base_quad
        for q in range(nq):
            g = _geo(C[e], nvs[e], base[q, 0], base[q, 1])
            X[e, q, 0], X[e, q, 1], X[e, q, 2] = g[0], g[1], g[2]
            Nrm[e, q, 0], Nrm[e, q, 1], Nrm[e, q, 2] = g[4], g[5], g[6]
            W[e, q] = base[q, 2] * g[3]
            for k in range(nloc_max):
                S[e, q, k] = _shape(nvs[e], order, base[q, 0], base[q, 1], k)
    return X, Nrm, W, S


@njit(cache=True)
def _count_near(C, rowop, touch_ptr, touch_idx, centers, radii, near_ratio):
    """Number of non-touching pairs that _regular_all will hand back as close."""
    n = C.shape[0]
    count = 0
    for i in range(n):
        p = touch_ptr[i]
        for j in range(i + 1, n):
            while p < touch_ptr[i + 1] and touch_idx[p] < j:
                p += 1
            if p < touch_ptr[i + 1] and touch_idx[p] == j:
                continue
            if rowop[i] < 0 and rowop[j] < 0:
                continue
            dc = math.sqrt(((centers[i] - centers[j]) ** 2).sum())
            gap = dc - radii[i] - radii[j]
            diam = 2.0 * max(radii[i], radii[j])
            if gap < near_ratio * diam:
                count += 1
    return count


@njit(cache=True)
def _regular_all(A, C, nvs, rowop, dof0, nloc, order, touch_ptr, touch_idx,
                 centers, radii, near_ratio, far_ratio, max_depth,
                 Xr, Nr, Wr, Sr, Xf, Nf, Wf, Sf, base_tri, base_quad, near_out):
    """All non-touching pairs i < j; close pairs are collected for refinement."""
    n = C.shape[0]
    n_near = 0
    blk_v = np.zeros((4, 4))
    blk_ka = np.zeros((4, 4))
    blk_kb = np.zeros((4, 4))
    for i in range(n):
        p = touch_ptr[i]
        for j in range(i + 1, n):
            while p < touch_ptr[i + 1] and touch_idx[p] < j:
                p += 1
            if p < touch_ptr[i + 1] and touch_idx[p] == j:
                continue
            if rowop[i] < 0 and rowop[j] < 0:
                continue
            dc = math.sqrt(((centers[i] - centers[j]) ** 2).sum())
            gap = dc - radii[i] - radii[j]
            diam = 2.0 * max(radii[i], radii[j])
            if gap < near_ratio * diam:
                near_out[n_near, 0] = i
                near_out[n_near, 1] = j
                n_near += 1
                continue
            if gap > far_ratio * diam:
                X, Nn, W, S = Xf, Nf, Wf, Sf
            else:
                X, Nn, W, S = Xr, Nr, Wr, Sr
            nq = W.shape[1]
            blk_v[:, :] = 0.0
            blk_ka[:, :] = 0.0
            blk_kb[:, :] = 0.0
            for a in range(nq):
                for b in range(nq):
                    d0 = X[i, a, 0] - X[j, b, 0]
                    d1 = X[i, a, 1] - X[j, b, 1]
                    d2 = X[i, a, 2] - X[j, b, 2]
                    r2 = d0 * d0 + d1 * d1 + d2 * d2
                    r = math.sqrt(r2)
                    ww = W[i, a] * W[j, b] * INV4PI
                    wv = ww / r
                    r3 = r2 * r
                    wka = -ww * (d0 * Nn[i, a, 0] + d1 * Nn[i, a, 1] + d2 * Nn[i, a, 2]) / r3
                    wkb = ww * (d0 * Nn[j, b, 0] + d1 * Nn[j, b, 1] + d2 * Nn[j, b, 2]) / r3
                    for ka in range(nloc[i]):
                        sa = S[i, a, ka]
                        for kb in range(nloc[j]):
                            sb = S[j, b, kb]
                            blk_v[ka, kb] += wv * sa * sb
                            blk_ka[ka, kb] += wka * sa * sb
                            blk_kb[ka, kb] += wkb * sa * sb
            for ka in range(nloc[i]):
                for kb in range(nloc[j]):
                    if rowop[i] == 0:
                        A[dof0[i] + ka, dof0[j] + kb] += blk_v[ka, kb]
                    elif rowop[i] == 1:
                        A[dof0[i] + ka, dof0[j] + kb] += blk_ka[ka, kb]
                    if rowop[j] == 0:
                        A[dof0[j] + kb, dof0[i] + ka] += blk_v[ka, kb]
                    elif rowop[j] == 1:
                        A[dof0[j] + kb, dof0[i] + ka] += blk_kb[ka, kb]
    return n_near


# --- python driver ----------------------------------------------------------------

def _corners4(linked: LinkedMeshes, g: int) -> np.ndarray:
    c = np.full((4, 3), np.nan)
    k = linked.corners(g)
    c[:len(k)] = k
    return c


def _base(shape, n):
    r = tensor_rule(shape, n)
    return np.column_stack([r.points, r.weights])


_REF = {3: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
        4: np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])}


@dataclass
class AssemblyStats:
    touching_pairs: int = 0
    singular_subpairs: int = 0
    near_pairs: int = 0
    near_leaves: int = 0
    subdivided_pairs: int = 0

    def to_dict(self):
        return dict(self.__dict__)


class _Assembler:
    def __init__(self, linked: LinkedMeshes, space: ShapeFunctionSpace, orders: QuadratureOrders):
        self.linked = linked
        self.space = space
        self.orders = orders
        n = linked.n_elements
        self.C = np.full((n, 4, 3), np.nan)
        for g in range(n):
            k = linked.corners(g)
            self.C[g, :len(k)] = k
        self.nvs = linked.shapes.astype(np.int64)
        self.dof0 = space.dof_start[:-1].copy()
        self.nloc = space.n_local.copy()
        self.order = space.order_code
        cen = np.nanmean(self.C, axis=1)
        self.centers = cen
        self.radii = np.array([np.max(np.linalg.norm(linked.corners(g) - cen[g], axis=1))
                               for g in range(n)])
        self.stats = AssemblyStats()

    def run(self, A, rowop):
        rowop = np.asarray(rowop, dtype=np.int64)
        o = self.orders
        pairs = self.linked.touching_pairs()
        self.stats.touching_pairs = len(pairs)
        n = self.linked.n_elements
        # CSR of touching partners j > i
        off = pairs[pairs[:, 0] != pairs[:, 1]]
        counts = np.bincount(off[:, 0], minlength=n)
        ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        idx = off[np.lexsort((off[:, 1], off[:, 0])), 1].astype(np.int64)

        base_t, base_q = _base(Shape.TRI, o.regular), _base(Shape.QUAD, o.regular)
        nlmax = int(self.nloc.max())
        Xr, Nr, Wr, Sr = _element_points(self.C, self.nvs, base_t, base_q, self.order, nlmax)
        Xf, Nf, Wf, Sf = _element_points(self.C, self.nvs, _base(Shape.TRI, o.far),
                                         _base(Shape.QUAD, o.far), self.order, nlmax)
        # numba does not bounds-check, so the close-pair buffer is sized exactly
        near_cap = _count_near(self.C, rowop, ptr, idx, self.centers, self.radii, o.near_ratio)
        near = np.empty((max(near_cap, 1), 2), dtype=np.int64)
        n_near = _regular_all(A, self.C, self.nvs, rowop, self.dof0, self.nloc, self.order,
                              ptr, idx, self.centers, self.radii, o.near_ratio, o.far_ratio,
                              o.near_depth, Xr, Nr, Wr, Sr, Xf, Nf, Wf, Sf,
                              base_t, base_q, near)
        if n_near != near_cap:
            raise AssemblyError(f"close-pair count changed ({near_cap} -> {n_near})")
        near = near[:n_near]
        self.stats.near_pairs = int(n_near)
        recs = np.column_stack([near, np.ones(len(near), dtype=np.int64)])
        cells = np.zeros((len(near), 2, 4, 2))
        ncs = np.zeros((len(near), 2), dtype=np.int64)
        for m, (i, j) in enumerate(near):
            cells[m, 0] = _REF[self.nvs[i]]
            cells[m, 1] = _REF[self.nvs[j]]
            ncs[m] = (self.nvs[i], self.nvs[j])
        self._touching(A, rowop, pairs, recs, cells, ncs, base_t, base_q)
        return A

    def _touching(self, A, rowop, pairs, near_recs, near_cells, near_ncs, base_t, base_q):
        o = self.orders
        groups = {}
        regular = []
        for i, j in pairs:
            if rowop[i] < 0 and rowop[j] < 0:
                continue
            pc = self.linked.classify_pair(int(i), int(j))
            if len(pc.sub_pairs) > 1:
                self.stats.subdivided_pairs += 1
            both = 0 if i == j else 1
            for x, y, case in pc.sub_pairs:
                if case is Case.REGULAR:
                    regular.append((i, j, both, x, y))
                    continue
                key = (case, x.shape, y.shape)
                oa, ma = x.affine()
                ob, mb = y.affine()
                det = abs(np.linalg.det(ma)) * abs(np.linalg.det(mb))
                aff = np.concatenate([oa, ma.ravel(), ob, mb.ravel(), [det]])
                groups.setdefault(key, []).append(((i, j, both), aff))
                self.stats.singular_subpairs += 1
        for key in sorted(groups, key=lambda k: (k[0].value, int(k[1]), int(k[2]))):
            case, sa, sb = key
            rule = singular_rule(case, (sa, sb), o.singular)
            recs = np.array([r for r, _ in groups[key]], dtype=np.int64)
            aff = np.array([a for _, a in groups[key]])
            _singular_batch(A, self.C, self.nvs, rowop, self.dof0, self.nloc, self.order,
                            rule.x, rule.y, rule.weights, recs, aff)
        if regular:
            rr = np.array([(i, j, b) for i, j, b, _, _ in regular], dtype=np.int64)
            cells = np.zeros((len(regular), 2, 4, 2))
            ncs = np.zeros((len(regular), 2), dtype=np.int64)
            for m, (_, _, _, x, y) in enumerate(regular):
                cells[m, 0, :len(x.ref)] = x.ref
                cells[m, 1, :len(y.ref)] = y.ref
                ncs[m] = (len(x.ref), len(y.ref))
            near_recs = np.vstack([near_recs, rr])
            near_cells = np.concatenate([near_cells, cells])
            near_ncs = np.vstack([near_ncs, ncs])
        if len(near_recs):
            self.stats.near_leaves = int(_near_batch(
                A, self.C, self.nvs, rowop, self.dof0, self.nloc, self.order, near_recs,
                near_cells, near_ncs, o.near_ratio, o.near_depth, base_t, base_q))


def _assemble(linked, space, orders, rowop, n_rows=None):
    n = space.n_dofs
    A = np.zeros((n, n))
    asm = _Assembler(linked, space, orders or QuadratureOrders())
    asm.run(A, rowop)
    return A, asm.stats


def assemble_V(linked: LinkedMeshes, space: ShapeFunctionSpace, orders: QuadratureOrders = None):
    """Full single-layer Galerkin matrix over all DOFs."""
    A, _ = _assemble(linked, space, orders, np.full(linked.n_elements, OP_V))
    return A


def assemble_Kprime(linked: LinkedMeshes, space: ShapeFunctionSpace, orders: QuadratureOrders = None):
    """Galerkin matrix of the integral part of the adjoint double layer."""
    A, _ = _assemble(linked, space, orders, np.full(linked.n_elements, OP_K))
    return A


def _local_mass(c, nv, order, n=4):
    rule = tensor_rule(Shape(nv), n)
    nl = 1 if order == 0 else nv
    m = np.zeros((nl, nl))
    for p, w in zip(rule.points, rule.weights):
        jac = _geo(c, nv, p[0], p[1])[3]
        phi = np.array([_shape(nv, order, p[0], p[1], k) for k in range(nl)])
        m += w * jac * np.outer(phi, phi)
    return m


def assemble_M(linked: LinkedMeshes, space: ShapeFunctionSpace, elements=None) -> np.ndarray:
    """Mass matrix (block diagonal) over all DOFs; rows outside ``elements`` stay zero."""
    n = space.n_dofs
    M = np.zeros((n, n))
    els = range(linked.n_elements) if elements is None else elements
    for g in els:
        d = space.dofs(g)
        M[np.ix_(d, d)] = _local_mass(_corners4(linked, g), int(linked.shapes[g]), space.order_code)
    return M


def assemble_F_H(space: ShapeFunctionSpace, group_elements):
    """Zero-charge rows F (groups x DOFs) and potential coupling H = F^T."""
    ints = space.integrals()
    F = np.zeros((len(group_elements), space.n_dofs))
    for k, els in enumerate(group_elements):
        if len(els) == 0:
            raise AssemblyError(f"floating group {k} has no elements")
        d = space.dofs_of(els)
        F[k, d] = ints[d]
    return F, F.T.copy()


@dataclass
class BlockSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    index_maps: dict            # region kind -> (start, stop) DOF range
    floating_groups: list       # group ids in alpha order
    n_dofs: int
    stats: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def dump(self, path):
        """Row-major float64 matrix with an int64 (rows, cols) header plus a JSON sidecar."""
        with open(path, "wb") as fh:
            np.array(self.matrix.shape, dtype=np.int64).tofile(fh)
            np.ascontiguousarray(self.matrix, dtype=np.float64).tofile(fh)
        side = {"shape": list(self.matrix.shape), "index_maps": {k: list(v) for k, v in self.index_maps.items()},
                "floating_groups": list(self.floating_groups), "n_dofs": self.n_dofs,
                "rhs": self.rhs.tolist()}
        with open(str(path) + ".json", "w") as fh:
            json.dump(side, fh, indent=1)


def build_block_system(model, space: ShapeFunctionSpace, orders: QuadratureOrders = None) -> BlockSystem:
    """Assemble the coupled system for a model whose elements are ordered D, E, F.

    Rows: dielectric (lambda M + K') sigma = 0; electrode V sigma = g * int phi;
    floating V sigma - H alpha = 0; one zero-charge row per floating group.
    """
    linked = model.linked
    kinds = model.element_kinds()          # per element: "dielectric" | "electrode" | "floating"
    n = space.n_dofs
    groups = model.floating_group_ids()
    ng = len(groups)
    rowop = np.where(kinds == "dielectric", OP_K, OP_V).astype(np.int64)
    A = np.zeros((n + ng, n + ng))
    asm = _Assembler(linked, space, orders or QuadratureOrders())
    An = np.zeros((n, n))
    asm.run(An, rowop)
    A[:n, :n] = An
    del An
    ints = space.integrals()
    rhs = np.zeros(n + ng)
    lam = model.element_lambda()
    for g in np.nonzero(kinds == "dielectric")[0]:
        d = space.dofs(g)
        A[np.ix_(d, d)] += lam[g] * _local_mass(_corners4(linked, g), int(linked.shapes[g]), space.order_code)
    volt = model.element_voltage()
    for g in np.nonzero(kinds == "electrode")[0]:
        d = space.dofs(g)
        rhs[d] = volt[g] * ints[d]
    if ng:
        F, H = assemble_F_H(space, [model.group_elements(gid) for gid in groups])
        A[:n, n:] = -H
        A[n:, :n] = F
    maps = {}
    for kind in ("dielectric", "electrode", "floating"):
        els = np.nonzero(kinds == kind)[0]
        if len(els):
            d = space.dofs_of(els)
            maps[kind] = (int(d.min()), int(d.max()) + 1)
    if ng:
        maps["alpha"] = (n, n + ng)
    return BlockSystem(A, rhs, maps, list(groups), n, asm.stats.to_dict())

