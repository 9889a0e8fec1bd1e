"""Independent reference values: closed forms, series and brute-force integrals.

Nothing here uses the assembly path.  The only shared ingredient with the
rest of the package is the 1-D Gauss-Legendre node set from numpy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import OracleError

__all__ = [
    "OracleResult",
    "sphere_capacitance",
    "two_sphere_capacitance",
    "layered_spherical_capacitor",
    "layered_capacitor_radial",
    "brute_force_galerkin_entry",
    "panel_potential",
]

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class OracleResult:
    value: float
    method: str
    terms_or_depth: int
    est_error: float

    def to_dict(self):
        return {"value": self.value, "method": self.method,
                "terms_or_depth": self.terms_or_depth, "est_error": self.est_error}


def sphere_capacitance(R: float, eps0: float = 1.0) -> float:
    if R <= 0:
        raise OracleError("radius must be positive")
    return FOUR_PI * eps0 * R


def two_sphere_capacitance(R: float, center_distance: float, terms: int = 30,
                           eps0: float = 1.0) -> OracleResult:
    """Mutual capacitance of two equal spheres held at +V and -V.

    Image-charge series C = 2 pi eps0 R sum_n sinh(beta) / sinh(n beta),
    cosh(beta) = d / (2R).  Terms decay like exp(-(n-1) beta), so the tail
    after ``terms`` is bounded by a geometric series.
    """
    if R <= 0:
        raise OracleError("radius must be positive")
    if center_distance <= 2 * R:
        raise OracleError("spheres overlap or touch")
    if terms < 1:
        raise OracleError("need at least one term")
    beta = math.acosh(center_distance / (2 * R))
    n = np.arange(1, terms + 1)
    # sinh(b)/sinh(nb) written with exponentials to avoid overflow for large n
    t = math.sinh(beta) * 2.0 * np.exp(-n * beta) / (1.0 - np.exp(-2.0 * n * beta))
    s = float(np.sum(t))
    q = math.exp(-beta)
    tail = float(t[-1]) * q / (1 - q)
    scale = 2 * math.pi * eps0 * R
    return OracleResult(scale * s, "image-charge series", int(terms), scale * tail)


def layered_spherical_capacitor(a, b, c, eps1, eps2, eps0: float = 1.0) -> float:
    """Concentric spheres a < b < c; eps1 fills (a, b), eps2 fills (b, c)."""
    if not (0 < a < b < c):
        raise OracleError("need 0 < a < b < c")
    if eps1 <= 0 or eps2 <= 0:
        raise OracleError("permittivities must be positive")
    return FOUR_PI * eps0 / ((1 / eps1) * (1 / a - 1 / b) + (1 / eps2) * (1 / b - 1 / c))


def layered_capacitor_radial(a, b, c, eps1, eps2, eps0: float = 1.0) -> float:
    """Same capacitance from integrating dV/dr = -Q / (4 pi eps(r) r^2) numerically."""
    from scipy.integrate import solve_ivp

    def rhs(r, v):
        eps = eps1 if r < b else eps2
        return [-1.0 / (FOUR_PI * eps0 * eps * r * r)]

    drop = 0.0
    for lo, hi in ((a, b), (b, c)):
        sol = solve_ivp(rhs, (lo, hi), [0.0], method="DOP853", rtol=1e-12, atol=1e-14)
        drop -= float(sol.y[0, -1])
    return 1.0 / drop


# --- brute-force panel integrals -------------------------------------------------

_Q = 0.25            # geometric grading ratio
_MAXLEV = 16


def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


class _Panel:
    """Flat triangle or bilinear quad given by its corners."""

    def __init__(self, corners):
        self.c = np.asarray(corners, dtype=float)
        if self.c.shape not in ((3, 3), (4, 3)):
            raise OracleError("element needs 3 or 4 corners in 3-D")
        self.n = len(self.c)
        self.ref = (np.array([[0, 0], [1, 0], [0, 1]], float) if self.n == 3
                    else np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float))
        self.diam = max(np.linalg.norm(p - q) for p in self.c for q in self.c)
        # bilinear coefficients x = c00 + s cs + t ct + s t cst (triangles: cst = 0)
        c = self.c
        if self.n == 3:
            self.coef = np.array([c[0], c[1] - c[0], c[2] - c[0], np.zeros(3)])
        else:
            self.coef = np.array([c[0], c[1] - c[0], c[3] - c[0], c[0] - c[1] + c[2] - c[3]])

    def map(self, xi):
        s, t = xi[..., :1], xi[..., 1:]
        a, bs, bt, bst = self.coef
        return a + s * bs + t * bt + s * t * bst

    def jac(self, xi):
        s, t = xi[..., :1], xi[..., 1:]
        a, bs, bt, bst = self.coef
        return np.linalg.norm(np.cross(bs + t * bst, bt + s * bst), axis=-1)

    def clamp(self, xi):
        if self.n == 4:
            return np.clip(xi, 0, 1)
        xi = np.maximum(xi, 0)
        over = xi.sum(axis=-1) > 1
        if np.any(over):
            xi[over] = xi[over] / xi[over].sum(axis=-1, keepdims=True)
        return xi

    def foot(self, x):
        """Approximate closest reference point of each x (projected Gauss-Newton)."""
        g = np.linspace(0, 1, 9)
        G = np.array([(a, b) for a in g for b in g])
        if self.n == 3:
            G = G[G.sum(axis=1) <= 1]
        d = np.linalg.norm(x[:, None, :] - self.map(G)[None], axis=2)
        xi = G[np.argmin(d, axis=1)].copy()
        _, bs, bt, bst = self.coef
        for _ in range(30):
            s, t = xi[:, :1], xi[:, 1:]
            xs = bs + t * bst
            xt = bt + s * bst
            r = x - self.map(xi)
            a11 = np.einsum("ij,ij->i", xs, xs)
            a12 = np.einsum("ij,ij->i", xs, xt)
            a22 = np.einsum("ij,ij->i", xt, xt)
            b1 = np.einsum("ij,ij->i", xs, r)
            b2 = np.einsum("ij,ij->i", xt, r)
            det = a11 * a22 - a12 * a12
            step = np.column_stack([(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det])
            new = self.clamp(xi + step)
            if np.max(np.abs(new - xi)) < 1e-15:
                xi = new
                break
            xi = new
        # the clamped iterate may stall at a corner of the constraint set; compare with edges
        best = xi
        dbest = np.linalg.norm(x - self.map(xi), axis=1)
        for k in range(self.n):
            a, b = self.ref[k], self.ref[(k + 1) % self.n]
            ya, yb = self.map(a), self.map(b)
            e = yb - ya
            tt = np.clip((x - ya) @ e / (e @ e), 0, 1)
            cand = a + tt[:, None] * (b - a)
            dc = np.linalg.norm(x - self.map(cand), axis=1)
            better = dc < dbest - 1e-15 * self.diam
            best = np.where(better[:, None], cand, best)
            dbest = np.where(better, dc, dbest)
        return best, dbest


def _graded(crit, levels, n):
    """Composite Gauss rule on [0, 1] graded geometrically toward each point in crit."""
    bp = {0.0, 1.0}
    for c in crit:
        bp.add(float(c))
        for k in range(1, levels + 1):
            for v in (c - _Q ** k, c + _Q ** k):
                if 0.0 < v < 1.0:
                    bp.add(v)
    bp = np.array(sorted(bp))
    bp = bp[np.concatenate([[True], np.diff(bp) > 1e-15])]
    x, w = _gl(n)
    lo, hi = bp[:-1], bp[1:]
    pts = (lo[:, None] + (hi - lo)[:, None] * x[None]).ravel()
    wts = ((hi - lo)[:, None] * w[None]).ravel()
    return pts, wts


def _rule_table(n):
    """Rules graded toward 0 for every level, padded into one array."""
    rules = [_graded([0.0], lev, n) for lev in range(_MAXLEV + 1)]
    size = max(len(r[0]) for r in rules)
    pts = np.zeros((_MAXLEV + 1, size))
    wts = np.zeros((_MAXLEV + 1, size))
    lens = np.zeros(_MAXLEV + 1, dtype=np.int64)
    for k, (p, w) in enumerate(rules):
        pts[k, :len(p)] = p
        wts[k, :len(w)] = w
        lens[k] = len(p)
    return pts, wts, lens


def _levels(scale):
    scale = np.asarray(scale, dtype=float)
    with np.errstate(divide="ignore"):
        lv = np.ceil(np.log(np.maximum(scale, 1e-300)) / math.log(_Q)) + 1
    lv = np.where(scale <= 0, 0, lv)
    return np.clip(lv, 0, _MAXLEV).astype(np.int64)


@njit(cache=True)
def _inner_core(x, p, lev, ref, coef, shape, pts, wts, lens):
    m = x.shape[0]
    nc = ref.shape[0]
    out = np.zeros(m)
    for i in range(m):
        L = lev[i]
        ns = lens[L]
        px, py = p[i, 0], p[i, 1]
        ypx = coef[0, 0] + px * coef[1, 0] + py * coef[2, 0] + px * py * coef[3, 0]
        ypy = coef[0, 1] + px * coef[1, 1] + py * coef[2, 1] + px * py * coef[3, 1]
        ypz = coef[0, 2] + px * coef[1, 2] + py * coef[2, 2] + px * py * coef[3, 2]
        h0, h1, h2 = ypx - x[i, 0], ypy - x[i, 1], ypz - x[i, 2]
        acc = 0.0
        for k in range(nc):
            ax, ay = ref[k, 0], ref[k, 1]
            bx, by = ref[(k + 1) % nc, 0], ref[(k + 1) % nc, 1]
            # physical edge (straight for both element types)
            yax = coef[0, 0] + ax * coef[1, 0] + ay * coef[2, 0] + ax * ay * coef[3, 0]
            yay = coef[0, 1] + ax * coef[1, 1] + ay * coef[2, 1] + ax * ay * coef[3, 1]
            yaz = coef[0, 2] + ax * coef[1, 2] + ay * coef[2, 2] + ax * ay * coef[3, 2]
            ybx = coef[0, 0] + bx * coef[1, 0] + by * coef[2, 0] + bx * by * coef[3, 0]
            yby = coef[0, 1] + bx * coef[1, 1] + by * coef[2, 1] + bx * by * coef[3, 1]
            ybz = coef[0, 2] + bx * coef[1, 2] + by * coef[2, 2] + bx * by * coef[3, 2]
            ex, ey, ez = ybx - yax, yby - yay, ybz - yaz
            ee = ex * ex + ey * ey + ez * ez
            tf = ((ypx - yax) * ex + (ypy - yay) * ey + (ypz - yaz) * ez) / ee
            tf = min(1.0, max(0.0, tf))
            fx, fy = ax + tf * (bx - ax), ay + tf * (by - ay)
            for half in range(2):
                if half == 0:
                    c0x, c0y, c1x, c1y = ax, ay, fx, fy     # foot at t = 1
                else:
                    c0x, c0y, c1x, c1y = fx, fy, bx, by     # foot at t = 0
                area2 = abs((c0x - px) * (c1y - py) - (c0y - py) * (c1x - px))
                if area2 <= 1e-15:
                    continue
                for a in range(ns):
                    s = pts[L, a]
                    ws = wts[L, a]
                    for b in range(ns):
                        tt = pts[L, b]
                        if half == 0:
                            tt = 1.0 - tt
                        wt = wts[L, b]
                        dx = c0x + tt * (c1x - c0x) - px
                        dy = c0y + tt * (c1y - c0y) - py
                        xs = px + s * dx
                        xt = py + s * dy
                        us0 = coef[1, 0] + xt * coef[3, 0]
                        us1 = coef[1, 1] + xt * coef[3, 1]
                        us2 = coef[1, 2] + xt * coef[3, 2]
                        ut0 = coef[2, 0] + xs * coef[3, 0]
                        ut1 = coef[2, 1] + xs * coef[3, 1]
                        ut2 = coef[2, 2] + xs * coef[3, 2]
                        cx = us1 * ut2 - us2 * ut1
                        cy = us2 * ut0 - us0 * ut2
                        cz = us0 * ut1 - us1 * ut0
                        jac = math.sqrt(cx * cx + cy * cy + cz * cz)
                        # y - x from the increment on p, so tiny distances keep their digits
                        gx, gy = s * dx, s * dy
                        rx = h0 + gx * (coef[1, 0] + py * coef[3, 0]) + gy * (coef[2, 0] + px * coef[3, 0]) + gx * gy * coef[3, 0]
                        ry = h1 + gx * (coef[1, 1] + py * coef[3, 1]) + gy * (coef[2, 1] + px * coef[3, 1]) + gx * gy * coef[3, 1]
                        rz = h2 + gx * (coef[1, 2] + py * coef[3, 2]) + gy * (coef[2, 2] + px * coef[3, 2]) + gx * gy * coef[3, 2]
                        r = math.sqrt(rx * rx + ry * ry + rz * rz)
                        phi = shape[0] + shape[1] * xs + shape[2] * xt + shape[3] * xs * xt
                        acc += ws * wt * s * area2 * phi * jac / r
        out[i] = acc / (4.0 * math.pi)
    return out


def _shape_coef(shape):
    if shape is None:
        return np.array([1.0, 0.0, 0.0, 0.0])
    c = np.zeros(4)
    c[:len(shape)] = shape
    return c


def _eval_shape(coef, xi):
    s, t = xi[..., 0], xi[..., 1]
    return coef[0] + coef[1] * s + coef[2] * t + coef[3] * s * t


def _inner(panel: _Panel, x, shape, extra=0, n=10):
    """g(x) = int_B U(x, y) phi(y) dy for a batch of points x."""
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=float)
    p, h = panel.foot(x)
    yp = panel.map(p)
    need = _levels(h / panel.diam)
    for k in range(panel.n):
        a, b = panel.ref[k], panel.ref[(k + 1) % panel.n]
        ya, yb = panel.map(a), panel.map(b)
        e = yb - ya
        tf = np.clip((yp - ya) @ e / (e @ e), 0, 1)
        dl = np.linalg.norm(yp - (ya + tf[:, None] * e), axis=1) / np.linalg.norm(e)
        need = np.maximum(need, _levels(dl))
    need = np.minimum(need + extra, _MAXLEV)
    pts, wts, lens = _rule_table(n)
    return _inner_core(x, np.ascontiguousarray(p), need, panel.ref, panel.coef,
                       _shape_coef(shape), pts, wts, lens)


def _contact_ref(panel_a: _Panel, panel_b: _Panel, tol):
    """Reference coordinates on A of B's vertices that touch A."""
    p, d = panel_a.foot(panel_b.c)
    return p[d <= tol]


def _outer_rule(panel: _Panel, crit_pts, levels, n):
    """Tensor rule on A graded toward its edges and toward critical points."""
    if panel.n == 4:
        cu = [0.0, 1.0] + [float(c[0]) for c in crit_pts]
        cv = [0.0, 1.0] + [float(c[1]) for c in crit_pts]
        u, wu = _graded(cu, levels, n)
        v, wv = _graded(cv, levels, n)
        U, V = np.meshgrid(u, v, indexing="ij")
        return np.column_stack([U.ravel(), V.ravel()]), np.outer(wu, wv).ravel()
    # collapsed square: xi = (a (1 - b), b); edges map to coordinate lines
    ca, cb = [0.0, 1.0], [0.0, 1.0]
    for s, t in crit_pts:
        cb.append(float(t))
        if t < 1 - 1e-14:
            ca.append(float(s / (1 - t)))
    a, wa = _graded(ca, levels, n)
    b, wb = _graded(cb, levels, n)
    A, B = np.meshgrid(a, b, indexing="ij")
    W = np.outer(wa, wb) * (1 - B)
    return np.column_stack([(A * (1 - B)).ravel(), B.ravel()]), W.ravel()


def brute_force_galerkin_entry(elem_a, elem_b, shape_i=None, shape_j=None, tol: float = 1e-9,
                               max_rounds: int = 5) -> OracleResult:
    """Reference value of int_A int_B phi_i(x) U(x, y) phi_j(y) dy dx.

    Elements are corner arrays (3 or 4 points).  Shape functions are given
    as coefficients ``(c0, cs, ct, cst)`` of ``c0 + cs s + ct t + cst s t``
    in reference coordinates; ``None`` means the constant 1.

    The inner integral uses a polar fan around the closest point of B with
    geometric grading toward the singular point; the outer one a tensor rule
    graded toward the edges of A and every vertex of B that touches A.
    Grading depth and points per panel are raised together until two
    successive values agree to ``tol`` (relative).
    """
    pa, pb = _Panel(elem_a), _Panel(elem_b)
    ci = _shape_coef(shape_i)
    crit = _contact_ref(pa, pb, 1e-10 * max(pa.diam, pb.diam))
    prev, err = None, np.inf
    for k in range(max_rounds):
        lev, n = 3 + 2 * k, 6 + 2 * k
        xi, w = _outer_rule(pa, crit, lev, n)
        g = _inner(pb, pa.map(xi), shape_j, extra=k, n=n)
        val = float(np.sum(w * _eval_shape(ci, xi) * pa.jac(xi) * g))
        if prev is not None:
            err = abs(val - prev)
            if err <= tol * max(abs(val), 1e-300):
                return OracleResult(val, "graded polar/tensor cubature", lev, err)
        prev = val
    raise OracleError(f"brute-force entry did not reach tol={tol:g} (last change {err:.3g})")


def panel_potential(corners, points, shape=None, extra_levels: int = 2, n: int = 12) -> np.ndarray:
    """Single-layer potential of density ``shape`` on one panel at the given points."""
    panel = _Panel(corners)
    return _inner(panel, np.asarray(points, dtype=float), shape, extra_levels, n)
