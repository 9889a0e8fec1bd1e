"""Potentials, fields, charges and exports computed from a solved density."""
from __future__ import annotations

import csv
import math

import numpy as np
from numba import njit

from .errors import ConfigError, EvaluationError, PointOnSurface
from .geometry import TagKind
from .operators import (INV4PI, ShapeFunctionSpace, _base, _cell_points, _geo, _point_tri,
                        _shape, _split)
from .quadrature import Shape
from .solver import Solution

__all__ = ["FieldSample", "eval_potential", "eval_field", "eval_samples", "total_charge",
           "free_charge", "capacitance", "foil_profile", "export_vtk", "export_csv", "report"]


class FieldSample:
    __slots__ = ("location", "potential", "e_field")

    def __init__(self, location, potential, e_field):
        self.location = tuple(float(c) for c in location)
        self.potential = float(potential)
        self.e_field = tuple(float(c) for c in e_field)

    def to_dict(self):
        return {"location": list(self.location), "potential": self.potential,
                "e_field": list(self.e_field)}


@njit(cache=True)
def _poly_dist(x, C, nv):
    if nv == 3:
        return math.sqrt(_point_tri(x, C[0], C[1], C[2]))
    return math.sqrt(min(_point_tri(x, C[0], C[1], C[2]), _point_tri(x, C[0], C[2], C[3])))


@njit(cache=True)
def _eval_kernel(X, C, nvs, dof0, nloc, order, sigma, centers, radii, ratio, max_depth,
                 tol_gap, base_tri, base_quad, want_field):
    npts = X.shape[0]
    u = np.zeros(npts)
    E = np.zeros((npts, 3))
    bad = -1
    stack = np.empty((4 * max_depth + 8, 4, 2))
    sdep = np.empty(4 * max_depth + 8, dtype=np.int64)
    kids = np.empty((4, 4, 2))
    ref_t = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    ref_q = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    for p in range(npts):
        x = X[p]
        for e in range(C.shape[0]):
            nv = nvs[e]
            dc = math.sqrt(((x - centers[e]) ** 2).sum())
            if dc - radii[e] < 2.0 * radii[e] * ratio:
                if _poly_dist(x, C[e], nv) <= tol_gap:
                    bad = p
                    return u, E, bad
            stack[0] = ref_t if nv == 3 else ref_q
            sdep[0] = 0
            top = 1
            while top > 0:
                top -= 1
                cell = stack[top].copy()
                dep = sdep[top]
                cx = cy = cz = 0.0
                pts = np.empty((4, 3))
                for k in range(nv):
                    g = _geo(C[e], nv, cell[k, 0], cell[k, 1])
                    pts[k, 0], pts[k, 1], pts[k, 2] = g[0], g[1], g[2]
                    cx += g[0]
                    cy += g[1]
                    cz += g[2]
                cx /= nv
                cy /= nv
                cz /= nv
                rad = 0.0
                for k in range(nv):
                    rad = max(rad, math.sqrt((pts[k, 0] - cx) ** 2 + (pts[k, 1] - cy) ** 2
                                             + (pts[k, 2] - cz) ** 2))
                d = math.sqrt((x[0] - cx) ** 2 + (x[1] - cy) ** 2 + (x[2] - cz) ** 2) - rad
                if d < 2.0 * rad * ratio and dep < max_depth:
                    _split(cell, nv, kids)
                    for k in range(4):
                        stack[top] = kids[k]
                        sdep[top] = dep + 1
                        top += 1
                    continue
                q = _cell_points(cell, nv, base_tri, base_quad)
                for i in range(q.shape[0]):
                    g = _geo(C[e], nv, q[i, 0], q[i, 1])
                    s = 0.0
                    for k in range(nloc[e]):
                        s += sigma[dof0[e] + k] * _shape(nv, order, q[i, 0], q[i, 1], k)
                    d0, d1, d2 = x[0] - g[0], x[1] - g[1], x[2] - g[2]
                    r = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                    w = q[i, 2] * g[3] * s * INV4PI
                    u[p] += w / r
                    if want_field:
                        r3 = r * r * r
                        E[p, 0] += w * d0 / r3
                        E[p, 1] += w * d1 / r3
                        E[p, 2] += w * d2 / r3
    return u, E, bad


class _Evaluator:
    def __init__(self, model, space: ShapeFunctionSpace, n=5, ratio=1.0, max_depth=10):
        L = model.linked
        self.tol_gap = L.tol_gap
        n_el = L.n_elements
        self.C = np.full((n_el, 4, 3), np.nan)
        for g in range(n_el):
            k = L.corners(g)
            self.C[g, :len(k)] = k
        self.nvs = L.shapes.astype(np.int64)
        self.centers = np.nanmean(self.C, axis=1)
        self.radii = np.array([np.max(np.linalg.norm(L.corners(g) - self.centers[g], axis=1))
                               for g in range(n_el)])
        self.space = space
        self.n, self.ratio, self.max_depth = n, ratio, max_depth
        self.bt, self.bq = _base(Shape.TRI, n), _base(Shape.QUAD, n)

    def __call__(self, sigma, points, want_field):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        if X.shape[1] != 3:
            raise EvaluationError("points must be 3-vectors")
        sp = self.space
        u, E, bad = _eval_kernel(X, self.C, self.nvs, sp.dof_start[:-1].copy(), sp.n_local,
                                 sp.order_code, np.asarray(sigma, float), self.centers, self.radii,
                                 self.ratio, self.max_depth, self.tol_gap, self.bt, self.bq, want_field)
        if bad >= 0:
            raise PointOnSurface(f"point {tuple(X[bad])} lies within tol_gap of the boundary")
        return u, E


def eval_potential(solution: Solution, model, space, points) -> np.ndarray:
    """Single-layer potential u(x) at points off the boundary."""
    u, _ = _Evaluator(model, space)(solution.sigma, points, False)
    return u


def eval_field(solution: Solution, model, space, points) -> np.ndarray:
    """E = -grad u with the kernel differentiated analytically."""
    _, E = _Evaluator(model, space)(solution.sigma, points, True)
    return E


def eval_samples(solution: Solution, model, space, points) -> list:
    u, E = _Evaluator(model, space)(solution.sigma, points, True)
    return [FieldSample(p, a, b) for p, a, b in zip(np.atleast_2d(points), u, E)]


def total_charge(solution: Solution, model, space, region) -> float:
    """Q = int sigma ds over the region's elements."""
    els = model.group_elements(region)
    if len(els) == 0:
        raise ConfigError(f"region {region!r} has no elements")
    d = space.dofs_of(els)
    return float(solution.sigma[d] @ space.integrals()[d])


def free_charge(solution, model, space, region) -> float:
    """Electrode charge scaled by the permittivity of the medium touching it."""
    g = model.group(region)
    eps = g.eps if g.kind is TagKind.ELECTRODE else 1.0
    return eps * total_charge(solution, model, space, region)


def capacitance(solution, model, space, plus, minus=None) -> float:
    """Q(plus) / (V+ - V-); ``minus=None`` means ground at infinity."""
    gp = model.group(plus)
    gm = model.group(minus) if minus is not None else None
    if gp.kind is not TagKind.ELECTRODE or (gm is not None and gm.kind is not TagKind.ELECTRODE):
        raise ConfigError("capacitance needs electrode regions")
    if plus == minus:
        raise ConfigError("capacitance needs two distinct electrodes")
    dv = gp.voltage - (gm.voltage if gm is not None else 0.0)
    if dv == 0:
        raise ConfigError("capacitance undefined for equal electrode voltages")
    return free_charge(solution, model, space, plus) / dv


def element_sigma(solution, space) -> np.ndarray:
    """Mean density per element (the coefficient itself for P0)."""
    ints = space.integrals()
    out = np.empty(space.linked.n_elements)
    for g in range(len(out)):
        d = space.dofs(g)
        out[g] = solution.sigma[d] @ ints[d] / ints[d].sum()
    return out


def foil_profile(solution, model, space, region, phi=0.0):
    """Element densities along the axial centerline of an axisymmetric region.

    Picks, per axial ring of elements, the one whose centroid lies closest
    to the azimuth ``phi``; returns ``(z, sigma)`` sorted by z.
    """
    els = model.group_elements(region)
    if len(els) == 0:
        raise ConfigError(f"region {region!r} has no elements")
    L = model.linked
    cen = np.array([L.corners(g).mean(axis=0) for g in els])
    ang = np.abs(np.angle(np.exp(1j * (np.arctan2(cen[:, 1], cen[:, 0]) - phi))))
    sig = element_sigma(solution, space)[els]
    rings = {}
    for k, z in enumerate(np.round(cen[:, 2], 9)):
        if z not in rings or ang[k] < ang[rings[z]]:
            rings[z] = k
    idx = [rings[z] for z in sorted(rings)]
    return cen[idx, 2], sig[idx]


def export_vtk(model, solution, space, path, samples=None):
    """Legacy ASCII POLYDATA; optional samples go to a second file next to it."""
    L = model.linked
    sig = element_sigma(solution, space)
    rid = model.region_ids()
    lines = ["# vtk DataFile Version 3.0", f"ncbem {model.name}", "ASCII", "DATASET POLYDATA",
             f"POINTS {len(L.vertices)} double"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in L.vertices]
    conn = [L.corner_ids(g) for g in range(L.n_elements)]
    size = sum(len(c) + 1 for c in conn)
    lines.append(f"POLYGONS {len(conn)} {size}")
    lines += [" ".join(str(int(v)) for v in (len(c), *c)) for c in conn]
    lines += [f"CELL_DATA {len(conn)}", "SCALARS sigma double 1", "LOOKUP_TABLE default"]
    lines += [f"{s:.17g}" for s in sig]
    lines += ["SCALARS region_id int 1", "LOOKUP_TABLE default"]
    lines += [str(int(r)) for r in rid]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if samples:
        spath = str(path).rsplit(".vtk", 1)[0] + "_samples.vtk"
        n = len(samples)
        out = ["# vtk DataFile Version 3.0", "ncbem field samples", "ASCII", "DATASET POLYDATA",
               f"POINTS {n} double"]
        out += ["%.17g %.17g %.17g" % s.location for s in samples]
        out += [f"VERTICES {n} {2 * n}"] + [f"1 {k}" for k in range(n)]
        out += [f"POINT_DATA {n}", "SCALARS potential double 1", "LOOKUP_TABLE default"]
        out += [f"{s.potential:.17g}" for s in samples]
        out += ["VECTORS E double"] + ["%.17g %.17g %.17g" % s.e_field for s in samples]
        with open(spath, "w") as fh:
            fh.write("\n".join(out) + "\n")
        return [str(path), spath]
    return [str(path)]


def export_csv(model, solution, space, path):
    L = model.linked
    sig = element_sigma(solution, space)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element_id", "region", "area", "sigma"])
        for g in range(L.n_elements):
            w.writerow([g, model.element_group[g], repr(float(L.element_area(g))), repr(float(sig[g]))])
    return str(path)


def report(solution, model, space, system=None, samples=None, extra=None) -> dict:
    """JSON-ready summary; contains no timestamps or paths."""
    regions = {}
    for gid, g in sorted(model.groups.items()):
        q = total_charge(solution, model, space, gid)
        entry = {"kind": g.kind.value, "charge": q}
        if g.kind is TagKind.ELECTRODE:
            entry["voltage"] = g.voltage
            entry["free_charge"] = g.eps * q
        regions[gid] = entry
    out = {"model": model.summary(), "space": space.to_dict(), "regions": regions,
           "floating": {gid: float(a) for gid, a in zip(model.floating_group_ids(), solution.alpha)},
           "alpha": [float(a) for a in solution.alpha],
           "residual_norm": solution.residual_norm,
           "condition_estimate": solution.condition_estimate,
           "dofs": {"total": space.n_dofs, "system": space.n_dofs + len(solution.alpha)}}
    if system is not None:
        out["dofs"]["by_kind"] = {k: v[1] - v[0] for k, v in system.index_maps.items()}
        out["assembly"] = system.stats
    pair = model.capacitance_pair
    electrodes = [gid for gid, g in sorted(model.groups.items()) if g.kind is TagKind.ELECTRODE]
    if pair is None and len(electrodes) == 1 and model.groups[electrodes[0]].voltage != 0:
        pair = (electrodes[0], None)
    if pair:
        p, m = pair
        out["capacitance"] = {"plus": p, "minus": m,
                              "value": capacitance(solution, model, space, p, m)}
    if samples:
        out["samples"] = [s.to_dict() for s in samples]
    if extra:
        out.update(extra)
    return out
