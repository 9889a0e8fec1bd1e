"""Interface linking between independently meshed patches.

Boundary vertices of every mesh are located on the neighbouring meshes by
closest-point projection (first onto the neighbour's analytic surface,
then onto the closure of the host element edge, alternating until the
point settles).  The result is a table of hanging nodes.  From it,
``classify_pair`` subdivides touching element pairs so that each
sub-pair is identical, shares a complete edge, shares exactly one vertex,
or is disjoint.

Vertices that coincide across meshes are merged into one *geometric
node label*; all shared-entity tests work on these labels, so curved
interfaces (where a fine vertex sits on the arc while the coarse element
edge is a chord) are classified exactly like flat ones.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import Ambiguous, NoPartner, UnresolvedOverlap
from .geometry import closest_point
from .mesh import SurfaceMesh, element_area
from .quadrature import Case, Shape, reference_vertices

log = logging.getLogger(__name__)

__all__ = [
    "HangingNode",
    "LinkFinding",
    "SubCell",
    "PairClassification",
    "LinkedMeshes",
    "link_interfaces",
    "classify_pair",
]


@dataclass(frozen=True)
class HangingNode:
    host_mesh: int
    host_element: int          # element index inside the host mesh
    local_coords: tuple        # reference coordinates in the host element
    foreign_mesh: int
    foreign_vertex: int
    distance: float            # gap between foreign vertex and host surface
    edge: int = -1             # local edge of the host element carrying the node
    edge_param: float = 0.0
    corner: int = -1           # local corner if the node was snapped onto a host vertex

    @property
    def snapped(self) -> bool:
        return self.corner >= 0

    def csv_row(self):
        r, s = self.local_coords
        return (self.foreign_mesh, self.foreign_vertex, self.host_mesh, self.host_element,
                r, s, self.distance)


@dataclass(frozen=True)
class LinkFinding:
    kind: str                  # "no_partner" | "ambiguous"
    mesh: int
    vertex: int
    position: tuple
    detail: str = ""

    def to_dict(self):
        return {"kind": self.kind, "mesh": self.mesh, "vertex": self.vertex,
                "position": list(self.position), "detail": self.detail}


@dataclass(frozen=True)
class SubCell:
    """Integration cell inside a parent element.

    ``ref`` holds the cell corners in the parent reference domain, in the
    order the cell map uses; ``labels`` the geometric node label of each
    corner (negative for interior points that cannot be shared).
    """

    element: int
    shape: Shape
    ref: np.ndarray
    labels: tuple

    def affine(self):
        o = self.ref[0]
        e1 = self.ref[1] - o
        e2 = (self.ref[2] if self.shape is Shape.TRI else self.ref[3]) - o
        return o, np.column_stack([e1, e2])

    def rotated(self, k: int) -> "SubCell":
        idx = [(k + i) % len(self.labels) for i in range(len(self.labels))]
        return SubCell(self.element, self.shape, self.ref[idx], tuple(self.labels[i] for i in idx))

    def reversed_from(self, k: int) -> "SubCell":
        n = len(self.labels)
        idx = [(k - i) % n for i in range(n)]
        return SubCell(self.element, self.shape, self.ref[idx], tuple(self.labels[i] for i in idx))


@dataclass
class PairClassification:
    case: Case
    sub_pairs: list = field(default_factory=list)   # (SubCell, SubCell, Case)

    def transposed(self) -> "PairClassification":
        return PairClassification(self.case, [(b, a, c) for a, b, c in self.sub_pairs])


def _tri_closure_coords(ref_pts, p):
    """Barycentric test of 2-D point p against triangle ref_pts."""
    a, b, c = ref_pts
    m = np.column_stack([b - a, c - a])
    s, t = np.linalg.solve(m, p - a)
    return s, t, 1 - s - t


class LinkedMeshes:
    """A set of meshes with their interface links and node labels.

    Elements are addressed by a global index (meshes concatenated in order).
    """

    def __init__(self, meshes, tol_gap=None, tol_cpp=None, tol_on_edge=1e-9, link=True):
        self.meshes = list(meshes)
        if not self.meshes:
            raise ValueError("need at least one mesh")
        lo = np.min([m.vertices.min(axis=0) for m in self.meshes], axis=0)
        hi = np.max([m.vertices.max(axis=0) for m in self.meshes], axis=0)
        self.diameter = float(np.linalg.norm(hi - lo))
        self.tol_gap = 1e-8 * self.diameter if tol_gap is None else float(tol_gap)
        self.tol_cpp = 1e-12 * self.diameter if tol_cpp is None else float(tol_cpp)
        self.tol_on_edge = float(tol_on_edge)

        self.vertex_offset = np.cumsum([0] + [len(m.vertices) for m in self.meshes])
        self.element_offset = np.cumsum([0] + [m.n_elements for m in self.meshes])
        self.vertices = np.vstack([m.vertices for m in self.meshes])
        cells = []
        for k, m in enumerate(self.meshes):
            c = m.cells.copy()
            c[c >= 0] += self.vertex_offset[k]
            cells.append(c)
        self.cells = np.vstack(cells)
        self.shapes = np.where(self.cells[:, 3] < 0, 3, 4)
        self.element_mesh = np.repeat(np.arange(len(self.meshes)),
                                      [m.n_elements for m in self.meshes])
        self._parent = np.arange(len(self.vertices))
        self.hanging: list = []
        self.findings: list = []
        self._hosted = {}
        if link:
            self.link()

    # -- addressing ------------------------------------------------------------
    @property
    def n_elements(self) -> int:
        return len(self.cells)

    def transformed(self, rotation=None, shift=None) -> "LinkedMeshes":
        """Rigidly moved copy that keeps the link data (labels, hanging nodes)."""
        out = copy.copy(self)
        out.meshes = [m.transformed(rotation, shift) for m in self.meshes]
        out.vertices = np.vstack([m.vertices for m in out.meshes])
        out._parent = self._parent.copy()
        return out

    def global_element(self, mesh: int, elem: int) -> int:
        return int(self.element_offset[mesh] + elem)

    def global_vertex(self, mesh: int, vertex: int) -> int:
        return int(self.vertex_offset[mesh] + vertex)

    def corners(self, g: int) -> np.ndarray:
        c = self.cells[g]
        return self.vertices[c[c >= 0]]

    def corner_ids(self, g: int) -> np.ndarray:
        c = self.cells[g]
        return c[c >= 0]

    # -- labels ----------------------------------------------------------------
    def _find(self, i):
        root = i
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[i] != root:
            self._parent[i], i = root, self._parent[i]
        return root

    def _union(self, a, b):
        ra, rb = self._find(a), self._find(b)
        if ra != rb:
            lo, hi = min(ra, rb), max(ra, rb)
            self._parent[hi] = lo

    def label(self, global_vertex: int) -> int:
        return int(self._find(int(global_vertex)))

    def labels(self, g: int) -> tuple:
        return tuple(self.label(v) for v in self.corner_ids(g))

    # -- linking ---------------------------------------------------------------
    def _boundary_segments(self, k):
        m = self.meshes[k]
        seg = {}
        edge_of = {}
        for e, cell in enumerate(m.cells):
            n = 3 if cell[3] < 0 else 4
            for j in range(n):
                a, b = int(cell[j]), int(cell[(j + 1) % n])
                edge_of[(a, b)] = (e, j)
        for line in m.boundary_vertices.values():
            for a, b in zip(line[:-1], line[1:]):
                if a == b:
                    continue
                if (a, b) in edge_of:
                    seg[(a, b)] = edge_of[(a, b)]
                elif (b, a) in edge_of:
                    e, j = edge_of[(b, a)]
                    seg[(b, a)] = (e, j)
        keys = sorted(seg)
        a = np.array([k_[0] for k_ in keys], dtype=int)
        b = np.array([k_[1] for k_ in keys], dtype=int)
        owner = np.array([seg[k_] for k_ in keys], dtype=int).reshape(-1, 2)
        return a, b, owner

    def _required(self, k):
        m = self.meshes[k]
        req, allv = set(), set()
        for e, line in m.boundary_vertices.items():
            allv.update(line)
            if e not in m.patch.free_edges:
                req.update(line)
        return sorted(allv), req

    def link(self):
        """Populate the hanging-node table, merge coincident vertices."""
        nm = len(self.meshes)
        boxes = [(m.vertices.min(axis=0) - self.tol_gap, m.vertices.max(axis=0) + self.tol_gap)
                 for m in self.meshes]
        # patch boundaries bulge past the chord polygon of curved meshes
        pad = [0.05 * float(np.linalg.norm(hi - lo)) for lo, hi in boxes]
        segs = [self._boundary_segments(k) for k in range(nm)]
        hosts_of = {}   # (mesh, vertex) -> list of HangingNode
        hanging = []
        findings = []
        for ka in range(nm):
            verts, required = self._required(ka)
            if not verts:
                continue
            verts = np.array(verts, dtype=int)
            pts = self.meshes[ka].vertices[verts]
            for kb in range(nm):
                if kb == ka:
                    continue
                lo, hi = boxes[kb]
                inside = np.all((pts >= lo - pad[kb]) & (pts <= hi + pad[kb]), axis=1)
                if not inside.any():
                    continue
                nodes, amb = self._link_points(ka, verts[inside], pts[inside], kb, segs[kb])
                for hn in nodes:
                    hosts_of.setdefault((ka, hn.foreign_vertex), []).append(hn)
                    hanging.append(hn)
                findings.extend(amb)
        for ka in range(nm):
            verts, required = self._required(ka)
            for v in sorted(required):
                if (ka, v) not in hosts_of:
                    findings.append(LinkFinding("no_partner", ka, v,
                                                tuple(self.meshes[ka].vertices[v]),
                                                "boundary vertex has no neighbour within tol_gap"))
        findings.extend(self._overlap_findings(hosts_of))
        for hn in hanging:
            if hn.snapped:
                cell = self.meshes[hn.host_mesh].cells[hn.host_element]
                self._union(self.global_vertex(hn.foreign_mesh, hn.foreign_vertex),
                            self.global_vertex(hn.host_mesh, int(cell[hn.corner])))
        self.hanging = sorted(hanging, key=lambda h: (h.foreign_mesh, h.foreign_vertex, h.host_mesh))
        self.findings = findings
        self._hosted = {}
        for hn in self.hanging:
            if not hn.snapped:
                g = self.global_element(hn.host_mesh, hn.host_element)
                self._hosted.setdefault(g, []).append(hn)
        return self.hanging

    def _link_points(self, ka, vids, pts, kb, seg):
        mb = self.meshes[kb]
        patch = mb.patch
        sa, sb, owner = seg
        if len(sa) == 0:
            return [], []
        bverts = np.unique(np.concatenate([sa, sb]))
        # seed from the nearest boundary vertex of the neighbour
        d = np.linalg.norm(pts[:, None, :] - mb.vertices[bverts][None, :, :], axis=2)
        seed = mb.params[bverts[np.argmin(d, axis=1)]]
        uv1, q1, d1, _ = closest_point(patch, pts, seed, tol=self.tol_cpp)
        uv2, q2, d2, _ = closest_point(patch, pts, None, tol=self.tol_cpp)
        use2 = d2 < d1
        q = np.where(use2[:, None], q2, q1)
        uv = np.where(use2[:, None], uv2, uv1)
        dist = np.minimum(d1, d2)
        edge_tol = 1e-7
        on_bd = (np.minimum.reduce([uv[:, 0], 1 - uv[:, 0], uv[:, 1], 1 - uv[:, 1]]) < edge_tol)
        nodes, amb = [], []
        A, B = mb.vertices[sa], mb.vertices[sb]
        AB = B - A
        L2 = np.einsum("ij,ij->i", AB, AB)
        for i in np.nonzero((dist <= self.tol_gap) & on_bd)[0]:
            x = q[i]
            found = self._host_on_segments(x, A, AB, L2)
            if found is None:
                continue
            j, t, e, status, detail = found
            if status == "ambiguous":
                amb.append(LinkFinding("ambiguous", ka, int(vids[i]), tuple(pts[i]), detail))
                continue
            elem, ledge = owner[j]
            n = int(mb.shapes[elem])
            ref = reference_vertices(Shape(n))
            # segment runs a -> b; element edge ledge runs corner ledge -> ledge+1
            ca = int(mb.cells[elem][ledge])
            if ca != sa[j]:
                t = 1.0 - t
            corner = -1
            if t <= self.tol_on_edge:
                corner = ledge
            elif t >= 1 - self.tol_on_edge:
                corner = (ledge + 1) % n
            if corner >= 0:
                vid = int(mb.cells[elem][corner])
                elem = int(min(np.nonzero((mb.cells == vid).any(axis=1))[0]))
                corner = int(np.nonzero(mb.cells[elem] == vid)[0][0])
                local = tuple(ref[corner])
                t = 0.0
                ledge = -1
            else:
                local = tuple(ref[ledge] + t * (ref[(ledge + 1) % n] - ref[ledge]))
            nodes.append(HangingNode(kb, int(elem), (float(local[0]), float(local[1])), ka,
                                     int(vids[i]), float(dist[i]), int(ledge), float(t), int(corner)))
        return nodes, amb

    def _host_on_segments(self, x, A, AB, L2):
        """Nearest boundary chord of the host and the foot of x on it."""
        t = np.clip(np.einsum("ij,ij->i", x - A, AB) / L2, 0.0, 1.0)
        foot = A + t[:, None] * AB
        dd = np.linalg.norm(foot - x, axis=1)
        order = np.argsort(dd, kind="stable")
        j = int(order[0])
        e = foot[j]
        if len(order) > 1:
            k = int(order[1])
            tie = abs(dd[k] - dd[j]) <= self.tol_gap
            touching = t[j] in (0.0, 1.0) or t[k] in (0.0, 1.0)
            shared = np.linalg.norm(foot[j] - foot[k]) <= self.tol_gap
            if tie and not (touching and shared):
                return j, float(t[j]), e, "ambiguous", "two host segments equally close"
        return j, float(t[j]), e, "ok", ""

    def _overlap_findings(self, hosts_of):
        out = []
        checked = {}
        for (ka, v), nodes in sorted(hosts_of.items()):
            meshes = sorted({hn.host_mesh for hn in nodes})
            for i, m1 in enumerate(meshes):
                for m2 in meshes[i + 1:]:
                    key = (m1, m2)
                    if key not in checked:
                        checked[key] = self._patches_overlap(m1, m2)
                    if checked[key]:
                        out.append(LinkFinding("ambiguous", ka, v, tuple(self.meshes[ka].vertices[v]),
                                               f"hosts in overlapping meshes {m1} and {m2}"))
        return out

    def _patches_overlap(self, m1, m2):
        p1, p2 = self.meshes[m1].patch, self.meshes[m2].patch
        t = np.array([0.25, 0.5, 0.75])
        U, V = np.meshgrid(t, t)
        x = p1.evaluate(U.ravel(), V.ravel())
        uv, _, d, _ = closest_point(p2, x, None, tol=self.tol_cpp)
        interior = np.minimum.reduce([uv[:, 0], 1 - uv[:, 0], uv[:, 1], 1 - uv[:, 1]]) > 1e-6
        return bool(np.any((d <= 10 * self.tol_gap) & interior))

    def raise_findings(self):
        nop = [f for f in self.findings if f.kind == "no_partner"]
        amb = [f for f in self.findings if f.kind == "ambiguous"]
        if amb:
            raise Ambiguous(f"{len(amb)} ambiguous interface link(s), first at {amb[0].position}", amb)
        if nop:
            raise NoPartner(f"{len(nop)} boundary vertices without partner, first at {nop[0].position}", nop)

    def export_hanging_csv(self, path):
        """Hanging-node table: mesh_a, vertex_id, mesh_b, element_id, r, s, distance."""
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mesh_a", "vertex_id", "mesh_b", "element_id", "r", "s", "distance"])
            for hn in self.hanging:
                w.writerow([repr(x) if isinstance(x, float) else x for x in hn.csv_row()])
        return str(path)

    # -- touching pairs --------------------------------------------------------
    def hosted(self, g: int) -> list:
        """Non-snapped hanging nodes hosted by global element g."""
        return self._hosted.get(int(g), [])

    def touching_pairs(self):
        """Sorted array of element pairs (i <= j) that share a node or a hanging node."""
        by_label = {}
        for g in range(self.n_elements):
            for lab in set(self.labels(g)):
                by_label.setdefault(lab, []).append(g)
        pairs = set()
        for els in by_label.values():
            for i in els:
                for j in els:
                    if i <= j:
                        pairs.add((i, j))
        for g in range(self.n_elements):
            pairs.add((g, g))
            for hn in self.hosted(g):
                lab = self.label(self.global_vertex(hn.foreign_mesh, hn.foreign_vertex))
                for h in by_label.get(lab, []):
                    pairs.add((min(g, h), max(g, h)))
        return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)

    # -- subdivision -----------------------------------------------------------
    def whole_cell(self, g: int) -> SubCell:
        shape = Shape(int(self.shapes[g]))
        return SubCell(int(g), shape, reference_vertices(shape), self.labels(g))

    def _split_points(self, g: int, other_labels):
        pts = []
        own = set(self.labels(g))
        for hn in self.hosted(g):
            lab = self.label(self.global_vertex(hn.foreign_mesh, hn.foreign_vertex))
            if lab in other_labels and lab not in own:
                pts.append((hn.edge, hn.edge_param, lab))
        return sorted(set(pts))

    def split_cell(self, g: int, points) -> list:
        """Split element g at hanging nodes given as (edge, t, label)."""
        whole = self.whole_cell(g)
        if not points:
            return [whole]
        n = len(whole.labels)
        ref = whole.ref
        edges = sorted({p[0] for p in points})
        def edge_points(k):
            return [(t, lab) for e, t, lab in points if e == k]
        if n == 3 and len(edges) == 1:
            k = edges[0]
            a, b, c = k, (k + 1) % 3, (k + 2) % 3
            chain = [(ref[a], whole.labels[a])]
            for t, lab in sorted(edge_points(k)):
                chain.append((ref[a] + t * (ref[b] - ref[a]), lab))
            chain.append((ref[b], whole.labels[b]))
            out = []
            for (p0, l0), (p1, l1) in zip(chain[:-1], chain[1:]):
                out.append(SubCell(g, Shape.TRI, np.array([p0, p1, ref[c]]), (l0, l1, whole.labels[c])))
            return out
        # fan from the centroid through corners and split points
        ring = []
        for k in range(n):
            ring.append((ref[k], whole.labels[k]))
            nxt = ref[(k + 1) % n]
            for t, lab in sorted(edge_points(k)):
                ring.append((ref[k] + t * (nxt - ref[k]), lab))
        centre = ref.mean(axis=0)
        clabel = -1 - int(g)
        return [SubCell(g, Shape.TRI, np.array([p0, p1, centre]), (l0, l1, clabel))
                for (p0, l0), (p1, l1) in zip(ring, ring[1:] + ring[:1])]

    def classify_pair(self, a: int, b: int, check: bool = True) -> PairClassification:
        a, b = int(a), int(b)
        if a > b:
            # classify in one fixed order so (a, b) and (b, a) are exact transposes
            return self.classify_pair(b, a, check).transposed()
        if a == b:
            c = self.whole_cell(a)
            return PairClassification(Case.IDENTICAL, [(c, c, Case.IDENTICAL)])
        la, lb = set(self.labels(a)), set(self.labels(b))
        pa = self._split_points(a, lb)
        pb = self._split_points(b, la)
        cells_a = self.split_cell(a, pa)
        cells_b = self.split_cell(b, pb)
        subs = []
        for x in cells_a:
            for y in cells_b:
                subs.append(_orient(x, y))
        if check:
            self._check_overlap(a, b, subs)
        cases = [c for _, _, c in subs]
        if len(subs) == 1:
            case = cases[0]
        elif Case.COMMON_EDGE in cases:
            case = Case.COMMON_EDGE
        elif Case.COMMON_VERTEX in cases:
            case = Case.COMMON_VERTEX
        else:
            case = Case.REGULAR
        return PairClassification(case, subs)

    def _check_overlap(self, a, b, subs):
        for x, y, case in subs:
            for cell, other, host in ((x, y, a), (y, x, b)):
                own = set(cell.labels)
                for hn in self.hosted(host):
                    lab = self.label(self.global_vertex(hn.foreign_mesh, hn.foreign_vertex))
                    if lab not in set(other.labels) or lab in own:
                        continue
                    if _in_closure(cell, np.array(hn.local_coords), self.tol_on_edge):
                        raise UnresolvedOverlap(
                            f"elements {a} and {b}: node {lab} lies on a sub-cell without splitting it")
            if case in (Case.REGULAR, Case.COMMON_VERTEX):
                self._geometric_overlap(x, y)

    def _geometric_overlap(self, x, y):
        px = self.cell_points(x)
        py = self.cell_points(y)
        shared = set(x.labels) & set(y.labels)
        for pts, lab, other in ((px, x.labels, py), (py, y.labels, px)):
            c = other.mean(axis=0)
            rad = np.linalg.norm(other - c, axis=1).max() + self.tol_gap
            for p, l in zip(pts, lab):
                if l in shared or np.linalg.norm(p - c) > rad:
                    continue
                if _point_polygon_distance(p, other) <= self.tol_gap:
                    raise UnresolvedOverlap("sub-cells touch at a point that is not a shared node")

    def cell_points(self, cell: SubCell) -> np.ndarray:
        return element_map(self.corners(cell.element), cell.ref)

    def cell_area(self, cell: SubCell, n: int = 6) -> float:
        from .quadrature import tensor_rule
        rule = tensor_rule(cell.shape, n)
        o, m = cell.affine()
        ref = o + rule.points @ m.T
        _, xs, xt = element_tangents(self.corners(cell.element), ref)
        jac = np.linalg.norm(np.cross(xs, xt), axis=1)
        return float(rule.weights @ jac) * abs(np.linalg.det(m))

    def element_area(self, g: int) -> float:
        return element_area(self.corners(g))


def _orient(x: SubCell, y: SubCell):
    """Rotate/reflect two cells into canonical position and classify them."""
    shared = set(x.labels) & set(y.labels)
    if x.element == y.element and len(shared) == len(x.labels) == len(y.labels):
        return x, y, Case.IDENTICAL
    if len(shared) == 0:
        return x, y, Case.REGULAR
    nx, ny = len(x.labels), len(y.labels)
    if len(shared) == 1:
        (lab,) = shared
        return x.rotated(x.labels.index(lab)), y.rotated(y.labels.index(lab)), Case.COMMON_VERTEX
    if len(shared) == 2:
        k = next((i for i in range(nx) if {x.labels[i], x.labels[(i + 1) % nx]} == shared), None)
        m = next((i for i in range(ny) if {y.labels[i], y.labels[(i + 1) % ny]} == shared), None)
        if k is None or m is None:
            raise UnresolvedOverlap("two shared nodes that do not form an edge")
        x2 = x.rotated(k)
        if y.labels[m] == x2.labels[0]:
            y2 = y.rotated(m)
        else:
            y2 = y.reversed_from((m + 1) % ny)
        return x2, y2, Case.COMMON_EDGE
    raise UnresolvedOverlap(f"distinct cells share {len(shared)} nodes")


def _in_closure(cell: SubCell, p, tol):
    if cell.shape is Shape.TRI:
        bary = _tri_closure_coords(cell.ref, p)
        return min(bary) >= -tol
    lo, hi = cell.ref.min(axis=0), cell.ref.max(axis=0)
    return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))


def _point_polygon_distance(p, poly):
    """Distance from p to a flat polygon given by corners (fan triangulation)."""
    best = np.inf
    for k in range(1, len(poly) - 1):
        best = min(best, _point_triangle_distance(p, poly[0], poly[k], poly[k + 1]))
    return best


def _point_triangle_distance(p, a, b, c):
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    nn = np.dot(n, n)
    if nn == 0:
        return np.inf
    m = np.column_stack([ab, ac])
    st, *_ = np.linalg.lstsq(m, p - a, rcond=None)
    s, t = st
    if s >= 0 and t >= 0 and s + t <= 1:
        return float(np.linalg.norm(p - (a + s * ab + t * ac)))
    best = np.inf
    for u, w in ((a, b), (b, c), (c, a)):
        d = w - u
        tt = np.clip(np.dot(p - u, d) / np.dot(d, d), 0, 1)
        best = min(best, float(np.linalg.norm(p - (u + tt * d))))
    return best


def element_map(corners, ref):
    """Model-space points of reference points in a flat triangle or bilinear quad."""
    ref = np.atleast_2d(ref)
    s, t = ref[:, :1], ref[:, 1:]
    if len(corners) == 3:
        a, b, c = corners
        return a + s * (b - a) + t * (c - a)
    a, b, c, d = corners
    return (1 - s) * (1 - t) * a + s * (1 - t) * b + s * t * c + (1 - s) * t * d


def element_tangents(corners, ref):
    ref = np.atleast_2d(ref)
    s, t = ref[:, :1], ref[:, 1:]
    if len(corners) == 3:
        a, b, c = corners
        return element_map(corners, ref), np.broadcast_to(b - a, (len(ref), 3)), np.broadcast_to(c - a, (len(ref), 3))
    a, b, c, d = corners
    xs = (1 - t) * (b - a) + t * (c - d)
    xt = (1 - s) * (d - a) + s * (c - b)
    return element_map(corners, ref), xs, xt


def link_interfaces(meshes, tol_gap=None, tol_cpp=None, tol_on_edge=1e-9):
    """Link all mesh boundaries; raises NoPartner / Ambiguous on bad models."""
    lm = LinkedMeshes(meshes, tol_gap, tol_cpp, tol_on_edge)
    lm.raise_findings()
    return lm.hanging


def classify_pair(linked: LinkedMeshes, elem_a: int, elem_b: int) -> PairClassification:
    return linked.classify_pair(elem_a, elem_b)
