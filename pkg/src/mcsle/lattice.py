"""Square-lattice discretizations of circle domains of the unit disk.

Sites live on the integer grid; site (i, j) sits at physical point
(i*mesh_h, j*mesh_h).  Interior sites are grid points strictly inside the
outer disk and strictly outside every hole; boundary sites are the
non-interior 4-neighbors of interior sites.  Boundary components are the
8-connected pieces of the boundary-site set, labeled Outer / Inner(j).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DisconnectsDomain,
    MarksCoincide,
    MeshTooCoarse,
    NotACrosscut,
    TouchesMarks,
)

# neighbor order: E, N, W, S
DIRS = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=np.int64)

PROTECTIVE_RADIUS = 3  # cells kept clear around the marked points


@dataclass
class LatticePath:
    """A nearest-neighbor curve; vertices may be dual (half-integer) points."""

    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (L, 2) array")

    def __len__(self):
        return len(self.vertices)

    def steps_are_adjacent(self) -> bool:
        d = np.abs(np.diff(self.vertices, axis=0))
        return bool(np.all(d.sum(axis=1) == 1))

    def is_simple(self) -> bool:
        """No repeated vertex (closed paths may repeat the first at the end)."""
        v = self.vertices
        if self.closed and len(v) > 1 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        seen = {tuple(p) for p in v}
        return len(seen) == len(v)


@dataclass(frozen=True)
class TopologySignature:
    """Topological class of a crosscut: hole sides, or annulus winding."""

    mode: str  # "noncrossing" | "crossing"
    signs: Optional[tuple] = None
    winding_k: Optional[int] = None

    def __post_init__(self):
        if self.mode == "noncrossing":
            if self.signs is None or self.winding_k is not None:
                raise ValueError("noncrossing signature carries signs only")
            object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
            if any(s not in (-1, 1) for s in self.signs):
                raise ValueError("signs must be ±1")
        elif self.mode == "crossing":
            if self.winding_k is None or self.signs is not None:
                raise ValueError("crossing signature carries winding_k only")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class BoundaryComponent:
    label: str  # "outer" or "inner"
    hole_index: Optional[int]
    bidx: np.ndarray  # boundary-site indices, cyclically ordered by angle
    center: np.ndarray  # grid-unit coordinates


class LatticeDomain:
    """Immutable-by-convention lattice domain; safe to share across workers."""

    def __init__(self, mesh_h, interior_mask, origin, spec=None, parent=None,
                 removed=None, marks_site=None, mode="noncrossing",
                 hole_centers=None, outer_radius=None):
        self.mesh_h = float(mesh_h)
        self.origin = np.asarray(origin, dtype=np.int64)  # grid index 0 = this site
        self.interior_mask = np.asarray(interior_mask, dtype=bool)
        self.spec = spec
        self.parent = parent
        self.removed = None if removed is None else np.asarray(removed, dtype=np.int64)
        self.mode = mode
        self.hole_centers = [] if hole_centers is None else [np.asarray(c, float) for c in hole_centers]
        self.outer_radius = outer_radius
        self._marks_site = marks_site  # ((ix, jx), (iy, jy)) or None
        self._cache = {}
        self._build()

    # -- construction ------------------------------------------------------

    def _build(self):
        mask = self.interior_mask
        if not mask.any():
            raise MeshTooCoarse("empty interior")
        ii, jj = np.nonzero(mask)
        order = np.lexsort((jj, ii))
        self.int_sites = np.stack([ii[order], jj[order]], axis=1) + self.origin
        self.n_interior = len(self.int_sites)

        pad_shape = (mask.shape[0] + 4, mask.shape[1] + 4)
        self._grid_off = self.origin - 2  # grid arrays are padded by 2 cells
        idx_grid = np.full(pad_shape, -1, dtype=np.int64)
        g = self.int_sites - self._grid_off
        idx_grid[g[:, 0], g[:, 1]] = np.arange(self.n_interior)
        self.idx_grid = idx_grid

        # boundary = non-interior 4-neighbors of interior
        bmask = np.zeros(pad_shape, dtype=bool)
        for d in DIRS:
            nb = g + d
            free = idx_grid[nb[:, 0], nb[:, 1]] < 0
            bmask[nb[free, 0], nb[free, 1]] = True
        bi, bj = np.nonzero(bmask)
        border = np.lexsort((bj, bi))
        self.bnd_sites = np.stack([bi[border], bj[border]], axis=1) + self._grid_off
        self.n_boundary = len(self.bnd_sites)
        bidx_grid = np.full(pad_shape, -1, dtype=np.int64)
        gb = self.bnd_sites - self._grid_off
        bidx_grid[gb[:, 0], gb[:, 1]] = np.arange(self.n_boundary)
        self.bidx_grid = bidx_grid

        # neighbor tables for interior sites
        self.nbr_int = np.full((self.n_interior, 4), -1, dtype=np.int64)
        self.nbr_bnd = np.full((self.n_interior, 4), -1, dtype=np.int64)
        for k, d in enumerate(DIRS):
            nb = g + d
            self.nbr_int[:, k] = idx_grid[nb[:, 0], nb[:, 1]]
            self.nbr_bnd[:, k] = bidx_grid[nb[:, 0], nb[:, 1]]

        if not self._interior_connected():
            raise DisconnectsDomain("interior is not 4-connected")

        self._label_components()
        if self._marks_site is not None:
            self._place_marks(*self._marks_site)

    def _interior_connected(self) -> bool:
        n = self.n_interior
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            v = stack.pop()
            for w in self.nbr_int[v]:
                if w >= 0 and not seen[w]:
                    seen[w] = True
                    count += 1
                    stack.append(w)
        return count == n

    def _label_components(self):
        # 4-connected components of the complement; the one reaching the pad
        # border is the outside, every other one is a hole
        from scipy import ndimage

        comp_mask = self.idx_grid < 0
        labels_grid, ncomp = ndimage.label(comp_mask, structure=np.array(
            [[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
        outer_label = labels_grid[0, 0]
        gb = self.bnd_sites - self._grid_off
        labels = labels_grid[gb[:, 0], gb[:, 1]]
        self._bnd_labels = labels

        comps = []
        for c in range(1, ncomp + 1):
            bidx = np.nonzero(labels == c)[0]
            if len(bidx) == 0:
                continue
            pts = self.bnd_sites[bidx].astype(float)
            center = pts.mean(axis=0)
            ang = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
            bidx = bidx[np.argsort(ang, kind="stable")]
            kind = "outer" if c == outer_label else "inner"
            comps.append(BoundaryComponent(kind, None, bidx, center))
        # order: outer first, then inner matched to hole centers when known
        outer = [c for c in comps if c.label == "outer"]
        inner = [c for c in comps if c.label == "inner"]
        if self.hole_centers:
            hc = np.array([c / self.mesh_h for c in self.hole_centers])

            def nearest_hole(comp_):
                d = np.linalg.norm(hc - comp_.center, axis=1)
                return int(np.argmin(d))

            for c in inner:
                c.hole_index = nearest_hole(c)
            inner.sort(key=lambda c: c.hole_index)
        else:
            for k, c in enumerate(inner):
                c.hole_index = k
        self.components = outer + inner
        self.outer_component = outer[0]
        self.inner_components = inner
        self.n_holes = len(inner)

    def _place_marks(self, sx, sy):
        bx = self.bidx_grid[sx[0] - self._grid_off[0], sx[1] - self._grid_off[1]]
        by = self.bidx_grid[sy[0] - self._grid_off[0], sy[1] - self._grid_off[1]]
        if bx < 0 or by < 0:
            raise NotACrosscut("marked site is not a boundary site of this domain")
        if bx == by:
            raise MarksCoincide("marked points coincide")
        self.mark_x = int(bx)
        self.mark_y = int(by)
        # split the marked outer component into ccw arcs (xy) and (yx)
        cyc = list(self.outer_component.bidx)
        try:
            px = cyc.index(bx)
        except ValueError:
            raise NotACrosscut("x does not lie on the outer component")
        cyc = cyc[px:] + cyc[:px]
        if self.mode == "noncrossing":
            py = cyc.index(by)
            self.arc_xy = np.array(cyc[:py], dtype=np.int64)  # contains x
            self.arc_yx = np.array(cyc[py:], dtype=np.int64)  # contains y
        else:
            inner0 = self.inner_components[0]
            if by not in set(inner0.bidx.tolist()):
                raise NotACrosscut("crossing mode requires y on Inner(0)")
            self.arc_xy = np.array(cyc, dtype=np.int64)
            self.arc_yx = np.array([], dtype=np.int64)

    # -- helpers -----------------------------------------------------------

    def _grid_lookup(self, grid, site) -> int:
        a = site[0] - self._grid_off[0]
        b = site[1] - self._grid_off[1]
        if a < 0 or b < 0 or a >= grid.shape[0] or b >= grid.shape[1]:
            return -1
        return int(grid[a, b])

    def interior_index(self, site) -> int:
        return self._grid_lookup(self.idx_grid, site)

    def boundary_index(self, site) -> int:
        return self._grid_lookup(self.bidx_grid, site)

    def interior_indices(self, sites) -> np.ndarray:
        s = np.asarray(sites, dtype=np.int64) - self._grid_off
        inside = (s[:, 0] >= 0) & (s[:, 1] >= 0) & \
            (s[:, 0] < self.idx_grid.shape[0]) & (s[:, 1] < self.idx_grid.shape[1])
        out = np.full(len(s), -1, dtype=np.int64)
        out[inside] = self.idx_grid[s[inside, 0], s[inside, 1]]
        return out

    @property
    def mark_x_site(self):
        return self.bnd_sites[self.mark_x]

    @property
    def mark_y_site(self):
        return self.bnd_sites[self.mark_y]

    def signature_groups(self, signature: TopologySignature, drop_marks: bool = False):
        """Boundary-index arrays (minus, plus) for a noncrossing signature.

        With drop_marks the two jump sites are excluded from their arcs; the
        energy computations use this convention so that weights respect the
        lattice symmetries exactly.
        """
        if signature.mode != "noncrossing" or len(signature.signs) != self.n_holes:
            raise ValueError("signature does not match domain")
        arc_yx, arc_xy = self.arc_yx, self.arc_xy
        if drop_marks:
            arc_yx = arc_yx[arc_yx != self.mark_y]
            arc_xy = arc_xy[arc_xy != self.mark_x]
        minus = [arc_yx]
        plus = [arc_xy]
        for comp, s in zip(self.inner_components, signature.signs):
            (minus if s < 0 else plus).append(comp.bidx)
        return np.concatenate(minus), np.concatenate(plus)

    def mask_text(self) -> str:
        """Portable grid text: '#' interior, 'o' boundary, '.' outside."""
        lo = self.int_sites.min(axis=0) - 1
        hi = self.int_sites.max(axis=0) + 1
        rows = []
        for j in range(hi[1], lo[1] - 1, -1):
            row = []
            for i in range(lo[0], hi[0] + 1):
                if self.idx_grid[i - self._grid_off[0], j - self._grid_off[1]] >= 0:
                    row.append("#")
                elif self.bidx_grid[i - self._grid_off[0], j - self._grid_off[1]] >= 0:
                    row.append("o")
                else:
                    row.append(".")
            rows.append("".join(row))
        return "\n".join(rows)


# -- factories ---------------------------------------------------------------


def build_circle_domain(outer_radius, holes, mesh_h, marks, mode="noncrossing"):
    """Discretize the circle domain D = {|z| < R} minus round holes.

    holes: sequence of ((cx, cy), r).  marks: (angle_x, angle_y); x goes on
    the outer circle, y on the outer circle (non-crossing) or on holes[0]
    (crossing).
    """
    holes = [((float(c[0]), float(c[1])), float(r)) for c, r in holes]
    h = float(mesh_h)
    R = float(outer_radius)
    if mode not in ("noncrossing", "crossing"):
        raise ValueError("mode must be 'noncrossing' or 'crossing'")
    if mode == "crossing" and not holes:
        raise ValueError("crossing mode needs holes[0] to carry y")
    for k, (c, r) in enumerate(holes):
        if math.hypot(*c) + r >= R:
            raise ValueError(f"hole {k} is not strictly inside the outer disk")
        if (R - math.hypot(*c) - r) / h < 3:
            raise MeshTooCoarse(f"gap between hole {k} and the outer circle < 3 cells")
        for k2 in range(k + 1, len(holes)):
            c2, r2 = holes[k2]
            gap = math.hypot(c[0] - c2[0], c[1] - c2[1]) - r - r2
            if gap <= 0:
                raise ValueError(f"holes {k} and {k2} overlap")
            if gap / h < 3:
                raise MeshTooCoarse(f"gap between holes {k} and {k2} < 3 cells")

    n = int(math.floor(R / h)) + 2
    axis = np.arange(-n, n + 1)
    X, Y = np.meshgrid(axis * h, axis * h, indexing="ij")
    mask = X ** 2 + Y ** 2 < R ** 2
    for (cx, cy), r in holes:
        excluded = (X - cx) ** 2 + (Y - cy) ** 2 <= r ** 2
        if excluded.sum() < 4:
            raise MeshTooCoarse("hole excludes fewer than 4 sites")
        mask &= ~excluded

    origin = np.array([-n, -n], dtype=np.int64)
    spec = {
        "outer_radius": R,
        "holes": [{"center": list(c), "radius": r} for c, r in holes],
        "mesh_h": h,
        "marks": {"angle_x": float(marks[0]), "angle_y": float(marks[1])},
        "mode": mode,
    }
    dom = LatticeDomain(h, mask, origin, spec=spec, mode=mode,
                        hole_centers=[np.array(c) / 1.0 for c, _ in holes],
                        outer_radius=R)
    if mode == "crossing" and dom.n_holes < 1:
        raise MeshTooCoarse("hole carrying y vanished at this mesh")

    sx = _nearest_on_component(dom, dom.outer_component, marks[0])
    if mode == "noncrossing":
        sy = _nearest_on_component(dom, dom.outer_component, marks[1])
    else:
        sy = _nearest_on_component(dom, dom.inner_components[0], marks[1])
    if np.array_equal(sx, sy):
        raise MarksCoincide("marks land on the same lattice site")
    dom._marks_site = (tuple(sx), tuple(sy))
    dom._place_marks(tuple(sx), tuple(sy))
    return dom


def _nearest_on_component(dom, comp, angle):
    pts = dom.bnd_sites[comp.bidx].astype(float)
    ctr = comp.center
    ang = np.arctan2(pts[:, 1] - ctr[1], pts[:, 0] - ctr[0])
    d = np.angle(np.exp(1j * (ang - angle)))
    return dom.bnd_sites[comp.bidx[int(np.argmin(np.abs(d)))]]


def carve(domain: LatticeDomain, removed: Iterable) -> LatticeDomain:
    """Remove interior sites, producing a test domain with a parent link."""
    removed = [tuple(int(v) for v in s) for s in removed]
    if not removed:
        sub = LatticeDomain(domain.mesh_h, domain.interior_mask.copy(), domain.origin,
                            spec=domain.spec, parent=domain, removed=[],
                            marks_site=domain._marks_site, mode=domain.mode,
                            hole_centers=domain.hole_centers,
                            outer_radius=domain.outer_radius)
        return sub
    rem = np.array(sorted(set(removed)), dtype=np.int64)
    idx = domain.interior_indices(rem)
    if np.any(idx < 0):
        raise ValueError("carve set must consist of interior sites")
    for name, m in (("x", domain.mark_x_site), ("y", domain.mark_y_site)):
        d = np.abs(rem - m).max(axis=1).min()
        if d <= PROTECTIVE_RADIUS:
            raise TouchesMarks(f"carved set within {PROTECTIVE_RADIUS} cells of {name}")
    mask = domain.interior_mask.copy()
    g = rem - domain.origin
    mask[g[:, 0], g[:, 1]] = False
    try:
        sub = LatticeDomain(domain.mesh_h, mask, domain.origin, spec=domain.spec,
                            parent=domain, removed=rem,
                            marks_site=domain._marks_site, mode=domain.mode,
                            hole_centers=domain.hole_centers,
                            outer_radius=domain.outer_radius)
    except DisconnectsDomain:
        raise DisconnectsDomain("carving disconnects the interior")
    return sub


def new_boundary_indices(sub: LatticeDomain) -> np.ndarray:
    """Boundary indices of `sub` that were not boundary sites of its parent."""
    parent = sub.parent
    if parent is None:
        return np.array([], dtype=np.int64)
    old = {tuple(s) for s in parent.bnd_sites}
    fresh = [k for k, s in enumerate(sub.bnd_sites) if tuple(s) not in old]
    return np.array(fresh, dtype=np.int64)


def map_boundary_indices(src: LatticeDomain, dst: LatticeDomain, bidx) -> np.ndarray:
    """Translate boundary indices between domains sharing the same grid."""
    sites = src.bnd_sites[np.asarray(bidx, dtype=np.int64)]
    out = np.array([dst.boundary_index(s) for s in sites], dtype=np.int64)
    if np.any(out < 0):
        raise ValueError("site is not a boundary site of the target domain")
    return out


# -- topology ----------------------------------------------------------------


def winding_angle(points: np.ndarray, center) -> float:
    """Total swept angle (radians) of a polyline around `center`."""
    rel = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    d = np.diff(ang)
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return float(d.sum())


def _closure_points(domain: LatticeDomain) -> np.ndarray:
    """The (yx) return arc, y -> x, as site coordinates."""
    pts = domain.bnd_sites[domain.arc_yx].astype(float)
    return np.vstack([pts, domain.bnd_sites[domain.mark_x].astype(float)])


def classify_topology(domain: LatticeDomain, path: LatticePath) -> TopologySignature:
    """Signature of a crosscut from x to y (hole sides, or annulus winding)."""
    v = path.vertices
    if len(v) < 2:
        raise NotACrosscut("path too short")
    xs = domain.mark_x_site.astype(float)
    ys = domain.mark_y_site.astype(float)
    if np.abs(v[0] - xs).max() > 1.5 or np.abs(v[-1] - ys).max() > 1.5:
        raise NotACrosscut("path endpoints are not at the marked points")

    if domain.mode == "crossing":
        ctr = domain.inner_components[0].center
        theta = winding_angle(np.vstack([xs[None, :], v, ys[None, :]]), ctr)
        ax = math.atan2(xs[1] - ctr[1], xs[0] - ctr[0])
        ay = math.atan2(ys[1] - ctr[1], ys[0] - ctr[0])
        alpha = ((ay - ax) / (2 * math.pi)) % 1.0
        k = round(theta / (2 * math.pi) - alpha)
        return TopologySignature(mode="crossing", winding_k=int(k))

    closed = np.vstack([xs[None, :], v, ys[None, :], _closure_points(domain)])
    signs = []
    for comp in domain.inner_components:
        w = winding_angle(closed, comp.center) / (2 * math.pi)
        wi = round(w)
        if abs(w - wi) > 0.25 or wi not in (-1, 0, 1):
            raise NotACrosscut(f"ill-defined winding {w:.3f} around hole {comp.hole_index}")
        signs.append(-1 if wi != 0 else 1)
    return TopologySignature(mode="noncrossing", signs=tuple(signs))


# -- crosscuts ---------------------------------------------------------------


def segment_sites(domain: LatticeDomain, p0, p1) -> list:
    """4-connected rasterized segment between grid points, interior sites only."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    n = int(np.abs(p1 - p0).sum() * 2) + 2
    out = []
    cur = None
    for t in np.linspace(0.0, 1.0, n):
        p = np.round(p0 + t * (p1 - p0)).astype(np.int64)
        tp = (int(p[0]), int(p[1]))
        if cur is None:
            out.append(tp)
            cur = tp
            continue
        if tp == cur:
            continue
        # insert an elbow when the rounded step is diagonal
        if abs(tp[0] - cur[0]) + abs(tp[1] - cur[1]) == 2:
            out.append((tp[0], cur[1]))
        out.append(tp)
        cur = tp
    return [s for s in out if domain.interior_index(s) >= 0]


def radial_crosscut(domain: LatticeDomain, angle: float, length=None) -> list:
    """Interior sites along a ray from the outer boundary toward the center."""
    r_out = float(np.linalg.norm(domain.bnd_sites[domain.outer_component.bidx], axis=1).max())
    p_far = np.array([math.cos(angle), math.sin(angle)]) * (r_out + 1)
    p_near = np.zeros(2) if length is None else p_far * (1.0 - length)
    sites = segment_sites(domain, p_far, p_near)
    if not sites:
        raise NotACrosscut("ray misses the interior")
    return sites


# -- JSON spec ---------------------------------------------------------------


def domain_from_spec(spec: dict) -> LatticeDomain:
    marks = spec["marks"]
    return build_circle_domain(
        spec["outer_radius"],
        [((h["center"][0], h["center"][1]), h["radius"]) for h in spec.get("holes", [])],
        spec["mesh_h"],
        (marks["angle_x"], marks["angle_y"]),
        mode=spec.get("mode", "noncrossing"),
    )


def load_domain(path) -> LatticeDomain:
    with open(path) as f:
        return domain_from_spec(json.load(f))
