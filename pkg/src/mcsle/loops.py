"""Random-walk loop measure, loop soup, boundary-excursion ensembles, hulls.

All masses are in the raw walk units of the kernels module, where
m_D(K1, K2) = log det inclusion-exclusion is exactly minus the log of the
Fredholm determinant of the alternating crosscut operator.  The excursion
Poisson process uses the arc-calibrated kernel (4 x raw), matching the
energy-difference units so that the no-exit law is exact in law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from . import kernels
from .constants import central_charge, h_kappa
from .energy import ARC_KERNEL_FACTOR
from .errors import FillSwallowsTarget, OperatorNotContraction, TraceStuck
from .gff import _left_site, _right_site, substream, trace_interface
from .lattice import (
    DIRS,
    LatticeDomain,
    LatticePath,
    TopologySignature,
    classify_topology,
)


@dataclass
class LoopMassReport:
    m_hit_both: float
    per_subdomain_logdets: tuple
    det_identity_residual: Optional[float] = None


@dataclass
class ExcursionEnsemble:
    excursions: list
    endpoint_pairs: list
    intensity_constant: float
    seed: int
    mean_count: float


@dataclass
class HullSample:
    filled_sites: set
    right_boundary: LatticePath
    filled_interior: Optional[np.ndarray] = None  # bool over interior indices
    swallow_flag: bool = False


# -- loop masses ---------------------------------------------------------------


def loop_mass(domain: LatticeDomain, K1_sites, K2_sites) -> LoopMassReport:
    """Mass of unrooted walk loops hitting both site sets."""
    k1 = domain.interior_indices(np.asarray(K1_sites, dtype=np.int64).reshape(-1, 2)) \
        if len(K1_sites) else np.array([], dtype=np.int64)
    k2 = domain.interior_indices(np.asarray(K2_sites, dtype=np.int64).reshape(-1, 2)) \
        if len(K2_sites) else np.array([], dtype=np.int64)
    if np.any(k1 < 0) or np.any(k2 < 0):
        raise ValueError("loop_mass targets must be interior sites")
    m, lds = kernels.loop_mass_hitting_both(domain, k1, k2)
    return LoopMassReport(m, lds)


def path_blocked_edges(domain: LatticeDomain, path: LatticePath) -> list:
    """Interior-interior primal edges crossed by a dual-lattice path."""
    corners = np.round(path.vertices + 0.5).astype(np.int64)
    dmap = {(1, 0): 0, (0, 1): 1, (-1, 0): 2, (0, -1): 3}
    out = []
    for c, c2 in zip(corners[:-1], corners[1:]):
        d = dmap.get((int(c2[0] - c[0]), int(c2[1] - c[1])))
        if d is None:
            raise ValueError("path is not a dual-lattice nearest-neighbor curve")
        L = _left_site(tuple(c), d)
        R = _right_site(tuple(c), d)
        i, j = domain.interior_index(L), domain.interior_index(R)
        if i >= 0 and j >= 0:
            out.append((i, j))
    return out


def curve_loop_mass(domain: LatticeDomain, path: LatticePath, K_sites) -> float:
    """m_D(eta, K): loops crossing the dual curve and hitting the site set K."""
    edges = path_blocked_edges(domain, path)
    kidx = domain.interior_indices(np.asarray(K_sites, dtype=np.int64).reshape(-1, 2))
    if np.any(kidx < 0):
        raise ValueError("K must consist of interior sites")
    ld = kernels.logdet_green(domain)
    ld_eta = kernels.logdet_green(domain, blocked_edges=edges)
    ld_K = kernels.logdet_green(domain, killed=kidx)
    ld_both = kernels.logdet_green(domain, killed=kidx, blocked_edges=edges)
    return float(ld - ld_eta - ld_K + ld_both)


def fredholm_identity_check(domain: LatticeDomain, B1, B2,
                            form: str = "product") -> LoopMassReport:
    """|log det(I - A) + m_D(B1,B2)| for the crosscut operator A.

    form="product" uses the hitting-kernel product H H; form="composite"
    uses the Green x excursion-difference factorization (valid for rough B2).
    """
    ops = kernels.crosscut_operators(domain, B1, B2)
    if form == "product":
        A = ops["H_DminusB2"] @ ops["H_DminusB1"]
    elif form == "composite":
        A = ops["G_D_minus_B2"] @ ops["exc_diff"]
    else:
        raise ValueError("form must be 'product' or 'composite'")
    ev = np.linalg.eigvals(A)
    if ev.real.max() >= 1.0:
        raise OperatorNotContraction(f"leading eigenvalue {ev.real.max():.6f}")
    sign, logdet = np.linalg.slogdet(np.eye(len(A)) - A)
    m, lds = kernels.loop_mass_hitting_both(domain, ops["i1"], ops["i2"])
    return LoopMassReport(m, lds, det_identity_residual=float(abs(logdet + m)))


# -- excursion Poisson point process -------------------------------------------


def _ppp_tables(domain: LatticeDomain, arcs_key, arcs_bidx):
    key = ("ppp", arcs_key)
    if key in domain._cache:
        return domain._cache[key]
    Hc = ARC_KERNEL_FACTOR * kernels.boundary_poisson_matrix(
        domain, arcs_bidx, arcs_bidx).entries
    U = kernels.poisson_matrix(domain, boundary_cols=arcs_bidx).entries
    tables = {"Hc": Hc, "U": U}
    domain._cache[key] = tables
    return tables


def _sample_excursion_paths(domain, U, arcs_bidx, pair_idx, rng):
    """Batched h-transform walks from arc site z to absorption at arc site w."""
    sys = kernels.system(domain)
    m = len(arcs_bidx)
    zi = pair_idx // m
    wi = pair_idx % m
    B = len(pair_idx)
    paths = [[tuple(domain.bnd_sites[arcs_bidx[z]])] for z in zi]
    # first step: interior neighbors of z weighted by U[a, w]
    pos = np.full(B, -1, dtype=np.int64)
    for b in range(B):
        z_site = domain.bnd_sites[arcs_bidx[zi[b]]]
        cand, wts = [], []
        for d in DIRS:
            a = domain.interior_index((int(z_site[0] + d[0]), int(z_site[1] + d[1])))
            if a >= 0:
                cand.append(a)
                wts.append(U[a, wi[b]])
        wts = np.asarray(wts)
        c = int(rng.choice(len(cand), p=wts / wts.sum()))
        pos[b] = cand[c]
        paths[b].append(tuple(domain.int_sites[cand[c]]))
    active = np.ones(B, dtype=bool)
    target_b = arcs_bidx[wi]
    nbr_int_l = domain.nbr_int
    nbr_bnd_l = domain.nbr_bnd
    while active.sum() > 8:
        act = np.nonzero(active)[0]
        cur = pos[act]
        ni = nbr_int_l[cur]            # (B', 4)
        nb = nbr_bnd_l[cur]
        W = np.where(ni >= 0, U[np.clip(ni, 0, None), wi[act][:, None]], 0.0)
        W = np.where(nb == target_b[act][:, None], 1.0, W)
        cdf = np.cumsum(W, axis=1)
        u = rng.random(len(act)) * cdf[:, -1]
        choice = (u[:, None] > cdf).sum(axis=1)
        step_int = ni[np.arange(len(act)), choice]
        step_bnd = nb[np.arange(len(act)), choice]
        for r, g in enumerate(act):
            if step_int[r] >= 0:
                pos[g] = step_int[r]
                paths[g].append(tuple(domain.int_sites[step_int[r]]))
            else:
                paths[g].append(tuple(domain.bnd_sites[step_bnd[r]]))
                active[g] = False
    # finish stragglers one by one without array overhead
    for g in np.nonzero(active)[0]:
        cur = int(pos[g])
        w = int(wi[g])
        tb = int(target_b[g])
        Ucol = U[:, w]
        while True:
            acc = []
            tot = 0.0
            for s in range(4):
                vi = nbr_int_l[cur, s]
                if vi >= 0:
                    tot += Ucol[vi]
                elif nbr_bnd_l[cur, s] == tb:
                    tot += 1.0
                acc.append(tot)
            u = rng.random() * tot
            for s in range(4):
                if u <= acc[s]:
                    break
            vi = nbr_int_l[cur, s]
            if vi >= 0:
                cur = int(vi)
                paths[g].append(tuple(domain.int_sites[vi]))
            else:
                paths[g].append(tuple(domain.bnd_sites[nbr_bnd_l[cur, s]]))
                break
    return [LatticePath(np.array(p, dtype=float)) for p in paths]


def excursion_intensity(domain: LatticeDomain, arcs_bidx, kappa: float) -> float:
    arcs_bidx = np.asarray(arcs_bidx, dtype=np.int64)
    tables = _ppp_tables(domain, tuple(arcs_bidx.tolist()), arcs_bidx)
    return h_kappa(kappa) * math.pi * float(tables["Hc"].sum())


def sample_excursion_ppp(domain: LatticeDomain, arcs_bidx, kappa: float, seed,
                         rng: Optional[np.random.Generator] = None) -> ExcursionEnsemble:
    """PPP of boundary excursions with intensity h*pi times the arc mass."""
    arcs_bidx = np.asarray(arcs_bidx, dtype=np.int64)
    if len(arcs_bidx) == 0:
        raise ValueError("excursion arcs must be nonempty")
    h = h_kappa(kappa)
    tables = _ppp_tables(domain, tuple(arcs_bidx.tolist()), arcs_bidx)
    Hc, U = tables["Hc"], tables["U"]
    mu = h * math.pi * float(Hc.sum())
    if rng is None:
        rng = substream(seed, 0)
    count = int(rng.poisson(mu))
    if count == 0:
        return ExcursionEnsemble([], [], h, seed, mu)
    flat = (Hc / Hc.sum()).ravel()
    pair_idx = rng.choice(len(flat), size=count, p=flat)
    paths = _sample_excursion_paths(domain, U, arcs_bidx, pair_idx, rng)
    m = len(arcs_bidx)
    pairs = [(int(arcs_bidx[k // m]), int(arcs_bidx[k % m])) for k in pair_idx]
    return ExcursionEnsemble(paths, pairs, h, seed, mu)


# -- hull filling ----------------------------------------------------------------


def _hull_seed_tables(domain):
    if "hull_seeds" in domain._cache:
        return domain._cache["hull_seeds"]
    seeds = []  # interior neighbors of plus-arc sites
    for b in domain.arc_xy:
        s = domain.bnd_sites[b]
        for d in DIRS:
            vi = domain.interior_index((int(s[0] + d[0]), int(s[1] + d[1])))
            if vi >= 0:
                seeds.append(vi)
    xs, ys = domain.mark_x_site, domain.mark_y_site
    checks = []  # (arc site, interior neighbor indices) away from the marks
    for b in domain.arc_xy:
        s = domain.bnd_sites[b]
        if max(abs(int(s[0]) - xs[0]), abs(int(s[1]) - xs[1])) <= 3:
            continue
        if max(abs(int(s[0]) - ys[0]), abs(int(s[1]) - ys[1])) <= 3:
            continue
        nbrs = [domain.interior_index((int(s[0] + d[0]), int(s[1] + d[1])))
                for d in DIRS]
        nbrs = [v for v in nbrs if v >= 0]
        if nbrs:
            checks.append((tuple(s), nbrs))
    tables = (np.array(sorted(set(seeds)), dtype=np.int64), checks)
    domain._cache["hull_seeds"] = tables
    return tables


def fill_hull(domain: LatticeDomain, signature: TopologySignature,
              generator_sites=None, gen_interior=None, gen_boundary=None,
              check_swallow: bool = True) -> HullSample:
    """Filling of the generators relative to the arc (xy): everything the
    plus arc cannot reach through ungenerated interior is filled."""
    from .gff import static_sign_grid

    gen_int = np.zeros(domain.n_interior, dtype=bool)
    gset = set()
    if gen_interior is not None:
        gen_int |= gen_interior
    if gen_boundary is not None:
        gset |= {(int(s[0]), int(s[1])) for s in gen_boundary}
    for s in (generator_sites or ()):
        t = (int(s[0]), int(s[1]))
        vi = domain.interior_index(t)
        if vi >= 0:
            gen_int[vi] = True
        else:
            gset.add(t)

    # flood the complement from the plus-arc side
    from scipy import ndimage

    seeds_idx, checks = _hull_seed_tables(domain)
    free = np.zeros(domain.idx_grid.shape, dtype=bool)
    gi = domain.int_sites - domain._grid_off
    free[gi[:, 0], gi[:, 1]] = ~gen_int
    lab, _ = ndimage.label(free, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    lab_int = lab[gi[:, 0], gi[:, 1]]
    seed_labels = np.unique(lab_int[seeds_idx])
    seed_labels = seed_labels[seed_labels > 0]
    seen = np.isin(lab_int, seed_labels) if len(seed_labels) else \
        np.zeros(domain.n_interior, dtype=bool)
    filled = ~seen
    filled_sites = {tuple(s) for s in domain.int_sites[filled]} | gset

    # touching the plus arc away from the marks is reported, not fatal: the
    # right boundary still reaches y by hugging the arc at the pinch, and
    # discarding such samples was measured to bias the curve law
    swallow = False
    if check_swallow:
        for site, nbrs in checks:
            if all(filled[v] for v in nbrs):
                swallow = True
                break

    # right boundary: interface with the filled side negative
    sgrid = static_sign_grid(domain, signature).astype(float)
    grid = sgrid.copy()
    gi = domain.int_sites - domain._grid_off
    grid[gi[:, 0], gi[:, 1]] = np.where(filled, -1.0, 1.0)
    off = domain._grid_off
    idxg = domain.idx_grid

    def cell_value(a, b):
        return grid[a - off[0], b - off[1]]

    def is_field(a, b):
        return idxg[a - off[0], b - off[1]] >= 0

    xs = domain.mark_x_site
    ys = domain.mark_y_site
    last_err = None
    for k in range(4):
        n = (int(xs[0] + DIRS[k][0]), int(xs[1] + DIRS[k][1]))
        if is_field(*n) and not filled[domain.interior_index(n)]:
            continue
        if cell_value(*n) >= 0:
            continue
        try:
            corners, (Lf, Rf) = trace_interface(cell_value, is_field, n, tuple(xs),
                                                max_steps=32 * domain.n_interior + 1000)
        except TraceStuck as e:
            last_err = e
            continue
        endd = min(max(abs(Lf[0] - ys[0]), abs(Lf[1] - ys[1])),
                   max(abs(Rf[0] - ys[0]), abs(Rf[1] - ys[1])))
        if endd <= 1:
            pts = np.array([(c[0] - 0.5, c[1] - 0.5) for c in corners])
            return HullSample(filled_sites, LatticePath(pts), filled_interior=filled,
                              swallow_flag=swallow)
        last_err = TraceStuck(f"hull boundary ended {endd} cells from y")
    # a failed trace means the hull degenerated against the target arc
    raise FillSwallowsTarget(str(last_err or "no hull boundary germ at x"))


# -- loop soup -------------------------------------------------------------------


class SoupTables:
    """Per-vertex data of the ordered loop-measure decomposition.

    Vertices are eliminated in reverse lexicographic order; the banded
    Cholesky factor of the reversed Laplacian yields every nested-domain
    diagonal Green value, and the h-transform columns are back-solves on
    leading blocks.
    """

    MAX_SITES = 6000

    def __init__(self, domain: LatticeDomain):
        n = domain.n_interior
        if n > self.MAX_SITES:
            raise ValueError(f"loop soup capped at {self.MAX_SITES} interior sites")
        self.domain = domain
        from scipy.linalg import cholesky_banded

        # position p holds vertex n-1-p
        pos_of = np.arange(n)[::-1].copy()
        self.vertex_at = pos_of  # vertex index at position p
        self.pos_of_vertex = np.empty(n, dtype=np.int64)
        self.pos_of_vertex[pos_of] = np.arange(n)
        nbr = domain.nbr_int
        pn = np.where(nbr >= 0, self.pos_of_vertex[np.clip(nbr, 0, None)], -1)
        pn[nbr < 0] = -1
        pn = pn[self.vertex_at]  # row p: neighbor positions of vertex at p
        gaps = np.abs(np.where(pn >= 0, pn - np.arange(n)[:, None], 0))
        bw = int(max(1, gaps.max()))
        ab = np.zeros((bw + 1, n))
        ab[bw, :] = 1.0
        rows = np.repeat(np.arange(n), 4)
        cols = pn.ravel()
        ok = (cols >= 0) & (cols > rows)
        ab[bw + rows[ok] - cols[ok], cols[ok]] = -0.25
        self.bw = bw
        self.R = cholesky_banded(ab, lower=False)
        diag = self.R[bw, :]
        # vertex i sits at position n-1-i, last variable of its block
        self.G_ii = 1.0 / diag[self.pos_of_vertex] ** 2
        self.vertex_mass = np.log(self.G_ii)  # loops with minimum vertex i
        self.return_prob = 1.0 - 1.0 / self.G_ii
        self._hcols = {}

    def hcol(self, i: int) -> np.ndarray:
        """P_u[hit v_i before leaving {v_i, ..}] for all u, as a full array."""
        if i in self._hcols:
            return self._hcols[i]
        n = len(self.G_ii)
        p = self.pos_of_vertex[i]
        m = p + 1
        y = np.zeros(m)
        y[p] = 1.0 / self.R[self.bw, p]
        x = solve_banded((0, self.bw), self.R[:, :m], y)
        col = np.zeros(n)
        col[self.vertex_at[:m]] = x / x[p]
        self._hcols[i] = col
        return col


def soup_tables(domain: LatticeDomain) -> SoupTables:
    if "soup" not in domain._cache:
        domain._cache["soup"] = SoupTables(domain)
    return domain._cache["soup"]


def _sample_excursion_count(rng, r: float, total: float) -> int:
    """K with P(K=k) proportional to r^k / k (k >= 1)."""
    u = rng.random() * total
    k, term, acc = 1, r, r
    while acc < u:
        k += 1
        term *= r
        acc += term / k
    return k


def sample_loop_soup(domain: LatticeDomain, intensity: float, seed,
                     rng: Optional[np.random.Generator] = None) -> list:
    """Poisson(intensity * loop measure) sample; loops as closed site paths."""
    if not (0.0 < intensity <= 1.0):
        raise ValueError("intensity must lie in (0, 1]")
    tab = soup_tables(domain)
    if rng is None:
        rng = substream(seed, 0)
    counts = rng.poisson(intensity * tab.vertex_mass)
    if "nbr_list" not in domain._cache:
        domain._cache["nbr_list"] = [tuple(int(v) for v in row) for row in domain.nbr_int]
    nbr_list = domain._cache["nbr_list"]
    rnd = rng.random
    loops = []
    for i in np.nonzero(counts)[0]:
        col = tab.hcol(i)
        item = col.item
        r = tab.return_prob[i]
        total = tab.vertex_mass[i]
        for _ in range(int(counts[i])):
            k = _sample_excursion_count(rng, r, total)
            sites = [int(i)]
            for _leg in range(k):
                # one excursion v_i -> v_i staying above the elimination level
                cur = int(i)
                while True:
                    ns = nbr_list[cur]
                    w0 = item(ns[0]) if ns[0] >= 0 else 0.0
                    w1 = w0 + (item(ns[1]) if ns[1] >= 0 else 0.0)
                    w2 = w1 + (item(ns[2]) if ns[2] >= 0 else 0.0)
                    w3 = w2 + (item(ns[3]) if ns[3] >= 0 else 0.0)
                    u = rnd() * w3
                    if u <= w0:
                        cur = ns[0]
                    elif u <= w1:
                        cur = ns[1]
                    elif u <= w2:
                        cur = ns[2]
                    else:
                        cur = ns[3]
                    sites.append(cur)
                    if cur == i:
                        break
            loops.append(sites)
    out = []
    for sites in loops:
        pts = domain.int_sites[np.array(sites, dtype=np.int64)]
        out.append(LatticePath(pts.astype(float), closed=True))
    return out


@dataclass
class LoopCluster:
    site_idx: np.ndarray
    outermost: bool
    outer_boundary: Optional[LatticePath] = None


def cle_clusters(domain: LatticeDomain, loops: list, outlines: bool = False,
                 mark_outermost: bool = True) -> list:
    """Connected components (shared sites) of the loop union."""
    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    loop_sites = []
    for lp in loops:
        idx = domain.interior_indices(lp.vertices.astype(np.int64))
        loop_sites.append(np.unique(idx))
    site_owner = {}
    for k, idx in enumerate(loop_sites):
        if k not in parent:
            parent[k] = k
        for v in idx:
            if v in site_owner:
                union(k, site_owner[v])
            else:
                site_owner[v] = k
    groups = {}
    for k in range(len(loops)):
        groups.setdefault(find(k), []).append(k)
    clusters = []
    for root in sorted(groups):
        idx = np.unique(np.concatenate([loop_sites[k] for k in groups[root]]))
        clusters.append(LoopCluster(idx, True))
    if mark_outermost:
        _mark_outermost(domain, clusters)
    if outlines:
        for c in clusters:
            c.outer_boundary = cluster_outline(domain, c.site_idx)
    return clusters


def _fill_local(domain, site_idx):
    """Filled cell set (sites plus enclosed pockets) of a site cluster."""
    sites = domain.int_sites[site_idx]
    lo = sites.min(axis=0) - 1
    hi = sites.max(axis=0) + 1
    shape = (hi[0] - lo[0] + 1, hi[1] - lo[1] + 1)
    occ = np.zeros(shape, dtype=bool)
    occ[sites[:, 0] - lo[0], sites[:, 1] - lo[1]] = True
    from scipy import ndimage

    outside = np.zeros(shape, dtype=bool)
    free = ~occ
    lab, _ = ndimage.label(free, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    border_labels = set(lab[0, :]) | set(lab[-1, :]) | set(lab[:, 0]) | set(lab[:, -1])
    border_labels.discard(0)
    outside = np.isin(lab, list(border_labels))
    return occ | (~outside & free), lo


def _mark_outermost(domain, clusters):
    fills = [_fill_local(domain, c.site_idx) for c in clusters]
    for a, ca in enumerate(clusters):
        rep = domain.int_sites[ca.site_idx[0]]
        for b, cb in enumerate(clusters):
            if a == b:
                continue
            occ, lo = fills[b]
            u, v = rep[0] - lo[0], rep[1] - lo[1]
            if 0 <= u < occ.shape[0] and 0 <= v < occ.shape[1] and occ[u, v]:
                ca.outermost = False
                break


def cluster_outline(domain: LatticeDomain, site_idx) -> LatticePath:
    """Closed dual path around the filled cluster, filled cells on the left."""
    occ, lo = _fill_local(domain, site_idx)

    def cell_value(a, b):
        u, v = a - lo[0], b - lo[1]
        if 0 <= u < occ.shape[0] and 0 <= v < occ.shape[1] and occ[u, v]:
            return -1.0
        return 1.0

    sites = domain.int_sites[site_idx]
    start = sites[np.lexsort((sites[:, 1], sites[:, 0]))][0]
    L0 = (int(start[0]), int(start[1]))
    R0 = (L0[0] - 1, L0[1])  # west neighbor is outside by minimality
    dmap = {(0, -1): 0, (1, 0): 1, (0, 1): 2, (-1, 0): 3}
    d = dmap[(R0[0] - L0[0], R0[1] - L0[1])]
    from .gff import _CORNER_OFF, _rot

    c = (L0[0] + int(_CORNER_OFF[d][0]), L0[1] + int(_CORNER_OFF[d][1]))
    start_state = (c, d)
    corners = [c]
    for _ in range(8 * len(occ.ravel()) + 16):
        c = (c[0] + int(DIRS[d][0]), c[1] + int(DIRS[d][1]))
        AL = _left_site(c, d)
        AR = _right_site(c, d)
        vL, vR = cell_value(*AL), cell_value(*AR)
        if vL < 0 and vR >= 0:
            pass
        elif vL >= 0 and vR >= 0:
            d = _rot(d, 1)
        elif vL < 0 and vR < 0:
            d = _rot(d, -1)
        else:
            d = _rot(d, 1)  # keep the cluster (left side) 8-connected
        if (c, d) == start_state:
            break
        corners.append(c)
    pts = np.array([(cc[0] - 0.5, cc[1] - 0.5) for cc in corners + [start_state[0]]])
    return LatticePath(pts, closed=True)


# -- kappa-curve construction ------------------------------------------------------


def construct_kappa_curve(domain: LatticeDomain, signature: TopologySignature,
                          kappa: float, seed,
                          rng: Optional[np.random.Generator] = None):
    """Right boundary of (restriction hull) ∪ (CLE clusters it meets).

    Raises FillSwallowsTarget when the hull reaches the plus arc; callers
    resample.  Returns a LevelLineSample-compatible object.
    """
    from .gff import LevelLineSample

    if rng is None:
        rng = substream(seed, 0)
    minus_bidx, _plus = domain.signature_groups(signature)
    minus_sites = domain.bnd_sites[minus_bidx]
    ens = sample_excursion_ppp(domain, minus_bidx, kappa, seed, rng=rng)
    gen_int = np.zeros(domain.n_interior, dtype=bool)
    for p in ens.excursions:
        idx = domain.interior_indices(p.vertices.astype(np.int64))
        gen_int[idx[idx >= 0]] = True
    hull = fill_hull(domain, signature, gen_interior=gen_int,
                     gen_boundary=minus_sites)

    alpha = central_charge(kappa) / 2.0
    loops = sample_loop_soup(domain, alpha, seed, rng=rng) if alpha > 0 else []
    if loops:
        clusters = cle_clusters(domain, loops, mark_outermost=False)
        joined = hull.filled_interior.copy()
        for c in clusters:
            if joined[c.site_idx].any():
                joined[c.site_idx] = True
        hull = fill_hull(domain, signature, gen_interior=joined,
                         gen_boundary=minus_sites)
    sig = classify_topology(domain, hull.right_boundary)
    return LevelLineSample(hull.right_boundary, sig, accepted=(sig == signature))
