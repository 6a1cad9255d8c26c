"""Dirichlet-energy differences, signature weights, and the annulus winding law.

The regularized energies themselves are never formed; only differences of
unnormalized edge-sum Dirichlet energies sum_edges (du)^2 are used.  These
are exactly computable two independent ways:

  * flux form:     2 * sum over minus-arc sites of the graph-Laplacian flux
                   difference of the +-1-valued harmonic extensions;
  * kernel form:   4 * (1, (Hc_D - Hc_D') 1) over the minus arcs, where
                   Hc = 4 * (raw excursion kernel) is the arc-calibrated
                   boundary Poisson kernel.

Both give the same number to machine precision on every valid domain pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .constants import h_kappa
from .errors import (
    DisconnectsDomain,
    IncompatibleReference,
    NonPositiveModulus,
    ObstacleTouchesMinusArcs,
    TouchesMarks,
)
from .lattice import (
    DIRS,
    LatticeDomain,
    TopologySignature,
    carve,
    map_boundary_indices,
    new_boundary_indices,
    segment_sites,
)

ARC_KERNEL_FACTOR = 4.0  # raw excursion mass -> arc-calibrated boundary kernel


@dataclass
class SignatureWeight:
    signature: TopologySignature
    log_weight: float
    energy_diff: float
    reference_H: float


@dataclass
class WindingLaw:
    p: float
    alpha: float
    probs: dict
    truncation_k: int


# -- edge energies and fluxes --------------------------------------------------


def full_values(domain: LatticeDomain, bvals: np.ndarray) -> tuple:
    """(interior values, boundary values) of the harmonic extension."""
    u = kernels.solve_dirichlet_values(domain, bvals)
    return u, np.asarray(bvals, dtype=float)


def edge_dirichlet_energy(domain: LatticeDomain, bvals: np.ndarray) -> float:
    """Unnormalized sum over lattice edges of the squared gradient."""
    u, g = full_values(domain, bvals)
    nbr_i = domain.nbr_int
    nbr_b = domain.nbr_bnd
    vals_i = np.where(nbr_i >= 0, u[np.clip(nbr_i, 0, None)], 0.0)
    vals_b = np.where(nbr_b >= 0, g[np.clip(nbr_b, 0, None)], 0.0)
    w_i = np.where(nbr_i >= 0, 0.5, 0.0)  # interior-interior edges counted twice
    w_b = np.where(nbr_b >= 0, 1.0, 0.0)
    du_i = (u[:, None] - vals_i) ** 2 * w_i
    du_b = (u[:, None] - vals_b) ** 2 * w_b
    return float(du_i.sum() + du_b.sum())


def boundary_graph_flux(domain: LatticeDomain, bvals: np.ndarray, bidx: np.ndarray) -> np.ndarray:
    """Inward graph-Laplacian flux sum_{w ~ z interior} (u(w) - u(z)) per site."""
    u, g = full_values(domain, bvals)
    out = np.zeros(len(bidx))
    for k, b in enumerate(np.asarray(bidx, dtype=np.int64)):
        s = domain.bnd_sites[b]
        acc = 0.0
        for d in DIRS:
            vi = domain.interior_index((int(s[0] + d[0]), int(s[1] + d[1])))
            if vi >= 0:
                acc += u[vi] - g[b]
        out[k] = acc
    return out


def _pm_boundary_values(domain: LatticeDomain, minus_bidx: np.ndarray) -> np.ndarray:
    g = np.ones(domain.n_boundary)
    g[np.asarray(minus_bidx, dtype=np.int64)] = -1.0
    return g


def _check_obstacle_clearance(carved: LatticeDomain, minus_sites: np.ndarray, min_sep=2):
    if carved.removed is None or len(carved.removed) == 0:
        return
    d = np.abs(carved.removed[:, None, :] - minus_sites[None, :, :]).max(axis=2).min()
    if d < min_sep:
        raise ObstacleTouchesMinusArcs(
            f"carved set within {d} < {min_sep} cells of the arcs")


def energy_difference(domain: LatticeDomain, carved: LatticeDomain,
                      minus_bidx: np.ndarray) -> float:
    """||u_{D'}||^2 - ||u_D||^2 in edge-sum units, via the boundary kernels."""
    minus_bidx = np.asarray(minus_bidx, dtype=np.int64)
    minus_sites = domain.bnd_sites[minus_bidx]
    _check_obstacle_clearance(carved, minus_sites)
    H = kernels.boundary_poisson_matrix(domain, minus_bidx, minus_bidx).entries
    sub_bidx = map_boundary_indices(domain, carved, minus_bidx)
    Hc = kernels.boundary_poisson_matrix(carved, sub_bidx, sub_bidx).entries
    return float(4.0 * ARC_KERNEL_FACTOR * (H - Hc).sum())


def energy_difference_flux(domain: LatticeDomain, carved: LatticeDomain,
                           minus_bidx: np.ndarray) -> float:
    """Same quantity through the normal-derivative (graph flux) route."""
    minus_bidx = np.asarray(minus_bidx, dtype=np.int64)
    minus_sites = domain.bnd_sites[minus_bidx]
    _check_obstacle_clearance(carved, minus_sites)
    g_D = _pm_boundary_values(domain, minus_bidx)
    sub_minus = map_boundary_indices(domain, carved, minus_bidx)
    g_sub = _pm_boundary_values(carved, sub_minus)
    f_D = boundary_graph_flux(domain, g_D, minus_bidx)
    f_sub = boundary_graph_flux(carved, g_sub, sub_minus)
    return float(2.0 * (f_sub - f_D).sum())


# -- signature weights ---------------------------------------------------------


@dataclass
class ReferenceChain:
    """Nested carvings D = D_0 ⊃ D_1 ⊃ ... ⊃ D_m = D'' with per-stage arcs."""

    stages: list  # (before, after, arcs_bidx_in_before)
    final: LatticeDomain

    def total_energy_difference(self) -> float:
        return sum(energy_difference(b, a, arcs) for b, a, arcs in self.stages)


def _slit_sites(domain: LatticeDomain, hole_index: int, azimuth: float) -> list:
    comp = domain.inner_components[hole_index]
    ctr = comp.center
    r_out = float(np.linalg.norm(
        domain.bnd_sites[domain.outer_component.bidx], axis=1).max()) + 1.0
    far = ctr + np.array([math.cos(azimuth), math.sin(azimuth)]) * 2.0 * r_out
    sites = segment_sites(domain, ctr, far)
    if not sites:
        raise IncompatibleReference("slit misses the interior")
    return sites


def _arc_mid_angle(domain: LatticeDomain, bidx: np.ndarray, ctr) -> float:
    pts = domain.bnd_sites[np.asarray(bidx, dtype=np.int64)].astype(float)
    mid = pts[len(pts) // 2]
    return math.atan2(mid[1] - ctr[1], mid[0] - ctr[0])


def _candidate_azimuths(domain: LatticeDomain, j: int, arc_bidx: np.ndarray) -> list:
    """Directions from hole j toward points of its arc, clearing other holes
    and the protective neighborhoods of the marks."""
    comp = domain.inner_components[j]
    ctr = comp.center
    pts = domain.bnd_sites[np.asarray(arc_bidx, dtype=np.int64)].astype(float)
    marks = [domain.mark_x_site.astype(float), domain.mark_y_site.astype(float)]
    others = [(c.center, np.linalg.norm(
        domain.bnd_sites[c.bidx].astype(float) - c.center, axis=1).max())
        for k, c in enumerate(domain.inner_components) if k != j]
    out = []
    for frac in (0.5, 0.375, 0.625, 0.25, 0.75, 0.125, 0.875):
        target = pts[int(frac * (len(pts) - 1))]
        d = target - ctr
        L = np.linalg.norm(d)
        if L == 0:
            continue
        u = d / L

        def seg_dist(q):
            t = np.clip(np.dot(np.asarray(q) - ctr, u), 0, L)
            return np.linalg.norm(ctr + t * u - np.asarray(q))

        if any(seg_dist(c) <= r + 2.5 for c, r in others):
            continue
        if any(seg_dist(m) <= 5.0 for m in marks):
            continue
        out.append(math.atan2(d[1], d[0]))
    if not out:
        raise IncompatibleReference(f"no clear slit direction for hole {j}")
    return out


def reference_chain(domain: LatticeDomain, signature: TopologySignature,
                    azimuths: Optional[dict] = None) -> ReferenceChain:
    """Carve one radial slit per hole toward the arc its sign assigns.

    Plus-side slits first (energy stages integrate over the untouched minus
    group), then minus-side slits (stages integrate over the grown plus
    group).  Every stage is an exact discrete energy difference.
    """
    azimuths = azimuths or {}
    minus_bidx, plus_bidx = domain.signature_groups(signature, drop_marks=True)
    minus_sites = [tuple(s) for s in domain.bnd_sites[minus_bidx]]
    plus_sites = [tuple(s) for s in domain.bnd_sites[plus_bidx]]

    plus_holes = [j for j, s in enumerate(signature.signs) if s > 0]
    minus_holes = [j for j, s in enumerate(signature.signs) if s < 0]

    stages = []
    cur = domain
    done = set()
    for side, holes, opposite in (("plus", plus_holes, "minus"),
                                  ("minus", minus_holes, "plus")):
        side_set = set(holes)
        for j in holes:
            if j in done:
                continue
            arc = domain.arc_xy if side == "plus" else domain.arc_yx
            if j in azimuths:
                candidates = [azimuths[j]]
            else:
                candidates = _candidate_azimuths(domain, j, arc)
            nxt = None
            for az in candidates:
                try:
                    slit = _slit_sites(cur, _hole_pos(cur, j), az)
                    nxt = carve(cur, slit)
                    break
                except (TouchesMarks, DisconnectsDomain):
                    continue
            if nxt is None:
                raise IncompatibleReference(f"no admissible slit for hole {j}")
            # sites swallowed by an earlier slit's landing zone stopped being
            # boundary sites; they carry no excursion mass in either domain
            arcs_sites = minus_sites if opposite == "minus" else plus_sites
            arcs_bidx = np.array([b for b in (cur.boundary_index(s) for s in arcs_sites)
                                  if b >= 0], dtype=np.int64)
            if len(arcs_bidx) == 0:
                raise IncompatibleReference("stage arcs vanished")
            stages.append((cur, nxt, arcs_bidx))
            walls = [tuple(s) for s in nxt.bnd_sites[new_boundary_indices(nxt)]]
            if side == "plus":
                plus_sites = plus_sites + walls
            else:
                minus_sites = minus_sites + walls
            # a slit may absorb a further hole it passes through; that is
            # only compatible when the absorbed hole carries the same sign
            survivors = {c.hole_index for c in nxt.inner_components}
            absorbed = {c.hole_index for c in cur.inner_components} - survivors
            if not absorbed.issubset(side_set):
                raise IncompatibleReference(
                    f"slit for hole {j} absorbed holes {sorted(absorbed)} of the other side")
            done |= absorbed
            cur = nxt
    if cur.n_holes != 0:
        raise IncompatibleReference("reference is not simply connected")
    return ReferenceChain(stages, cur)


def _hole_pos(domain: LatticeDomain, original_index: int) -> int:
    for k, comp in enumerate(domain.inner_components):
        if comp.hole_index == original_index:
            return k
    raise IncompatibleReference(f"hole {original_index} already absorbed")


def point_boundary_kernel(domain: LatticeDomain) -> float:
    """Raw excursion kernel H_∂D(x, y) at the marked pair."""
    H = kernels.boundary_poisson_matrix(
        domain, np.array([domain.mark_x]), np.array([domain.mark_y]))
    return float(H.entries[0, 0])


def z_weight_noncrossing(domain: LatticeDomain, signature: TopologySignature,
                         kappa: float, reference: Optional[ReferenceChain] = None
                         ) -> SignatureWeight:
    """log Z_{D,b} = h log H_{∂D''}(x,y) + (pi h / 4) (||u_{D''}||^2 - ||u_b||^2)."""
    h = h_kappa(kappa)
    if domain.n_holes != len(signature.signs):
        raise IncompatibleReference("signature length != number of holes")
    if domain.n_holes == 0:
        Hxy = point_boundary_kernel(domain)
        return SignatureWeight(signature, h * math.log(Hxy), 0.0, Hxy)
    chain = reference if reference is not None else reference_chain(domain, signature)
    delta = chain.total_energy_difference()
    Hxy = point_boundary_kernel(chain.final)
    log_w = h * math.log(Hxy) + (math.pi * h / 4.0) * delta
    return SignatureWeight(signature, log_w, delta, Hxy)


# -- annulus winding law ---------------------------------------------------------


def theta3_imag(a: float, b: float, tol: float = 1e-16) -> float:
    """Jacobi theta_3(i*a | i*b) = sum_k exp(-pi k^2 b - 2 pi k a), b > 0."""
    if b <= 0:
        raise ValueError("theta3 needs Im(tau) > 0")
    total = 1.0
    k = 1
    while True:
        term = math.exp(-math.pi * k * k * b - 2 * math.pi * k * a) \
            + math.exp(-math.pi * k * k * b + 2 * math.pi * k * a)
        total += term
        if term < tol * total and k > 2:
            return total
        k += 1
        if k > 10_000:
            raise RuntimeError("theta series did not converge")


def crossing_weight_annulus(p: float, alpha: float, k: int) -> float:
    """Unnormalized winding-class weight exp(-pi^2 (k+alpha)^2 / (2p))."""
    if p <= 0:
        raise NonPositiveModulus("modulus p must be positive")
    return math.exp(-math.pi ** 2 * (k + alpha) ** 2 / (2.0 * p))


def winding_distribution(p: float, alpha: float, k_max: Optional[int] = None) -> WindingLaw:
    """Normalized winding law of the crossing annulus curve."""
    if p <= 0:
        raise NonPositiveModulus("modulus p must be positive")
    if not (0.0 <= alpha < 1.0):
        raise ValueError("alpha must lie in [0, 1)")
    if k_max is None:
        # grow until the dropped Gaussian tail is below 1e-12 of the sum
        k_max = 1
        while True:
            tail = crossing_weight_annulus(p, alpha, k_max + 1) \
                + crossing_weight_annulus(p, alpha, -(k_max + 1))
            body = sum(crossing_weight_annulus(p, alpha, k)
                       for k in range(-k_max, k_max + 1))
            if tail < 1e-13 * body:
                break
            k_max += 1
    ks = range(-k_max, k_max + 1)
    w = {k: crossing_weight_annulus(p, alpha, k) for k in ks}
    Z = sum(w.values())
    return WindingLaw(p, alpha, {k: w[k] / Z for k in ks}, k_max)


def winding_normalizer(p: float, alpha: float) -> float:
    """The theta normalizer e^{-pi^2 a^2/(2p)} * theta3(i pi a/(2p) | i pi/(2p))."""
    return math.exp(-math.pi ** 2 * alpha ** 2 / (2 * p)) * \
        theta3_imag(math.pi * alpha / (2 * p), math.pi / (2 * p))
