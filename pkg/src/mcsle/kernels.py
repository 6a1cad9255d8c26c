"""Discrete harmonic analysis on lattice domains.

Conventions (fixed package-wide):
  * green_matrix is the expected-visit-count Green's function of simple
    random walk killed on the boundary, G = (I - P)^{-1};
  * poisson_matrix rows are exit distributions (row sums 1);
  * boundary_poisson_matrix is the raw excursion mass
    H(z, w) = sum over walks z -> w through the interior of (1/4)^length,
    i.e. one quarter-step in, harmonic measure out.
All operator identities checked here are exact in these units; residuals
are floating-point noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cholesky_banded, cho_solve_banded, solve_banded

from .errors import ContractionViolated, CrosscutsIntersect, OverlappingTargets, SingularSystem
from .lattice import DIRS, LatticeDomain


@dataclass
class KernelMatrix:
    rows_index: np.ndarray  # (r, 2) site coordinates
    cols_index: np.ndarray
    entries: np.ndarray
    kind: str


@dataclass
class BoundaryTrace:
    sites: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.sites = np.asarray(self.sites)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.sites) != len(self.values):
            raise ValueError("sites/values length mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("boundary values must be finite")


class LatticeSystem:
    """Banded Cholesky factorization of I - P on interior \\ killed.

    blocked_edges (pairs of interior indices) delete the corresponding walk
    transitions: stepping into a blocked edge kills the walk, which is how a
    dual-lattice curve acts as an obstacle for the loop measure.
    """

    def __init__(self, domain: LatticeDomain, killed: Optional[np.ndarray] = None,
                 blocked_edges=None):
        self.domain = domain
        n = domain.n_interior
        alive = np.ones(n, dtype=bool)
        if killed is not None:
            alive[np.asarray(killed, dtype=np.int64)] = False
        self.alive = alive
        self.pos = np.full(n, -1, dtype=np.int64)
        keep = np.nonzero(alive)[0]
        self.pos[keep] = np.arange(len(keep))
        self.keep = keep
        self.n = len(keep)
        if self.n == 0:
            raise SingularSystem("no interior sites remain")

        nbr = domain.nbr_int[keep]  # (n, 4) interior neighbor ids or -1
        pn = np.where(nbr >= 0, self.pos[np.clip(nbr, 0, None)], -1)
        pn[nbr < 0] = -1
        self.nbr_pos = pn
        gaps = pn - np.arange(self.n)[:, None]
        gaps[pn < 0] = 0
        bw = int(max(1, gaps.max()))
        ab = np.zeros((bw + 1, self.n))
        ab[bw, :] = 1.0
        rows = np.repeat(np.arange(self.n), 4)
        cols = pn.ravel()
        ok = (cols >= 0) & (cols > rows)  # upper triangle only
        r, c = rows[ok], cols[ok]
        vals = np.full(len(r), -0.25)
        if blocked_edges:
            blocked = {(min(int(a), int(b)), max(int(a), int(b)))
                       for a, b in blocked_edges}
            orig_r = self.keep[r]
            orig_c = self.keep[c]
            drop = np.array([(min(a, b), max(a, b)) in blocked
                             for a, b in zip(orig_r, orig_c)])
            vals[drop] = 0.0
        ab[bw + r - c, c] = vals
        self.bw = bw
        self.factor = cholesky_banded(ab, lower=False)
        self._logdet_A = 2.0 * float(np.log(self.factor[bw, :]).sum())

    @property
    def logdet_green(self) -> float:
        """log det G = -log det (I - P) on the alive set."""
        return -self._logdet_A

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self.factor, False), rhs)

    def sample(self, xi: np.ndarray) -> np.ndarray:
        """x = U^{-1} xi has covariance (I - P)^{-1} on the alive set."""
        return solve_banded((0, self.bw), self.factor, xi)

    # rhs builders ----------------------------------------------------------

    def rhs_from_boundary(self, bvals: np.ndarray) -> np.ndarray:
        dom = self.domain
        nbrb = dom.nbr_bnd[self.keep]
        vals = np.where(nbrb >= 0, bvals[np.clip(nbrb, 0, None)], 0.0)
        rhs = 0.25 * vals.sum(axis=1)
        if self.n != dom.n_interior:
            # killed sites absorb with value 0 by convention
            pass
        return rhs

    def absorbed_columns(self, col_sites: np.ndarray) -> np.ndarray:
        """u[:, j] = P_.[first absorption happens at col_sites[j]].

        Columns may be boundary sites or killed interior sites; both are
        absorbing for this system.
        """
        dom = self.domain
        m = len(col_sites)
        rhs = np.zeros((self.n, m))
        for j, s in enumerate(np.asarray(col_sites)):
            for d in DIRS:
                t = (int(s[0] + d[0]), int(s[1] + d[1]))
                vi = dom.interior_index(t)
                if vi >= 0 and self.alive[vi]:
                    rhs[self.pos[vi], j] += 0.25
        return self.solve(rhs)


def system(domain: LatticeDomain, killed=None) -> LatticeSystem:
    if killed is None:
        if "system" not in domain._cache:
            domain._cache["system"] = LatticeSystem(domain)
        return domain._cache["system"]
    killed = np.asarray(killed, dtype=np.int64)
    return LatticeSystem(domain, killed)


# -- spec operations ----------------------------------------------------------


def solve_dirichlet(domain: LatticeDomain, trace: BoundaryTrace) -> np.ndarray:
    """Discrete harmonic extension of boundary data to the interior."""
    bvals = np.zeros(domain.n_boundary)
    for s, v in zip(np.asarray(trace.sites), trace.values):
        b = domain.boundary_index(s)
        if b < 0:
            raise ValueError(f"{tuple(s)} is not a boundary site")
        bvals[b] = v
    sys = system(domain)
    return sys.solve(sys.rhs_from_boundary(bvals))


def solve_dirichlet_values(domain: LatticeDomain, bvals: np.ndarray) -> np.ndarray:
    sys = system(domain)
    return sys.solve(sys.rhs_from_boundary(np.asarray(bvals, dtype=float)))


def green_matrix(domain: LatticeDomain, A_sites, B_sites) -> KernelMatrix:
    A_sites = np.asarray(A_sites, dtype=np.int64).reshape(-1, 2)
    B_sites = np.asarray(B_sites, dtype=np.int64).reshape(-1, 2)
    sys = system(domain)
    ia = domain.interior_indices(A_sites)
    ib = domain.interior_indices(B_sites)
    if np.any(ia < 0) or np.any(ib < 0):
        raise ValueError("green_matrix sites must be interior")
    rhs = np.zeros((sys.n, len(ib)))
    rhs[sys.pos[ib], np.arange(len(ib))] = 1.0
    cols = sys.solve(rhs)
    return KernelMatrix(A_sites, B_sites, cols[sys.pos[ia], :], "green")


def poisson_matrix(domain: LatticeDomain, interior_rows=None, boundary_cols=None) -> KernelMatrix:
    """Harmonic measure rows: entry (v, z) = P_v[exit at z]."""
    sys = system(domain)
    if boundary_cols is None:
        boundary_cols = np.arange(domain.n_boundary)
    boundary_cols = np.asarray(boundary_cols, dtype=np.int64)
    col_sites = domain.bnd_sites[boundary_cols]
    U = sys.absorbed_columns(col_sites)
    if interior_rows is None:
        rows_sites = domain.int_sites
        rows = U
    else:
        rows_sites = np.asarray(interior_rows, dtype=np.int64).reshape(-1, 2)
        ir = domain.interior_indices(rows_sites)
        if np.any(ir < 0):
            raise ValueError("poisson rows must be interior sites")
        rows = U[sys.pos[ir], :]
    return KernelMatrix(rows_sites, col_sites, rows, "poisson")


def _excursion_rows(domain, sys, U, row_sites):
    """(1/4) * sum over alive interior neighbors of each row site."""
    out = np.zeros((len(row_sites), U.shape[1]))
    for k, s in enumerate(np.asarray(row_sites)):
        for d in DIRS:
            t = (int(s[0] + d[0]), int(s[1] + d[1]))
            vi = domain.interior_index(t)
            if vi >= 0 and sys.alive[vi]:
                out[k] += 0.25 * U[sys.pos[vi]]
    return out


def boundary_poisson_matrix(domain: LatticeDomain, rows=None, cols=None) -> KernelMatrix:
    """Raw excursion kernel between boundary sites (symmetric)."""
    if rows is None:
        rows = np.arange(domain.n_boundary)
    if cols is None:
        cols = np.arange(domain.n_boundary)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    sys = system(domain)
    col_sites = domain.bnd_sites[cols]
    row_sites = domain.bnd_sites[rows]
    U = sys.absorbed_columns(col_sites)
    H = _excursion_rows(domain, sys, U, row_sites)
    return KernelMatrix(row_sites, col_sites, H, "boundary_poisson")


def hitting_matrix(domain: LatticeDomain, killed_idx, row_sites, col_sites) -> KernelMatrix:
    """P_x[first hit of killed ∪ boundary lands at col] for interior rows x."""
    sys = LatticeSystem(domain, killed_idx)
    row_sites = np.asarray(row_sites, dtype=np.int64).reshape(-1, 2)
    ir = domain.interior_indices(row_sites)
    if np.any(ir < 0) or not np.all(sys.alive[ir]):
        raise ValueError("hitting rows must be alive interior sites")
    U = sys.absorbed_columns(np.asarray(col_sites, dtype=np.int64).reshape(-1, 2))
    return KernelMatrix(row_sites, np.asarray(col_sites), U[sys.pos[ir], :], "poisson")


def excursion_matrix(domain: LatticeDomain, killed_idx, row_sites, col_sites) -> KernelMatrix:
    """Excursion kernel of the carved domain between absorbing sites."""
    sys = LatticeSystem(domain, killed_idx)
    U = sys.absorbed_columns(np.asarray(col_sites, dtype=np.int64).reshape(-1, 2))
    H = _excursion_rows(domain, sys, U, np.asarray(row_sites).reshape(-1, 2))
    return KernelMatrix(np.asarray(row_sites), np.asarray(col_sites), H, "boundary_poisson")


def green_submatrix(domain: LatticeDomain, killed_idx, A_sites, B_sites) -> np.ndarray:
    sys = LatticeSystem(domain, killed_idx)
    ia = domain.interior_indices(np.asarray(A_sites, dtype=np.int64).reshape(-1, 2))
    ib = domain.interior_indices(np.asarray(B_sites, dtype=np.int64).reshape(-1, 2))
    rhs = np.zeros((sys.n, len(ib)))
    rhs[sys.pos[ib], np.arange(len(ib))] = 1.0
    return sys.solve(rhs)[sys.pos[ia], :]


# -- crosscut validation and operator identities -------------------------------


def _check_crosscuts(domain, B1, B2, min_sep=2):
    B1 = [tuple(int(v) for v in s) for s in B1]
    B2 = [tuple(int(v) for v in s) for s in B2]
    if set(B1) & set(B2):
        raise CrosscutsIntersect("crosscuts share sites")
    a = np.asarray(B1, dtype=np.int64)
    b = np.asarray(B2, dtype=np.int64)
    if len(a) and len(b):
        d = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2).min()
        if d < min_sep:
            raise CrosscutsIntersect(f"crosscuts closer than {min_sep} cells")
    return a, b


def crosscut_operators(domain: LatticeDomain, B1, B2):
    """All operator blocks entering the Lemma-style identities, on B1 x B1."""
    a, b = _check_crosscuts(domain, B1, B2)
    i1 = domain.interior_indices(a)
    i2 = domain.interior_indices(b)
    if np.any(i1 < 0) or np.any(i2 < 0):
        raise ValueError("crosscuts must consist of interior sites")

    G_D = green_matrix(domain, a, a).entries
    G_D_sub = green_submatrix(domain, i2, a, a)  # G_{D \ B2} on B1 x B1
    H_from_B1 = hitting_matrix(domain, i2, a, b).entries      # B1 -> B2 in D \ B2
    H_from_B2 = hitting_matrix(domain, i1, b, a).entries      # B2 -> B1 in D \ B1
    exc_B1 = excursion_matrix(domain, i1, a, a).entries       # H_{∂(D\B1)} on B1 x B1
    exc_B12 = excursion_matrix(domain, np.concatenate([i1, i2]), a, a).entries
    return {
        "G_D": G_D,
        "G_D_minus_B2": G_D_sub,
        "H_DminusB2": H_from_B1,
        "H_DminusB1": H_from_B2,
        "exc_diff": exc_B1 - exc_B12,
        "i1": i1,
        "i2": i2,
    }


def verify_loop_identities(domain: LatticeDomain, B1, B2) -> dict:
    """Max-abs residuals of the Green/Poisson/no-assumption decompositions."""
    if len(B2) == 0:
        G_D = green_matrix(domain, np.asarray(B1), np.asarray(B1)).entries
        z = float(np.abs(G_D - G_D).max())
        return {"decompgreen": z, "decomppoisson": z, "decompnoassump": z}
    ops = crosscut_operators(domain, B1, B2)
    lhs_g = ops["G_D"] - ops["G_D_minus_B2"]
    hh = ops["H_DminusB2"] @ ops["H_DminusB1"]
    r1 = np.abs(lhs_g - hh @ ops["G_D"]).max()
    r2 = np.abs(hh - ops["G_D_minus_B2"] @ ops["exc_diff"]).max()
    r3 = np.abs(lhs_g - ops["G_D_minus_B2"] @ ops["exc_diff"] @ ops["G_D"]).max()
    return {
        "decompgreen": float(r1),
        "decomppoisson": float(r2),
        "decompnoassump": float(r3),
    }


# -- loop masses ---------------------------------------------------------------


def logdet_green(domain: LatticeDomain, killed=None, blocked_edges=None) -> float:
    if (killed is None or len(killed) == 0) and not blocked_edges:
        return system(domain).logdet_green
    killed = None if killed is None else np.asarray(killed, dtype=np.int64)
    return LatticeSystem(domain, killed, blocked_edges=blocked_edges).logdet_green


def loop_mass_hitting_both(domain: LatticeDomain, K1_idx, K2_idx) -> tuple:
    """m_D(K1, K2) by inclusion-exclusion over log-determinants."""
    K1_idx = np.asarray(K1_idx, dtype=np.int64)
    K2_idx = np.asarray(K2_idx, dtype=np.int64)
    if len(np.intersect1d(K1_idx, K2_idx)):
        raise OverlappingTargets("K1 and K2 share sites")
    ld_D = logdet_green(domain)
    if len(K2_idx) == 0 or len(K1_idx) == 0:
        return 0.0, (ld_D, ld_D, ld_D, ld_D)
    ld_1 = logdet_green(domain, K1_idx)
    ld_2 = logdet_green(domain, K2_idx)
    ld_12 = logdet_green(domain, np.concatenate([K1_idx, K2_idx]))
    m = ld_D - ld_1 - ld_2 + ld_12
    return float(m), (float(ld_D), float(ld_1), float(ld_2), float(ld_12))


# -- Gaussian quadratic-form expectation ---------------------------------------


def gaussian_quadratic_expectation(Q, M, m, n_samples, seed=0):
    """Monte Carlo and closed form for E[exp(<Mh,h>/2 + <m,h>)], h ~ N(0, Q).

    Closed form: det(1 - Q^{1/2} M Q^{1/2})^{-1/2}
                 * exp(||(1 - Q^{1/2} M Q^{1/2})^{-1/2} Q^{1/2} m||^2 / 2).
    """
    Q = np.asarray(Q, dtype=float)
    M = np.asarray(M, dtype=float)
    m = np.asarray(m, dtype=float).reshape(-1)
    d = Q.shape[0]
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    if np.any(w <= 0):
        raise ValueError("Q must be symmetric positive definite")
    Qh = (V * np.sqrt(w)) @ V.T
    B = Qh @ (0.5 * (M + M.T)) @ Qh
    ew, EV = np.linalg.eigh(B)
    if ew.max() >= 1.0 - 1e-6:
        raise ContractionViolated(f"spectral radius {ew.max():.6f} of Q^1/2 M Q^1/2")
    core = EV @ np.diag(1.0 / (1.0 - ew)) @ EV.T
    v = Qh @ m
    closed = float(np.prod(1.0 / np.sqrt(1.0 - ew)) * np.exp(0.5 * v @ core @ v))

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6A75]))
    total = 0.0
    chunk = 200_000
    left = int(n_samples)
    Msym = 0.5 * (M + M.T)
    while left > 0:
        k = min(chunk, left)
        Z = rng.standard_normal((k, d))
        H = Z @ Qh  # rows ~ N(0, Q)
        expo = 0.5 * np.einsum("ij,jk,ik->i", H, Msym, H) + H @ m
        total += float(np.exp(expo).sum())
        left -= k
    return total / float(n_samples), closed
