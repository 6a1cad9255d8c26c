"""Crossing-case annulus sampler on the conformally equivalent cylinder grid.

The annulus {e^-p < |z| < 1} is represented by an N_theta x N_r cylinder
(periodic angular coordinate, unit cells), with N_r = round(p N_theta / 2pi)
so the grid's modulus is p_eff = 2 pi N_r / N_theta.  The multivalued mean of
winding branch k splits into a single-valued periodic part psi_k plus the
linear ramp (LAMBDA_FIELD / pi) * theta; level lines are traced on the
universal cover and the winding is read off the endpoint fiber.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from .constants import LAMBDA_FIELD
from .errors import NonPositiveModulus, TraceStuck
from .gff import substream, trace_interface
from .lattice import LatticePath


class StripLattice:
    """Cylinder lattice: columns t in [0, n_theta) periodic, rows 0..n_r."""

    def __init__(self, p: float, n_theta: int = 128):
        if p <= 0:
            raise NonPositiveModulus("modulus p must be positive")
        self.n_theta = int(n_theta)
        self.n_r = max(2, round(p * self.n_theta / (2 * math.pi)))
        self.p_eff = 2 * math.pi * self.n_r / self.n_theta
        nt, nr = self.n_theta, self.n_r
        self.n_int = nt * (nr - 1)

        # row-major ordering: idx = (r-1)*nt + t; bandwidth = nt
        bw = nt
        ab = np.zeros((bw + 1, self.n_int))
        ab[bw, :] = 1.0
        idx = np.arange(self.n_int)
        r = idx // nt + 1
        t = idx % nt
        for dt, dr in ((1, 0), (0, 1)):
            t2 = (t + dt) % nt
            r2 = r + dr
            ok = (r2 >= 1) & (r2 <= nr - 1)
            j = (r2[ok] - 1) * nt + t2[ok]
            i = idx[ok]
            lo = np.minimum(i, j)
            hi = np.maximum(i, j)
            keep = hi > lo
            ab[bw + lo[keep] - hi[keep], hi[keep]] += -0.25
        self.bw = bw
        self.factor = cholesky_banded(ab, lower=False)
        self._psi_cache = {}

    # boundary data of the periodic part, field units ------------------------

    def _psi_boundary(self, k: int, t_y: int):
        nt = self.n_theta
        t = np.arange(nt)
        theta = 2 * math.pi * t / nt
        ramp = (LAMBDA_FIELD / math.pi) * theta
        bottom = LAMBDA_FIELD - ramp
        top = np.where(t >= t_y, (1 - 2 * k) * LAMBDA_FIELD, (-1 - 2 * k) * LAMBDA_FIELD) - ramp
        return bottom, top

    def mean_psi(self, k: int, t_y: int) -> np.ndarray:
        key = (k, t_y)
        if key in self._psi_cache:
            return self._psi_cache[key]
        nt, nr = self.n_theta, self.n_r
        bottom, top = self._psi_boundary(k, t_y)
        rhs = np.zeros(self.n_int)
        rhs[:nt] += 0.25 * bottom
        rhs[-nt:] += 0.25 * top
        psi = cho_solve_banded((self.factor, False), rhs)
        self._psi_cache[key] = psi
        return psi

    def sample_fluctuation(self, rng: np.random.Generator) -> np.ndarray:
        return solve_banded((0, self.bw), self.factor, rng.standard_normal(self.n_int))


def t_y_index(strip: StripLattice, alpha: float) -> int:
    return int(round(alpha * strip.n_theta)) % strip.n_theta


def alpha_eff(strip: StripLattice, alpha: float) -> float:
    return t_y_index(strip, alpha) / strip.n_theta


@dataclass
class BranchSample:
    winding: int
    path: LatticePath  # cover coordinates (t, r)


def sample_branch_level_line(strip: StripLattice, k: int, alpha: float,
                             rng: np.random.Generator) -> BranchSample:
    """Level line of the branch-k compactified field, from x up to a lift of y."""
    nt, nr = strip.n_theta, strip.n_r
    t_y = t_y_index(strip, alpha)
    psi = strip.mean_psi(k, t_y) + strip.sample_fluctuation(rng)
    field = psi.reshape(nr - 1, nt)  # [r-1, t]
    ramp_per_cell = 2.0 * LAMBDA_FIELD / nt
    jump_top = t_y + k * nt

    def cell_value(tt, r):
        if r <= 0:
            return LAMBDA_FIELD if tt >= 0 else -LAMBDA_FIELD
        if r >= nr:
            return LAMBDA_FIELD if tt >= jump_top else -LAMBDA_FIELD
        return field[r - 1, tt % nt] + ramp_per_cell * tt

    def is_field(tt, r):
        return 1 <= r <= nr - 1

    corners, (Lf, Rf) = trace_interface(cell_value, is_field, (-1, 0), (0, 0),
                                        max_steps=64 * strip.n_int + 4000)
    t_end = max(Lf[0], Rf[0])
    if Lf[1] < nr and Rf[1] < nr:
        raise TraceStuck("strip level line did not reach the inner circle")
    k_obs = math.floor((t_end - t_y) / nt) if (t_end - t_y) % nt else (t_end - t_y) // nt
    pts = np.array([(c[0] - 0.5, c[1] - 0.5) for c in corners])
    return BranchSample(int(k_obs), LatticePath(pts))


def path_to_annulus(strip: StripLattice, path: LatticePath) -> np.ndarray:
    """Map cover coordinates to the physical annulus (complex points)."""
    t = path.vertices[:, 0]
    r = np.clip(path.vertices[:, 1], 0.0, strip.n_r)
    theta = 2 * math.pi * t / strip.n_theta
    rad = np.exp(-strip.p_eff * r / strip.n_r)
    return rad * np.exp(1j * theta)


def strip_mean_edge_energy(strip: StripLattice, k: int, alpha: float) -> float:
    """Edge-sum Dirichlet energy of the branch-k mean over one fundamental domain."""
    nt, nr = strip.n_theta, strip.n_r
    t_y = t_y_index(strip, alpha)
    psi = strip.mean_psi(k, t_y).reshape(nr - 1, nt)
    bottom, top = strip._psi_boundary(k, t_y)
    full = np.vstack([bottom[None, :], psi, top[None, :]])  # rows 0..nr
    ramp = 2.0 * LAMBDA_FIELD / nt
    # horizontal edges on interior rows (periodic), ramp included
    dh = np.roll(full[1:-1], -1, axis=1) - full[1:-1] + ramp
    # vertical edges between consecutive rows (ramp cancels)
    dv = full[1:] - full[:-1]
    return float((dh ** 2).sum() + (dv ** 2).sum())


def crossing_log_weight_lattice(strip: StripLattice, k: int, alpha: float) -> float:
    """Lattice log Z_k (up to a k-independent constant) from the mean energy."""
    return -strip_mean_edge_energy(strip, k, alpha) / 8.0
