"""Discrete Gaussian free fields and their level-line interfaces.

The field is sampled with visit-count Green covariance; the level line is
the dual-lattice interface between negative and nonnegative total field,
with boundary data ±LAMBDA_FIELD assigned per topology signature.  The
tracer resolves checkerboard corners by a left turn (negative diagonals
stay connected), and the interface runs from the sign change at x to the
sign change at y.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from . import kernels
from .constants import LAMBDA_FIELD
from .errors import RejectionBudgetExhausted, TraceStuck
from .lattice import DIRS, LatticeDomain, LatticePath, TopologySignature, classify_topology

# direction index: 0=E, 1=N, 2=W, 3=S
# tail corner offset relative to the left site, per direction
_CORNER_OFF = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.int64)
_LEFT = 2  # turn deltas mod 4
_RIGHT = -1  # unused marker; turns are computed mod 4


@dataclass
class FieldSample:
    domain: LatticeDomain
    signature: TopologySignature
    values: np.ndarray  # total field (mean included) on interior sites
    mean: np.ndarray
    seed: int


@dataclass
class LevelLineSample:
    path: LatticePath
    signature: TopologySignature
    accepted: bool


def substream(seed, *ids) -> np.random.Generator:
    """Counter-based substream; reproducible independent of worker count.

    seed may be an int or a tuple (master, stream, ...); extra ids extend
    the spawn key.
    """
    if isinstance(seed, (tuple, list)):
        entropy, pre = int(seed[0]), tuple(int(v) for v in seed[1:])
    else:
        entropy, pre = int(seed), ()
    key = pre + tuple(int(i) for i in ids)
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=entropy, spawn_key=key)))


def subseed(seed, *ids) -> tuple:
    """Compose a child seed tuple understood by substream."""
    if isinstance(seed, (tuple, list)):
        return tuple(int(v) for v in seed) + tuple(int(i) for i in ids)
    return (int(seed),) + tuple(int(i) for i in ids)


# -- boundary data and sign grids ---------------------------------------------


def boundary_sign_values(domain: LatticeDomain, signature: TopologySignature) -> np.ndarray:
    signs = np.zeros(domain.n_boundary, dtype=np.int8)
    signs[domain.arc_xy] = 1
    signs[domain.arc_yx] = -1
    for comp, s in zip(domain.inner_components, signature.signs):
        signs[comp.bidx] = 1 if s > 0 else -1
    if np.any(signs == 0):
        raise ValueError("boundary component not covered by the signature")
    return signs


def mean_boundary_data(domain: LatticeDomain, signature: TopologySignature) -> np.ndarray:
    return LAMBDA_FIELD * boundary_sign_values(domain, signature).astype(float)


def static_sign_grid(domain: LatticeDomain, signature: TopologySignature) -> np.ndarray:
    """int8 grid: boundary data signs, extended outward by BFS; 0 on interior."""
    key = ("ssg", signature)
    if key in domain._cache:
        return domain._cache[key]
    bsigns = boundary_sign_values(domain, signature)
    grid = np.zeros(domain.idx_grid.shape, dtype=np.int8)
    off = domain._grid_off
    from collections import deque

    queue = deque()
    for b in range(domain.n_boundary):
        s = domain.bnd_sites[b] - off
        grid[s[0], s[1]] = bsigns[b]
        queue.append((int(s[0]), int(s[1])))
    while queue:
        a, b = queue.popleft()
        g = grid[a, b]
        for da, db in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            u, v = a + da, b + db
            if 0 <= u < grid.shape[0] and 0 <= v < grid.shape[1]:
                if grid[u, v] == 0 and domain.idx_grid[u, v] < 0:
                    grid[u, v] = g
                    queue.append((u, v))
    domain._cache[key] = grid
    return grid


# -- sampling -------------------------------------------------------------------


def mean_field(domain: LatticeDomain, signature: TopologySignature) -> np.ndarray:
    key = ("mean", signature)
    if key not in domain._cache:
        domain._cache[key] = kernels.solve_dirichlet_values(
            domain, mean_boundary_data(domain, signature))
    return domain._cache[key]


def sample_dgff(domain: LatticeDomain, signature: TopologySignature, seed,
                rng: Optional[np.random.Generator] = None) -> FieldSample:
    """Zero-boundary DGFF (visit-count covariance) plus the signature mean."""
    sys = kernels.system(domain)
    if rng is None:
        rng = substream(seed, 0)
    xi = rng.standard_normal(sys.n)
    fluct = sys.sample(xi)
    mean = mean_field(domain, signature)
    return FieldSample(domain, signature, fluct + mean, mean, seed)


def static_sign_grid_from_values(domain: LatticeDomain, bvals: np.ndarray,
                                 cache_key=None) -> np.ndarray:
    key = ("ssgv", cache_key if cache_key is not None else bvals.tobytes())
    if key in domain._cache:
        return domain._cache[key]
    signs = np.where(np.asarray(bvals) >= 0, 1, -1).astype(np.int8)
    grid = np.zeros(domain.idx_grid.shape, dtype=np.int8)
    off = domain._grid_off
    from collections import deque

    queue = deque()
    for b in range(domain.n_boundary):
        s = domain.bnd_sites[b] - off
        grid[s[0], s[1]] = signs[b]
        queue.append((int(s[0]), int(s[1])))
    while queue:
        a, b = queue.popleft()
        g = grid[a, b]
        for da, db in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            u, v = a + da, b + db
            if 0 <= u < grid.shape[0] and 0 <= v < grid.shape[1]:
                if grid[u, v] == 0 and domain.idx_grid[u, v] < 0:
                    grid[u, v] = g
                    queue.append((u, v))
    domain._cache[key] = grid
    return grid


def sample_dgff_with_data(domain: LatticeDomain, bvals: np.ndarray, seed,
                          rng: Optional[np.random.Generator] = None,
                          cache_key=None) -> FieldSample:
    """DGFF with an explicit boundary-data vector (indexed by boundary site)."""
    sys = kernels.system(domain)
    if rng is None:
        rng = substream(seed, 0)
    key = ("meanv", cache_key if cache_key is not None else bvals.tobytes())
    if key not in domain._cache:
        domain._cache[key] = kernels.solve_dirichlet_values(domain, bvals)
    mean = domain._cache[key]
    f = FieldSample(domain, None, sys.sample(rng.standard_normal(sys.n)) + mean,
                    mean, seed)
    f._bvals = bvals
    f._bvals_key = cache_key
    return f


# -- interface tracing ----------------------------------------------------------


def _rot(d: int, turn: int) -> int:
    return (d + turn) % 4


def trace_interface(cell_value: Callable, is_field: Callable, L0, R0,
                    chirality: str = "strong", max_steps: int = 1_000_000):
    """Walk the dual interface with the left site negative, right positive.

    cell_value returns the field height (boundary data included); the sign
    of the height drives the walk.  At checkerboard corners the default
    tie-break connects the diagonal whose heights are farther from zero — a
    deterministic rule that is exactly symmetric under field negation and
    lattice reflections.  chirality="left"/"right" forces a fixed turn
    instead (the mirrored pair of conventions used by symmetry tests).

    Returns (corners, final_pair); terminates when the crossed pair has no
    field (interior) cell; the caller validates the endpoint.
    """
    L0 = (int(L0[0]), int(L0[1]))
    R0 = (int(R0[0]), int(R0[1]))
    delta = (R0[0] - L0[0], R0[1] - L0[1])
    # direction with L on the left: d = rot90ccw(R - L)
    dmap = {(0, -1): 0, (1, 0): 1, (0, 1): 2, (-1, 0): 3}
    d = dmap[delta]
    c = (L0[0] + _CORNER_OFF[d][0], L0[1] + _CORNER_OFF[d][1])
    dvec = DIRS
    corners = [c]
    L, R = L0, R0
    for _ in range(max_steps):
        c = (c[0] + int(dvec[d][0]), c[1] + int(dvec[d][1]))
        corners.append(c)
        # cells ahead of corner c if the walk continued straight
        AL = _left_site(c, d)
        AR = _right_site(c, d)
        vL, vR = cell_value(*AL), cell_value(*AR)
        if vL < 0 and vR >= 0:
            L, R = AL, AR
        elif vL >= 0 and vR >= 0:
            d = _rot(d, 1)
            L, R = L, AL
        elif vL < 0 and vR < 0:
            d = _rot(d, -1)
            L, R = AR, R
        else:  # vL >= 0, vR < 0: checkerboard corner
            if chirality == "strong":
                neg = min(-cell_value(*L), -vR)
                pos = min(cell_value(*R), vL)
                turn = 1 if neg >= pos else -1
            else:
                turn = 1 if chirality == "left" else -1
            if turn == 1:
                d = _rot(d, 1)
                L, R = L, AL
            else:
                d = _rot(d, -1)
                L, R = AR, R
        if not (is_field(*L) or is_field(*R)):
            corners.append((c[0] + int(dvec[d][0]), c[1] + int(dvec[d][1])))
            return corners, (L, R)
    raise TraceStuck("interface exceeded the step budget")


def _left_site(c, d):
    return {
        0: (c[0], c[1]),
        1: (c[0] - 1, c[1]),
        2: (c[0] - 1, c[1] - 1),
        3: (c[0], c[1] - 1),
    }[d]


def _right_site(c, d):
    return {
        0: (c[0], c[1] - 1),
        1: (c[0], c[1]),
        2: (c[0] - 1, c[1]),
        3: (c[0] - 1, c[1] - 1),
    }[d]


def _corner_to_point(c):
    return (c[0] - 0.5, c[1] - 0.5)


def trace_level_line(field: FieldSample, chirality: str = "strong",
                     classify: bool = True) -> LevelLineSample:
    """Deterministic sign interface of the field from x to y."""
    domain = field.domain
    if field.signature is not None:
        sgrid = static_sign_grid(domain, field.signature)
    else:
        sgrid = static_sign_grid_from_values(domain, field._bvals,
                                             cache_key=field._bvals_key)
    grid = LAMBDA_FIELD * sgrid.astype(float)
    gi = domain.int_sites - domain._grid_off
    grid[gi[:, 0], gi[:, 1]] = field.values
    idxg = domain.idx_grid
    off = domain._grid_off

    def cell_value(a, b):
        return grid[a - off[0], b - off[1]]

    def is_field(a, b):
        return idxg[a - off[0], b - off[1]] >= 0

    xs = domain.mark_x_site
    ys = domain.mark_y_site
    last_err = None
    for k in range(4):
        n = (int(xs[0] + DIRS[k][0]), int(xs[1] + DIRS[k][1]))
        if is_field(*n) or cell_value(*n) >= 0:
            continue
        try:
            corners, (Lf, Rf) = trace_interface(cell_value, is_field, n, tuple(xs),
                                                chirality=chirality,
                                                max_steps=32 * domain.n_interior + 1000)
        except TraceStuck as e:
            last_err = e
            continue
        endd = min(max(abs(Lf[0] - ys[0]), abs(Lf[1] - ys[1])),
                   max(abs(Rf[0] - ys[0]), abs(Rf[1] - ys[1])))
        if endd <= 1:
            path = LatticePath(np.array([_corner_to_point(c) for c in corners]))
            if not classify:
                return LevelLineSample(path, None, accepted=True)
            sig = classify_topology(domain, path)
            return LevelLineSample(path, sig, accepted=(sig == field.signature))
        last_err = TraceStuck(f"interface ended {endd} cells from y")
    raise last_err or TraceStuck("no interface germ at x")


# -- estimators -----------------------------------------------------------------


def estimate_class_probability(domain: LatticeDomain, signature: TopologySignature,
                               n_samples: int, seed) -> tuple:
    """Monte Carlo P(level line of the signature field realizes the signature)."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if domain.n_holes == 0:
        return 1.0, 0.0
    hits = 0
    for i in range(int(n_samples)):
        f = sample_dgff(domain, signature, seed, rng=substream(seed, i))
        s = trace_level_line(f)
        hits += int(s.accepted)
    p = hits / n_samples
    return p, float(np.sqrt(max(p * (1 - p), 1e-12) / n_samples))


def sample_conditioned_level_line(domain: LatticeDomain, signature: TopologySignature,
                                  max_attempts: int, seed) -> LevelLineSample:
    """Rejection-sample the level line conditioned on its topology class."""
    for i in range(int(max_attempts)):
        f = sample_dgff(domain, signature, seed, rng=substream(seed, i))
        s = trace_level_line(f)
        if s.accepted:
            return s
    raise RejectionBudgetExhausted(
        f"no signature match in {max_attempts} attempts")
