import math

import numpy as np
import pytest

from mcsle import kernels as K
from mcsle.errors import ContractionViolated, CrosscutsIntersect
from mcsle.gff import substream
from mcsle.kernels import BoundaryTrace
from mcsle.lattice import build_circle_domain, carve, radial_crosscut


def dense_green_oracle(domain):
    """Direct dense inverse of I - P, independent of the banded solver."""
    n = domain.n_interior
    A = np.eye(n)
    for v in range(n):
        for w in domain.nbr_int[v]:
            if w >= 0:
                A[v, w] -= 0.25
    return np.linalg.inv(A)


def test_green_single_site_domain():
    # one interior site: every step is killed, so the visit count is 1
    d = build_circle_domain(0.05, [], 1 / 16, (0.0, math.pi))
    assert d.n_interior == 1
    G = K.green_matrix(d, d.int_sites, d.int_sites).entries
    assert G.shape == (1, 1)
    assert abs(G[0, 0] - 1.0) < 1e-14


def test_green_symmetry_and_spd(small_disk):
    d = small_disk
    rng = substream(1, 0)
    picks = d.int_sites[rng.choice(d.n_interior, size=25, replace=False)]
    G = K.green_matrix(d, picks, picks).entries
    assert np.abs(G - G.T).max() < 1e-12
    assert np.linalg.eigvalsh(G).min() > 0


def test_green_against_dense_inverse():
    d = build_circle_domain(0.2, [], 1 / 16, (0.0, math.pi))  # ~5x5 box of sites
    Gd = dense_green_oracle(d)
    G = K.green_matrix(d, d.int_sites, d.int_sites).entries
    assert np.abs(G - Gd).max() < 1e-12


def test_green_domain_monotonicity(annulus24):
    block = [(i, 14) for i in range(4, 8)]
    sub = carve(annulus24, block)
    picks = [s for s in [(-10, 0), (0, -16), (12, 4)]]
    G = K.green_matrix(annulus24, picks, picks).entries
    Gs = K.green_submatrix(annulus24, annulus24.interior_indices(np.array(block)),
                           picks, picks)
    assert np.all(G - Gs > -1e-14)
    assert (G - Gs).max() > 0


def test_poisson_rows_and_symmetric_square():
    d = build_circle_domain(0.2, [], 1 / 16, (0.0, math.pi))
    H = K.poisson_matrix(d)
    assert np.abs(H.entries.sum(axis=1) - 1).max() < 1e-12
    assert H.entries.min() >= 0
    # center of the symmetric grid: exits respect the 4-fold symmetry orbit
    ci = d.interior_index((0, 0))
    row = H.entries[ci]
    probs = {tuple(s): p for s, p in zip(H.cols_index, row)}
    for (i, j), p in probs.items():
        for t in [(j, i), (-i, j), (i, -j)]:
            assert abs(probs[t] - p) < 1e-12


def test_poisson_single_interior_site_one_step():
    d = build_circle_domain(0.05, [], 1 / 16, (0.0, math.pi))
    H = K.poisson_matrix(d)
    assert np.allclose(sorted(H.entries[0]), [0.25] * 4)


@pytest.mark.slow
def test_poisson_row_monte_carlo_oracle(small_disk):
    d = small_disk
    start = (0, 0)
    row = K.poisson_matrix(d, interior_rows=[start]).entries[0]
    rng = substream(99, 0)
    n = 1_000_000
    pos = np.zeros((n, 2), dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    hits = np.zeros(d.n_boundary)
    idx = d.interior_indices(pos)
    while alive.any():
        act = np.nonzero(alive)[0]
        steps = rng.integers(0, 4, size=len(act))
        ni = d.nbr_int[idx[act], steps]
        nb = d.nbr_bnd[idx[act], steps]
        done = ni < 0
        np.add.at(hits, nb[done], 1.0)
        alive[act[done]] = False
        idx[act[~done]] = ni[~done]
    emp = hits / n
    tv = 0.5 * np.abs(emp - row).sum()
    assert tv < 0.005


def enumeration_excursion_oracle(domain, z, w, max_len=20):
    """Sum of (1/4)^len over walks z -> w through the interior, by matrix
    powers, with an explicit geometric tail bound."""
    n = domain.n_interior
    P = np.zeros((n, n))
    for v in range(n):
        for u in domain.nbr_int[v]:
            if u >= 0:
                P[v, u] += 0.25
    v0 = np.zeros(n)
    for k in range(4):
        a = domain.nbr_int[...]
    zb = domain.boundary_index(z)
    wb = domain.boundary_index(w)
    start = np.zeros(n)
    end = np.zeros(n)
    from mcsle.lattice import DIRS

    for dvec in DIRS:
        t = (z[0] + int(dvec[0]), z[1] + int(dvec[1]))
        vi = domain.interior_index(t)
        if vi >= 0:
            start[vi] += 0.25
        t = (w[0] + int(dvec[0]), w[1] + int(dvec[1]))
        vi = domain.interior_index(t)
        if vi >= 0:
            end[vi] += 0.25
    total = 0.0
    vec = start
    for _ in range(max_len - 1):
        total += vec @ end
        vec = vec @ P
    rho = np.abs(np.linalg.eigvals(P)).max()
    tail_bound = vec.sum() * 0.25 / (1 - rho)
    return total, tail_bound


def test_boundary_poisson_enumeration_oracle():
    d = build_circle_domain(0.15, [], 1 / 16, (0.0, math.pi))
    z = tuple(d.bnd_sites[0])
    w = tuple(d.bnd_sites[d.n_boundary // 2])
    H = K.boundary_poisson_matrix(d, [d.boundary_index(z)], [d.boundary_index(w)])
    partial, tail = enumeration_excursion_oracle(d, z, w)
    assert partial <= H.entries[0, 0] + 1e-15
    assert abs(H.entries[0, 0] - partial) <= tail + 1e-15


def test_boundary_poisson_symmetry(annulus24):
    rng = substream(2, 0)
    picks = rng.choice(annulus24.n_boundary, size=30, replace=False)
    H = K.boundary_poisson_matrix(annulus24, picks, picks).entries
    assert np.abs(H - H.T).max() < 1e-10
    assert H.min() >= 0


def test_boundary_poisson_restriction_monotonicity(annulus24):
    d = annulus24
    x, y = d.mark_x, d.mark_y
    H = K.boundary_poisson_matrix(d, [x], [y]).entries[0, 0]
    block = [(i, j) for i in (10, 11) for j in range(-2, 3)]
    sub = carve(d, block)
    Hs = K.boundary_poisson_matrix(
        sub, [sub.boundary_index(d.bnd_sites[x])],
        [sub.boundary_index(d.bnd_sites[y])]).entries[0, 0]
    assert Hs < H


def test_solve_dirichlet_basics(small_disk):
    d = small_disk
    zero = K.solve_dirichlet_values(d, np.zeros(d.n_boundary))
    assert np.abs(zero).max() < 1e-14
    const = K.solve_dirichlet_values(d, np.full(d.n_boundary, 3.7))
    assert np.abs(const - 3.7).max() < 1e-11
    # ±lambda split at the marks: the center value vanishes by symmetry
    g = np.zeros(d.n_boundary)
    g[d.arc_xy] = 0.5
    g[d.arc_yx] = -0.5
    u = K.solve_dirichlet_values(d, g)
    ci = d.interior_index((0, 0))
    assert abs(u[ci]) < 1e-12
    assert np.abs(u).max() <= 0.5 + 1e-12  # maximum principle


def test_solve_dirichlet_trace_interface(small_disk):
    tr = BoundaryTrace(small_disk.bnd_sites, np.ones(small_disk.n_boundary))
    u = K.solve_dirichlet(small_disk, tr)
    assert np.abs(u - 1.0).max() < 1e-11


def test_loop_identities_exact(annulus32):
    B1 = radial_crosscut(annulus32, 0.0)
    B2 = radial_crosscut(annulus32, math.pi / 2)
    res = K.verify_loop_identities(annulus32, B1, B2)
    assert max(res.values()) < 1e-9


def test_loop_identities_empty_B2(annulus24):
    B1 = radial_crosscut(annulus24, 0.0)
    res = K.verify_loop_identities(annulus24, B1, [])
    assert max(res.values()) == 0.0


def test_loop_identities_mesh_refinement():
    # residuals stay at floating-point scale, not O(h)
    outs = []
    for h in (1 / 16, 1 / 32):
        d = build_circle_domain(1.0, [((0.0, 0.0), 0.3679)], h,
                                (math.pi / 2, -math.pi / 2))
        res = K.verify_loop_identities(d, radial_crosscut(d, 0.0),
                                       radial_crosscut(d, math.pi))
        outs.append(max(res.values()))
    assert all(r < 1e-10 for r in outs)


def test_crosscuts_must_be_separated(annulus24):
    B1 = radial_crosscut(annulus24, 0.0)
    with pytest.raises(CrosscutsIntersect):
        K.verify_loop_identities(annulus24, B1, B1)


def test_gaussian_quadratic_trivial():
    mc, closed = K.gaussian_quadratic_expectation(np.eye(3), np.zeros((3, 3)),
                                                  np.zeros(3), 10_000, seed=1)
    assert closed == 1.0
    assert abs(mc - 1.0) < 1e-12


def test_gaussian_quadratic_scalar():
    q = 0.4
    mc, closed = K.gaussian_quadratic_expectation(
        np.array([[1.0]]), np.array([[q]]), np.zeros(1), 200_000, seed=2)
    assert abs(closed - (1 - q) ** -0.5) < 1e-12
    assert abs(mc - closed) / closed < 0.02


def test_gaussian_quadratic_contraction_guard():
    with pytest.raises(ContractionViolated):
        K.gaussian_quadratic_expectation(np.eye(2), np.eye(2) * 1.5,
                                         np.zeros(2), 10, seed=0)


@pytest.mark.slow
def test_gaussian_quadratic_dim5_monte_carlo():
    rng = substream(5, 0)
    A = rng.standard_normal((5, 5))
    Q = A @ A.T + 5 * np.eye(5)
    B = 0.1 * rng.standard_normal((5, 5))
    M = 0.5 * (B + B.T)
    w = np.linalg.eigvalsh
    # keep the contraction margin comfortable
    Qh = np.linalg.cholesky(Q)
    scale = 0.5 / max(abs(np.linalg.eigvalsh(Qh.T @ M @ Qh)))
    M = M * scale
    m = 0.2 * rng.standard_normal(5)
    mc, closed = K.gaussian_quadratic_expectation(Q, M, m, 1_000_000, seed=3)
    assert abs(mc - closed) / closed < 0.02
