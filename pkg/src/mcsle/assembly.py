"""Mixture assembly, partition functions, and verification harnesses."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import annulus as ann_mod
from . import energy, gff, kernels, loops
from .constants import central_charge, check_kappa_range, h_kappa
from .errors import (
    DegenerateSample,
    FillSwallowsTarget,
    RejectionBudgetExhausted,
    TooFewRestrictedSamples,
)
from .gff import subseed, substream
from .lattice import LatticeDomain, LatticePath, TopologySignature, classify_topology

MAX_HOLES = 6


@dataclass
class SignatureCell:
    signature: TopologySignature
    log_weight: float
    weight: float
    energy_diff: float
    reference_H: float
    p_hat: float
    stderr: float
    n_samples: int
    note: str = ""


@dataclass
class MixtureReport:
    per_signature: list
    partition_function: float
    partition_stderr: float
    construction: str
    meta: dict = field(default_factory=dict)


def enumerate_signatures(n_holes: int) -> list:
    if n_holes > MAX_HOLES:
        raise ValueError(f"signature enumeration capped at {MAX_HOLES} holes")
    return [TopologySignature("noncrossing", signs=s)
            for s in itertools.product((-1, 1), repeat=n_holes)]


def cle_class_probability(domain, signature, n_samples, seed, kappa,
                          budget_factor: int = 4):
    """Acceptance frequency of the excursion/CLE construction, with
    swallowed fillings resampled (rate reported)."""
    hits = 0
    done = 0
    swallowed = 0
    i = 0
    budget = budget_factor * n_samples
    while done < n_samples and i < budget:
        try:
            s = loops.construct_kappa_curve(domain, signature, kappa, seed,
                                            rng=substream(seed, i))
            hits += int(s.accepted)
            done += 1
        except FillSwallowsTarget:
            swallowed += 1
        i += 1
    if done < n_samples:
        raise RejectionBudgetExhausted("swallow rate too high for the budget")
    p = hits / done
    from .stats import binom_stderr
    return p, binom_stderr(p, done), swallowed / i


def assemble_noncrossing(domain: LatticeDomain, kappa: float, n_samples: int,
                         seed, construction: str = "auto") -> MixtureReport:
    """Per-signature weights and class probabilities; Z_D = sum w_b p_b."""
    check_kappa_range(kappa)
    if construction == "auto":
        construction = "GFF4" if abs(kappa - 4.0) < 1e-12 else "CLEKappa"
    if construction == "GFF4" and abs(kappa - 4.0) > 1e-12:
        raise ValueError("the level-line construction requires kappa = 4")
    cells = []
    meta = {"swallow_rates": {}}
    sigs = enumerate_signatures(domain.n_holes)
    weights = [energy.z_weight_noncrossing(domain, s, kappa) for s in sigs]
    wmax = max(math.exp(w.log_weight) for w in weights)
    for j, (s, w) in enumerate(zip(sigs, weights)):
        wt = math.exp(w.log_weight)
        if construction == "GFF4":
            p, se = gff.estimate_class_probability(domain, s, n_samples,
                                                   subseed(seed, j))
        else:
            p, se, sw = cle_class_probability(domain, s, n_samples,
                                              subseed(seed, j), kappa)
            meta["swallow_rates"][str(s.signs)] = sw
        note = ""
        if p == 0.0 and wt < 1e-12 * wmax:
            note = "dropped: zero frequency and negligible weight"
        cells.append(SignatureCell(s, w.log_weight, wt, w.energy_diff,
                                   w.reference_H, p, se, n_samples, note))
    Z = sum(c.weight * c.p_hat for c in cells)
    Zse = math.sqrt(sum((c.weight * c.stderr) ** 2 for c in cells))
    return MixtureReport(cells, Z, Zse, construction, meta)


# -- crossing annulus ----------------------------------------------------------


def assemble_crossing_annulus(p: float, alpha: float, n_samples: int,
                              k_max: int, seed, n_theta: int = 128) -> MixtureReport:
    """Winding mixture of branch level lines against the theta law."""
    strip = ann_mod.StripLattice(p, n_theta)
    a_eff = ann_mod.alpha_eff(strip, alpha)
    law = energy.winding_distribution(strip.p_eff, a_eff, k_max=k_max)
    ks = sorted(law.probs)
    wts = np.array([energy.crossing_weight_annulus(strip.p_eff, a_eff, k) for k in ks])
    probs = wts / wts.sum()
    drawn = {k: 0 for k in ks}
    matched = {k: 0 for k in ks}
    observed = {}
    for i in range(int(n_samples)):
        rng = substream(seed, i)
        k = ks[int(rng.choice(len(ks), p=probs))]
        s = ann_mod.sample_branch_level_line(strip, k, alpha, rng)
        drawn[k] += 1
        matched[k] += int(s.winding == k)
        observed[s.winding] = observed.get(s.winding, 0) + 1
    cells = []
    for k in ks:
        sig = TopologySignature("crossing", winding_k=int(k))
        n_k = max(drawn[k], 1)
        p_hat = matched[k] / n_k
        from .stats import binom_stderr
        cells.append(SignatureCell(sig, float(np.log(wts[ks.index(k)])),
                                   float(wts[ks.index(k)]), float("nan"),
                                   float("nan"), p_hat,
                                   binom_stderr(p_hat, n_k), drawn[k]))
    Z = float(sum(c.weight * c.p_hat for c in cells))
    meta = {
        "p_eff": strip.p_eff,
        "alpha_eff": a_eff,
        "n_theta": n_theta,
        "empirical_winding": {int(k): observed.get(k, 0) / n_samples for k in ks},
        "theoretical_winding": {int(k): law.probs[k] for k in ks},
        "mismatch_rate": 1.0 - sum(matched.values()) / max(1, sum(drawn.values())),
    }
    return MixtureReport(cells, Z, 0.0, "AnnulusCrossing4", meta)


# -- curve statistics and mixture samplers ----------------------------------------


def curve_statistics(domain: LatticeDomain, path: LatticePath) -> dict:
    """Summary statistics used by the two-sample harnesses.

    crossing and maxdist and clearance are macroscopic (they converge with
    the mesh); length is lattice-scale and only reported.
    """
    v = path.vertices
    cross = np.nan
    sgn = np.sign(v[:, 1])
    flips = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    if len(flips):
        cross = float(v[flips[0], 0]) * domain.mesh_h
    arc = domain.bnd_sites[domain.arc_yx].astype(float)
    d2 = ((v[:, None, :] - arc[None, :, :]) ** 2).sum(axis=2)
    maxdist = float(np.sqrt(d2.min(axis=1)).max()) * domain.mesh_h
    clearance = np.nan
    if domain.inner_components:
        best = np.inf
        for comp in domain.inner_components:
            ring = domain.bnd_sites[comp.bidx].astype(float)
            d2r = ((v[:, None, :] - ring[None, :, :]) ** 2).sum(axis=2)
            best = min(best, float(np.sqrt(d2r.min())))
        clearance = best * domain.mesh_h
    return {"crossing": cross, "maxdist": maxdist, "clearance": clearance,
            "length": float(len(v))}


def mixture_weights(domain: LatticeDomain, kappa: float) -> dict:
    sigs = enumerate_signatures(domain.n_holes)
    return {s: math.exp(energy.z_weight_noncrossing(domain, s, kappa).log_weight)
            for s in sigs}


def sample_mixture_curve(domain: LatticeDomain, kappa: float, weights: dict,
                         seed, i, construction: str, max_attempts: int = 200):
    """Exact mixture sampler: signature prior by weight, then rejection on
    the realized topology class."""
    rng = substream(seed, i)
    sigs = list(weights)
    w = np.array([weights[s] for s in sigs])
    w = w / w.sum()
    for _ in range(max_attempts):
        b = sigs[int(rng.choice(len(sigs), p=w))]
        try:
            if construction == "GFF4":
                f = gff.sample_dgff(domain, b, seed, rng=rng)
                s = gff.trace_level_line(f)
            else:
                s = loops.construct_kappa_curve(domain, b, kappa, seed, rng=rng)
        except FillSwallowsTarget:
            continue
        if s.accepted:
            return s
    raise RejectionBudgetExhausted("mixture sampler budget exhausted")


# -- restriction harness -----------------------------------------------------------


def signature_of_test_domain(domain: LatticeDomain, carved: LatticeDomain
                             ) -> TopologySignature:
    """The unique b with {curves in the test domain} ⊂ A_b."""
    if carved.parent is not domain:
        raise ValueError("carved must be a test domain of `domain`")
    if carved.n_holes != 0:
        raise ValueError("test domain must be simply connected")
    removed = {tuple(s) for s in (carved.removed if carved.removed is not None else [])}
    xy = {tuple(s) for s in domain.bnd_sites[domain.arc_xy]}
    yx = {tuple(s) for s in domain.bnd_sites[domain.arc_yx]}
    from .lattice import DIRS

    signs = []
    for comp in domain.inner_components:
        # walk through removed cells and hole cells from this hole outward
        hole_cells = {tuple(s) for s in domain.bnd_sites[comp.bidx]}
        seen = set(hole_cells)
        stack = list(hole_cells)
        sides = set()
        while stack:
            a, b = stack.pop()
            for d in DIRS:
                t = (a + int(d[0]), b + int(d[1]))
                if t in seen:
                    continue
                if t in xy:
                    sides.add(+1)
                elif t in yx:
                    sides.add(-1)
                elif t in removed or (domain.interior_index(t) < 0
                                      and domain.boundary_index(t) < 0
                                      and carved.interior_index(t) < 0):
                    seen.add(t)
                    stack.append(t)
        if sides != {+1} and sides != {-1}:
            raise ValueError(f"hole {comp.hole_index} not attached to a unique arc")
        signs.append(sides.pop())
    return TopologySignature("noncrossing", signs=tuple(signs))


def test_domain_boundary_values(domain: LatticeDomain, carved: LatticeDomain
                                ) -> np.ndarray:
    """±LAMBDA_FIELD data for the direct sampler in a test domain: -λ on the
    surviving (yx) arc, +λ on everything else (paper's u_{D'} convention)."""
    from .constants import LAMBDA_FIELD

    bvals = np.full(carved.n_boundary, LAMBDA_FIELD)
    for s in domain.bnd_sites[domain.arc_yx]:
        b = carved.boundary_index(s)
        if b >= 0:
            bvals[b] = -LAMBDA_FIELD
    return bvals


def direct_test_domain_sample(domain, carved, seed, i):
    bvals = test_domain_boundary_values(domain, carved)
    f = gff.sample_dgff_with_data(carved, bvals, seed, rng=substream(seed, i),
                                  cache_key="test-domain")
    return gff.trace_level_line(f, classify=False)


def path_stays_in(domain: LatticeDomain, carved: LatticeDomain,
                  path: LatticePath) -> bool:
    """True when no cell flanking the dual path was carved away."""
    removed = carved.removed
    if removed is None or len(removed) == 0:
        return True
    rem = {tuple(s) for s in removed}
    corners = np.round(path.vertices + 0.5).astype(np.int64)
    from .gff import _left_site, _right_site

    dmap = {(1, 0): 0, (0, 1): 1, (-1, 0): 2, (0, -1): 3}
    for c, c2 in zip(corners[:-1], corners[1:]):
        d = dmap.get((int(c2[0] - c[0]), int(c2[1] - c[1])))
        if d is None:
            continue
        if _left_site(tuple(c2), d) in rem or _right_site(tuple(c2), d) in rem:
            return False
        if _left_site(tuple(c), d) in rem or _right_site(tuple(c), d) in rem:
            return False
    return True


def verify_restriction(domain: LatticeDomain, carved: LatticeDomain, kappa: float,
                       n_samples: int, seed, min_restricted: int = 100) -> dict:
    """Importance check of the boundary-perturbation rule on a test domain.

    Mixture samples restricted to the test domain, reweighted by
    exp(-(c/2) m_D(eta, K)), are compared against direct samples in the test
    domain; the estimated mass ratio is compared with Z_test / Z_D.
    """
    check_kappa_range(kappa)
    construction = "GFF4" if abs(kappa - 4.0) < 1e-12 else "CLEKappa"
    c_charge = central_charge(kappa)
    weights = mixture_weights(domain, kappa)
    removed = carved.removed
    K_sites = [tuple(s) for s in removed]

    ld_D = kernels.logdet_green(domain)
    ld_K = kernels.logdet_green(domain, killed=domain.interior_indices(removed))

    stats_r = {"crossing": [], "maxdist": [], "clearance": [], "length": []}
    rn_weights = []
    indicator_weighted = []  # 1{eta in D''} exp(-(c/2) m) per mixture draw
    kept = 0
    for i in range(int(n_samples)):
        s = sample_mixture_curve(domain, kappa, weights, seed, i, construction)
        if not path_stays_in(domain, carved, s.path):
            indicator_weighted.append(0.0)
            continue
        edges = loops.path_blocked_edges(domain, s.path)
        ld_eta = kernels.logdet_green(domain, blocked_edges=edges)
        ld_both = kernels.logdet_green(
            domain, killed=domain.interior_indices(removed), blocked_edges=edges)
        m = ld_D - ld_eta - ld_K + ld_both
        w = math.exp(-0.5 * c_charge * m)
        rn_weights.append(w)
        indicator_weighted.append(w)
        st = curve_statistics(domain, s.path)
        for k in stats_r:
            stats_r[k].append(st[k])
        kept += 1
    if kept < min_restricted:
        raise TooFewRestrictedSamples(f"only {kept} restricted samples")

    n_direct = max(kept, min_restricted)
    stats_d = {"crossing": [], "maxdist": [], "clearance": [], "length": []}
    for i in range(n_direct):
        s = direct_test_domain_sample(domain, carved, subseed(seed, 7), i)
        st = curve_statistics(domain, s.path)
        for k in stats_d:
            stats_d[k].append(st[k])

    from .stats import weighted_ks_pvalue

    pvals = {k: weighted_ks_pvalue(stats_r[k], rn_weights, stats_d[k])
             for k in stats_r}

    iw = np.asarray(indicator_weighted)
    ratio = float(iw.mean())
    ratio_se = float(iw.std(ddof=1) / math.sqrt(len(iw)))
    sig_c = signature_of_test_domain(domain, carved)
    rep = assemble_noncrossing(domain, kappa, max(200, n_samples // 10),
                               subseed(seed, 11), construction=construction)
    Z_D = rep.partition_function
    Z_sub = math.exp(energy.z_weight_noncrossing(
        carved, TopologySignature("noncrossing", signs=()), kappa).log_weight)
    return {
        "pvalues": pvals,
        "mass_ratio": ratio,
        "mass_ratio_stderr": ratio_se,
        "predicted_ratio": Z_sub / Z_D,
        "Z_D": Z_D,
        "Z_D_stderr": rep.partition_stderr,
        "Z_test": Z_sub,
        "n_restricted": kept,
        "n_total": int(n_samples),
        "compatible_signature": list(sig_c.signs),
    }


# -- Brownian-bridge oracle -----------------------------------------------------


def bridge_exit_probabilities(p: float, start: float, end_target: float,
                              speed: float = 4.0) -> tuple:
    """Exit probabilities of a Brownian bridge from [0, 2pi] by image series.

    The bridge runs from `start` to `end_target` over duration p with
    variance speed*t (speed 4 matches the level-line angular diffusion).
    Returns (prob_exit_0, prob_exit_2pi, prob_no_exit); the truncation error
    of the alternating Gaussian series is below 1e-14.
    """
    if p <= 0:
        raise ValueError("duration must be positive")
    L = 2.0 * math.pi
    a, b = float(start), float(end_target)
    if not (0.0 < a < L):
        raise ValueError("start must lie in (0, 2pi)")
    var = speed * p

    def r(x):
        return math.exp(-(x * x - (b - a) ** 2) / (2.0 * var))

    def series(terms):
        total = 0.0
        for k in range(200):
            t1, t2 = terms(k)
            total += r(t1) - r(t2)
            if max(r(t1), r(t2)) < 1e-15 and k > 2:
                break
        return total

    p0 = series(lambda k: (a + b + 2 * k * L, 2 * (k + 1) * L + b - a))
    pL = series(lambda k: (2 * L - a - b + 2 * k * L, 2 * (k + 1) * L + a - b))
    p0 = min(max(p0, 0.0), 1.0)
    pL = min(max(pL, 0.0), 1.0)
    return p0, pL, max(0.0, 1.0 - p0 - pL)


# -- continuum Loewner reference sampler ------------------------------------------


def sle_disk_crossing_samples(kappa: float, n_samples: int, seed,
                              n_steps: int = 2000, total_time: float = 4.0,
                              mark_angle_x: float = math.pi / 2) -> np.ndarray:
    """First crossings of the horizontal diameter by Loewner-sampled SLE.

    Vertical-slit discretization of the chordal Loewner flow in the upper
    half plane, mapped to the disk with x at `mark_angle_x` and y antipodal;
    antithetic driving pairs keep the sampler exactly mirror-symmetric.
    Returns the real coordinates of the first diameter crossing per sample.
    """
    rng = substream(seed, 0)
    dt = total_time / n_steps
    half = (n_samples + 1) // 2
    dW = math.sqrt(kappa * dt) * rng.standard_normal((half, n_steps))
    dW = np.vstack([dW, -dW])[:n_samples]
    W = np.concatenate([np.zeros((n_samples, 1)), np.cumsum(dW, axis=1)], axis=1)

    rot = np.exp(1j * (mark_angle_x - math.pi / 2))

    def to_disk(z):
        return rot * 1j * (z - 1j) / (z + 1j)

    out = np.full(n_samples, np.nan)
    prev = np.full(n_samples, np.nan, dtype=complex)
    active = np.ones(n_samples, dtype=bool)
    for k in range(1, n_steps + 1):
        z = W[:, k].astype(complex)
        for j in range(k, 0, -1):
            u = W[:, j - 1]
            s = np.sqrt((z - u) ** 2 - 4 * dt + 0j)
            s = np.where(s.imag < 0, -s, s)
            z = u + s
        w = to_disk(z)
        if k > 1:
            crossed = active & (np.sign(w.imag) * np.sign(prev.imag) < 0)
            if crossed.any():
                out[crossed] = w.real[crossed]
                active[crossed] = False
        prev = w
        if not active.any():
            break
    return out[~np.isnan(out)]
