"""Two-sample and goodness-of-fit helpers for the verification harnesses."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps


def binom_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 1e-12) / max(n, 1))


def two_proportion_pvalue(k1: int, n1: int, k2: int, n2: int) -> float:
    """Two-sided z-test for equality of two Bernoulli rates."""
    p = (k1 + k2) / (n1 + n2)
    se = math.sqrt(max(p * (1 - p) * (1 / n1 + 1 / n2), 1e-300))
    z = (k1 / n1 - k2 / n2) / se
    return 2.0 * sps.norm.sf(abs(z))


def ks_2samp_pvalue(a, b) -> float:
    return float(sps.ks_2samp(np.asarray(a), np.asarray(b), method="asymp").pvalue)


def weighted_ks_pvalue(values, weights, reference) -> float:
    """KS test of a weighted sample against an unweighted one.

    Uses the effective sample size (sum w)^2 / sum w^2 in the asymptotic
    two-sample statistic.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    reference = np.asarray(reference, dtype=float)
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cw = np.cumsum(w) / w.sum()
    grid = np.unique(np.concatenate([v, reference]))
    Fw = np.searchsorted(v, grid, side="right")
    Fw = np.where(Fw > 0, cw[np.clip(Fw - 1, 0, None)], 0.0)
    Fr = np.searchsorted(np.sort(reference), grid, side="right") / len(reference)
    D = float(np.abs(Fw - Fr).max())
    n_eff = w.sum() ** 2 / (w ** 2).sum()
    m = len(reference)
    en = math.sqrt(n_eff * m / (n_eff + m))
    return float(sps.kstwobign.sf(max(en * D, 0.0)))


def poisson_count_chi2_pvalue(counts, mean) -> float:
    """Chi-square GOF of integer counts against Poisson(mean), tail-pooled."""
    counts = np.asarray(counts, dtype=int)
    n = len(counts)
    kmax = int(counts.max())
    probs = [math.exp(-mean) * mean ** k / math.factorial(k) for k in range(kmax + 1)]
    probs.append(1.0 - sum(probs))
    obs = np.bincount(counts, minlength=kmax + 1).astype(float)
    obs = np.append(obs, 0.0)
    exp = np.asarray(probs) * n
    # pool bins with small expectation
    keep_obs, keep_exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            keep_obs.append(acc_o)
            keep_exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        if keep_exp:
            keep_obs[-1] += acc_o
            keep_exp[-1] += acc_e
        else:
            keep_obs, keep_exp = [acc_o], [acc_e]
    if len(keep_obs) < 2:
        return 1.0
    keep_obs = np.asarray(keep_obs)
    keep_exp = np.asarray(keep_exp)
    chi2 = float(((keep_obs - keep_exp) ** 2 / keep_exp).sum())
    return float(sps.chi2.sf(chi2, df=len(keep_obs) - 1))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
