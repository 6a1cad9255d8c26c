#!/usr/bin/env python3
"""Compare the level-line and excursion/CLE constructions at kappa = 4 on a
one-hole domain: partition functions, signature rates, curve statistics."""

import argparse
import math

import numpy as np

from mcsle import assembly
from mcsle.lattice import build_circle_domain
from mcsle.stats import ks_2samp_pvalue, two_proportion_pvalue


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-samples", type=int, default=4000)
    ap.add_argument("--mesh", type=float, default=1 / 32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    dom = build_circle_domain(1.0, [((0.35, 0.0), 0.15)], args.mesh,
                              (math.pi / 2, -math.pi / 2))
    weights = assembly.mixture_weights(dom, 4.0)
    keys = ("crossing", "maxdist", "clearance")

    def collect(construction, seed):
        out = {k: [] for k in keys}
        plus = 0
        for i in range(args.n_samples):
            s = assembly.sample_mixture_curve(dom, 4.0, weights, seed, i,
                                              construction)
            st = assembly.curve_statistics(dom, s.path)
            for k in keys:
                out[k].append(st[k])
            plus += (s.signature.signs == (1,))
        return out, plus

    g, gp = collect("GFF4", args.seed)
    c, cp = collect("CLEKappa", args.seed + 1)
    n = args.n_samples
    for k in keys:
        a, b = np.array(g[k]), np.array(c[k])
        a, b = a[~np.isnan(a)], b[~np.isnan(b)]
        print(f"{k:>10}: gff {np.mean(a):+.4f}  cle {np.mean(b):+.4f}  "
              f"KS p={ks_2samp_pvalue(a, b):.4f}")
    print(f"signature(+1) rate: gff {gp/n:.4f} cle {cp/n:.4f} "
          f"p={two_proportion_pvalue(gp, n, cp, n):.4f}")


if __name__ == "__main__":
    main()
