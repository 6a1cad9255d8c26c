"""Batch front-end: mcsle <command> --config FILE [--seed N] [--workers K] [--out DIR].

Every command writes a deterministic manifest (inputs, seed, output hashes)
plus command-specific CSV/JSON artifacts; identical config and seed give
byte-identical numeric outputs.  Wall time lives in run_info.json, which is
the only non-reproducible artifact.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from typing import Optional

import numpy as np

from . import annulus as ann_mod
from . import assembly, energy, exports, gff, kernels, loops
from .constants import check_kappa_range
from .errors import ConfigError, McsleError
from .lattice import (
    LatticeDomain,
    TopologySignature,
    domain_from_spec,
    radial_crosscut,
)

COMMANDS = ("kernels", "identities", "winding", "partition", "sample",
            "verify-restriction", "soup")


@dataclasses.dataclass
class RunConfig:
    command: str
    config: dict
    seed: int
    workers: int
    out_dir: str


def _require(cfg: dict, field: str, typ=None):
    if field not in cfg:
        raise ConfigError(field, "missing required field")
    v = cfg[field]
    if typ is not None:
        try:
            v = typ(v)
        except (TypeError, ValueError):
            raise ConfigError(field, f"expected {typ.__name__}, got {v!r}")
    return v


def _domain(cfg: dict) -> LatticeDomain:
    spec = _require(cfg, "domain")
    if not isinstance(spec, dict):
        raise ConfigError("domain", "must be an object")
    for f in ("outer_radius", "mesh_h", "marks"):
        if f not in spec:
            raise ConfigError(f"domain.{f}", "missing required field")
    if "angle_x" not in spec["marks"] or "angle_y" not in spec["marks"]:
        raise ConfigError("domain.marks", "needs angle_x and angle_y")
    try:
        return domain_from_spec(spec)
    except McsleError:
        raise
    except (KeyError, TypeError) as e:
        raise ConfigError("domain", str(e))


def _kappa(cfg) -> float:
    kappa = float(cfg.get("kappa", 4.0))
    try:
        check_kappa_range(kappa)
    except ValueError as e:
        raise ConfigError("kappa", str(e))
    return kappa


def _n_samples(cfg, default=1000) -> int:
    n = int(cfg.get("n_samples", default))
    if n < 1:
        raise ConfigError("n_samples", "must be >= 1")
    return n


# -- commands --------------------------------------------------------------------


def cmd_kernels(run: RunConfig) -> list:
    dom = _domain(run.config)
    out = run.out_dir
    paths = []
    step = max(1, dom.n_interior // int(run.config.get("max_rows", 200)))
    rows = dom.int_sites[::step]
    G = kernels.green_matrix(dom, rows, rows)
    H = kernels.poisson_matrix(dom, interior_rows=rows)
    Hb = kernels.boundary_poisson_matrix(dom)

    def dump(name, km):
        p = os.path.join(out, f"{name}.csv")
        header = ["row_i", "row_j"] + [f"c{i}_{j}" for i, j in km.cols_index]
        exports.write_csv(p, header,
                          [[int(s[0]), int(s[1])] + list(map(float, r))
                           for s, r in zip(km.rows_index, km.entries)])
        paths.append(p)

    dump("green", G)
    dump("poisson", H)
    dump("boundary_poisson", Hb)
    return paths


def cmd_identities(run: RunConfig) -> list:
    dom = _domain(run.config)
    angles = run.config.get("crosscut_angles", [0.0, math.pi])
    if len(angles) != 2:
        raise ConfigError("crosscut_angles", "need exactly two angles")
    B1 = radial_crosscut(dom, float(angles[0]))
    B2 = radial_crosscut(dom, float(angles[1]))
    res = kernels.verify_loop_identities(dom, B1, B2)
    fred = loops.fredholm_identity_check(dom, B1, B2, form="product")
    fred2 = loops.fredholm_identity_check(dom, B1, B2, form="composite")
    report = {
        "residuals": res,
        "fredholm_residual_product": fred.det_identity_residual,
        "fredholm_residual_composite": fred2.det_identity_residual,
        "loop_mass": fred.m_hit_both,
        "logdets": list(fred.per_subdomain_logdets),
    }
    p = os.path.join(run.out_dir, "identities.json")
    exports.write_json(p, report)
    return [p]


def cmd_winding(run: RunConfig) -> list:
    cfg = run.config
    p_mod = _require(cfg, "p", float)
    alpha = float(cfg.get("alpha", 0.0))
    k_max = int(cfg.get("k_max", 3))
    n = _n_samples(cfg, 2000)
    n_theta = int(cfg.get("n_theta", 128))
    rep = assembly.assemble_crossing_annulus(p_mod, alpha, n, k_max, run.seed,
                                             n_theta=n_theta)
    rows = []
    for k in sorted(rep.meta["theoretical_winding"]):
        rows.append([k, rep.meta["theoretical_winding"][k],
                     rep.meta["empirical_winding"][k]])
    pcsv = os.path.join(run.out_dir, "winding.csv")
    exports.write_csv(pcsv, ["k", "theoretical", "empirical"], rows)
    pjson = os.path.join(run.out_dir, "winding_report.json")
    exports.write_json(pjson, {
        "p": p_mod, "alpha": alpha, "p_eff": rep.meta["p_eff"],
        "alpha_eff": rep.meta["alpha_eff"], "n_samples": n,
        "mismatch_rate": rep.meta["mismatch_rate"],
        "partition_function": rep.partition_function,
    })
    return [pcsv, pjson]


def _class_prob_chunk(args):
    spec, signs, n0, n1, seed = args
    dom = domain_from_spec(spec)
    sig = TopologySignature("noncrossing", signs=tuple(signs))
    hits = []
    for i in range(n0, n1):
        f = gff.sample_dgff(dom, sig, seed, rng=gff.substream(seed, i))
        hits.append(int(gff.trace_level_line(f).accepted))
    return (n0, hits)


def cmd_partition(run: RunConfig) -> list:
    cfg = run.config
    dom = _domain(cfg)
    kappa = _kappa(cfg)
    n = _n_samples(cfg, 500)
    construction = cfg.get("construction", "auto")
    if run.workers > 1 and (construction in ("auto", "GFF4")) and abs(kappa - 4.0) < 1e-12:
        rep = _partition_parallel(run, dom, kappa, n)
    else:
        rep = assembly.assemble_noncrossing(dom, kappa, n, run.seed,
                                            construction=construction)
    rows = [[list(c.signature.signs), c.weight, c.p_hat, c.stderr, c.n_samples]
            for c in rep.per_signature]
    pcsv = os.path.join(run.out_dir, "signature_weights.csv")
    exports.write_csv(pcsv, ["signature", "weight", "p_hat", "stderr", "n"],
                      [["|".join(map(str, r[0]))] + r[1:] for r in rows])
    pjson = os.path.join(run.out_dir, "mixture_report.json")
    exports.write_json(pjson, {
        "partition_function": rep.partition_function,
        "partition_stderr": rep.partition_stderr,
        "construction": rep.construction,
        "per_signature": [
            {"signature": list(c.signature.signs), "weight": c.weight,
             "log_weight": c.log_weight, "p_hat": c.p_hat, "stderr": c.stderr,
             "n_samples": c.n_samples, "note": c.note}
            for c in rep.per_signature],
        "meta": rep.meta,
    })
    return [pcsv, pjson]


def _partition_parallel(run: RunConfig, dom, kappa, n) -> assembly.MixtureReport:
    import multiprocessing as mp

    cfg_spec = run.config["domain"]
    sigs = assembly.enumerate_signatures(dom.n_holes)
    cells = []
    for j, s in enumerate(sigs):
        w = energy.z_weight_noncrossing(dom, s, kappa)
        chunk = max(1, n // run.workers)
        jobs = [(cfg_spec, list(s.signs), a, min(a + chunk, n),
                 gff.subseed(run.seed, j)) for a in range(0, n, chunk)]
        with mp.Pool(run.workers) as pool:
            parts = pool.map(_class_prob_chunk, jobs)
        hits = [h for _, hs in sorted(parts) for h in hs]
        p = float(np.mean(hits))
        from .stats import binom_stderr
        cells.append(assembly.SignatureCell(
            s, w.log_weight, math.exp(w.log_weight), w.energy_diff,
            w.reference_H, p, binom_stderr(p, n), n))
    Z = sum(c.weight * c.p_hat for c in cells)
    Zse = math.sqrt(sum((c.weight * c.stderr) ** 2 for c in cells))
    return assembly.MixtureReport(cells, Z, Zse, "GFF4", {"workers": run.workers})


def cmd_sample(run: RunConfig) -> list:
    cfg = run.config
    dom = _domain(cfg)
    kappa = _kappa(cfg)
    n = _n_samples(cfg, 20)
    construction = cfg.get("construction", "auto")
    if construction == "auto":
        construction = "GFF4" if abs(kappa - 4.0) < 1e-12 else "CLEKappa"
    weights = assembly.mixture_weights(dom, kappa)
    rows = []
    stat_rows = []
    for i in range(n):
        s = assembly.sample_mixture_curve(dom, kappa, weights, run.seed, i,
                                          construction)
        for k, v in enumerate(s.path.vertices):
            rows.append([i, k, v[0] * dom.mesh_h, v[1] * dom.mesh_h])
        st = assembly.curve_statistics(dom, s.path)
        stat_rows.append([i, "|".join(map(str, s.signature.signs)),
                          st["crossing"], st["maxdist"], st["length"]])
    pcsv = os.path.join(run.out_dir, "paths.csv")
    exports.write_csv(pcsv, ["sample", "k", "x", "y"], rows)
    pstat = os.path.join(run.out_dir, "path_stats.csv")
    exports.write_csv(pstat, ["sample", "signature", "crossing", "maxdist", "length"],
                      stat_rows)
    return [pcsv, pstat]


def cmd_verify_restriction(run: RunConfig) -> list:
    cfg = run.config
    dom = _domain(cfg)
    kappa = _kappa(cfg)
    n = _n_samples(cfg, 500)
    signs = cfg.get("signature")
    if signs is None:
        signs = [1] * dom.n_holes
    sig = TopologySignature("noncrossing", signs=tuple(int(v) for v in signs))
    azim = {int(k): float(v) for k, v in cfg.get("slit_azimuths", {}).items()}
    chain = energy.reference_chain(dom, sig, azimuths=azim or None)
    res = assembly.verify_restriction(dom, chain.final, kappa, n, run.seed,
                                      min_restricted=int(cfg.get("min_restricted", 50)))
    p = os.path.join(run.out_dir, "restriction_report.json")
    exports.write_json(p, res)
    return [p]


def cmd_soup(run: RunConfig) -> list:
    cfg = run.config
    dom = _domain(cfg)
    intensity = float(cfg.get("intensity", 0.5))
    n = _n_samples(cfg, 1)
    rows = []
    counts = []
    for i in range(n):
        lps = loops.sample_loop_soup(dom, intensity, run.seed,
                                     rng=gff.substream(run.seed, i))
        counts.append(len(lps))
        for k, lp in enumerate(lps):
            for j, v in enumerate(lp.vertices):
                rows.append([i, k, j, v[0] * dom.mesh_h, v[1] * dom.mesh_h])
    pcsv = os.path.join(run.out_dir, "loops.csv")
    exports.write_csv(pcsv, ["sample", "loop", "k", "x", "y"], rows)
    pjson = os.path.join(run.out_dir, "soup_stats.json")
    exports.write_json(pjson, {
        "intensity": intensity,
        "mean_count": float(np.mean(counts)),
        "expected_count": intensity * kernels.system(dom).logdet_green,
        "n_samples": n,
    })
    return [pcsv, pjson]


HANDLERS = {
    "kernels": cmd_kernels,
    "identities": cmd_identities,
    "winding": cmd_winding,
    "partition": cmd_partition,
    "sample": cmd_sample,
    "verify-restriction": cmd_verify_restriction,
    "soup": cmd_soup,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mcsle")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=False, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", default=".")
        if name == "winding":
            sp.add_argument("--p", type=float, default=None)
            sp.add_argument("--alpha", type=float, default=None)
    args = parser.parse_args(argv)

    t0 = time.time()
    try:
        cfg = {}
        if args.config:
            try:
                with open(args.config) as f:
                    cfg = json.load(f)
            except FileNotFoundError:
                raise ConfigError("config", f"no such file: {args.config}")
            except json.JSONDecodeError as e:
                raise ConfigError("config", f"invalid JSON: {e}")
        if getattr(args, "p", None) is not None:
            cfg["p"] = args.p
        if getattr(args, "alpha", None) is not None:
            cfg["alpha"] = args.alpha
        seed = args.seed
        if seed is None:
            seed = int(cfg.get("seed", os.environ.get("MCSLE_SEED", 0)))
        os.makedirs(args.out, exist_ok=True)
        run = RunConfig(args.command, cfg, seed, max(1, args.workers), args.out)
        outputs = HANDLERS[args.command](run)
        exports.write_manifest(args.out, cfg, seed, outputs,
                               wall_time=time.time() - t0)
        return 0
    except ConfigError as e:
        exports.write_json(os.path.join(args.out, "error.json"),
                           {"error": "ConfigError", "field": e.field,
                            "message": str(e)})
        print(json.dumps({"error": "ConfigError", "field": e.field,
                          "message": str(e)}), file=sys.stderr)
        return 2
    except McsleError as e:
        exports.write_json(os.path.join(args.out, "error.json"),
                           {"error": type(e).__name__, "message": str(e)})
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
