"""Deterministic CSV/JSON writers and the run manifest."""

from __future__ import annotations

import hashlib
import json
import os


def fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config, seed, outputs, wall_time=None) -> None:
    """manifest.json is byte-deterministic; wall time goes to run_info.json."""
    manifest = {
        "config": config,
        "seed": seed,
        "outputs": {os.path.basename(p): sha256_file(p) for p in outputs},
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    if wall_time is not None:
        write_json(os.path.join(out_dir, "run_info.json"),
                   {"wall_time_s": wall_time})
