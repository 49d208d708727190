"""Deterministic CSV/JSON artifacts and a small order-preserving parallel map."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, columns, rows, chash, seed):
    """UTF-8 CSV with a provenance comment line, a header row and '.' decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_sha256={chash} seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rd = csv.reader(lines)
    header = next(rd)
    return header, [row for row in rd]


def write_json(path, payload, chash, seed):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(payload)
    body["config_sha256"] = chash
    body["seed"] = seed
    path.write_text(json.dumps(body, sort_keys=True, indent=2, default=_default) + "\n",
                    encoding="utf-8")
    return path


def write_sidecar(path, chash, seed, threads, extra=None):
    """Run metadata that must not influence artifact bodies (timestamps, host)."""
    meta = {
        "artifact": Path(path).name,
        "config_sha256": chash,
        "seed": seed,
        "threads": threads,
        "created_unix": time.time(),
        "python": sys.version.split()[0],
        "platform": platform.platform(),
    }
    if extra:
        meta.update(extra)
    side = Path(str(path) + ".meta.json")
    side.write_text(json.dumps(meta, sort_keys=True, indent=2, default=_default) + "\n",
                    encoding="utf-8")
    return side


def default_threads():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def parallel_map(fn, items, threads=1):
    """Ordered map; results do not depend on the number of threads."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
