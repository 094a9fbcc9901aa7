"""Checkpoints, CSV tables and experiment manifests.

Floats are always written with 17 significant digits, which round-trips every
IEEE double exactly. Nothing written here depends on time or environment, so
identical inputs give byte-identical files.

Checkpoint schema (JSON, UTF-8)::

    {"format": "bnpartition-checkpoint", "format_version": 1,
     "activation": {"name", "breakpoints", "slopes", "intercepts"},
     "layers": [{"W": [[...], ...], "b": [...], "bn": {...}}, ...],  # hidden blocks, then output
     "metadata": {...}, "manifest": "<hash>" | null}

``bn`` holds gamma, beta, eps, momentum, running_mean and running_var and is
omitted for blocks without BN and for the output layer.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from typing import Optional

import numpy as np

from . import FORMAT_VERSION, __version__
from .batchnorm import BatchNormSlot
from .cpa import CpaActivation, HiddenBlock, LinearLayer, Network

CHECKPOINT_FORMAT = "bnpartition-checkpoint"


def fmt(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"refusing to serialize non-finite value {x!r}")
    s = format(x, ".17g")
    return s if any(ch in s for ch in ".en") else s + ".0"


def _dump(obj, indent: int = 0) -> str:
    pad = " " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        inner = ",\n".join(pad + "  " + _dump(v, indent + 2) for v in obj)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = ",\n".join(f"{pad}  {json.dumps(str(k))}: {_dump(v, indent + 2)}" for k, v in obj.items())
        return "{\n" + inner + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return _dump(obj) + "\n"


def write_text(path, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# --- checkpoints ---------------------------------------------------------------

def network_to_dict(net: Network, metadata: Optional[dict] = None, manifest: Optional[str] = None) -> dict:
    layers = []
    for blk in net.blocks:
        rec = {"W": blk.linear.W, "b": blk.linear.b}
        if blk.bn is not None:
            bn = blk.bn
            rec["bn"] = {"gamma": bn.gamma, "beta": bn.beta, "eps": bn.eps, "momentum": bn.momentum,
                         "running_mean": bn.running_mean, "running_var": bn.running_var}
        layers.append(rec)
    layers.append({"W": net.output.W, "b": net.output.b})
    act = net.activation
    return {
        "format": CHECKPOINT_FORMAT,
        "format_version": int(FORMAT_VERSION),
        "activation": {"name": act.name, "breakpoints": list(act.breakpoints), "slopes": list(act.slopes),
                       "intercepts": list(act.intercepts)},
        "layers": layers,
        "metadata": dict(metadata or {}),
        "manifest": manifest,
    }


def network_from_dict(d: dict) -> Network:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a bnpartition checkpoint")
    a = d["activation"]
    act = CpaActivation(a["breakpoints"], a["slopes"], a["intercepts"], a.get("name", "cpa"))
    recs = d["layers"]
    if len(recs) < 2:
        raise ValueError("checkpoint needs at least one hidden layer and an output layer")
    blocks = []
    for rec in recs[:-1]:
        bn = None
        if rec.get("bn") is not None:
            s = rec["bn"]
            bn = BatchNormSlot(s["gamma"], s["beta"], s["running_mean"], s["running_var"], s["eps"], s["momentum"])
        blocks.append(HiddenBlock(LinearLayer(np.array(rec["W"], float), np.array(rec["b"], float)), bn))
    out = recs[-1]
    return Network(blocks, LinearLayer(np.array(out["W"], float), np.array(out["b"], float)), act)


def save_checkpoint(path, net: Network, metadata: Optional[dict] = None, manifest: Optional[str] = None):
    write_text(path, dumps(network_to_dict(net, metadata, manifest)))


def load_checkpoint(path):
    """``(network, metadata)``."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return network_from_dict(d), d.get("metadata", {})


# --- CSV -----------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def write_csv(path, header, rows, manifest: Optional[str] = None):
    """Write rows with an optional leading ``# manifest: <hash>`` comment line."""
    lines = []
    if manifest is not None:
        lines.append(f"# manifest: {manifest}")
    lines.append(",".join(header))
    for row in rows:
        cells = [_cell(v) for v in row]
        lines.append(",".join(f'"{c}"' if ("," in c or '"' in c or " " in c) else c for c in cells))
    write_text(path, "\n".join(lines) + "\n")


def read_csv(path):
    """``(header, rows)`` with comment lines skipped; values stay strings."""
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        rows = list(reader)
    return rows[0], rows[1:]


def csv_manifest(path) -> Optional[str]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return first.split(":", 1)[1].strip() if first.startswith("# manifest:") else None


def write_matrix_csv(path, X):
    """Headerless numeric CSV, one row per sample (reference batches)."""
    X = np.atleast_2d(np.asarray(X, float))
    write_text(path, "".join(",".join(fmt(v) for v in row) + "\n" for row in X))


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ValueError(f"{path} holds no rows")
    return np.array(rows)


# --- manifests -----------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in sorted(v.items())}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return v


OUTPUT_KEYS = ("out", "csv", "svg", "manifest", "threads", "config")


def make_manifest(subcommand: str, args: dict, inputs=()) -> dict:
    """Manifest dict with content digests of input files and its own hash under ``"hash"``.

    Output locations and the thread count are left out entirely: they do not
    change results, and keeping them out lets reruns into a different
    directory produce byte-identical files, manifest included.
    """
    args = _jsonable(args)
    # input files enter by content digest; their directories are irrelevant
    for p in inputs:
        full, base = str(p), os.path.basename(str(p))
        args = {k: v.replace(full, base) if isinstance(v, str) else v for k, v in args.items()}
    body = {
        "subcommand": subcommand,
        "args": {k: v for k, v in args.items() if k not in OUTPUT_KEYS},
        "inputs": {os.path.basename(str(p)): file_digest(p) for p in inputs},
        "tool_version": __version__,
        "format_version": FORMAT_VERSION,
    }
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
    body["hash"] = hashlib.sha256(canon.encode()).hexdigest()[:16]
    return body


def write_manifest(path, manifest: dict, outputs=()):
    m = dict(manifest)
    m["outputs"] = sorted(os.path.basename(str(p)) for p in outputs)
    write_text(path, json.dumps(m, sort_keys=True, indent=2) + "\n")
