"""Small shared helpers: seed derivation, exact-float JSON, fingerprints."""

import hashlib
import json
import math
import os
import zlib

import numpy as np


def derive_seed(base, *keys):
    """Derive a 32-bit child seed from a base seed and a path of keys.

    Keys may be ints or strings; strings are hashed with crc32 so the result
    is stable across processes (no reliance on Python's salted ``hash``).
    """
    entropy = [int(base) & 0xFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            entropy.append(zlib.crc32(k.encode()))
        else:
            entropy.append(int(k) & 0xFFFFFFFF)
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1)[0])


def rng(base, *keys):
    return np.random.default_rng(derive_seed(base, *keys))


def _fmt_float(v):
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    s = format(v, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dumps17(obj, indent=1, _level=0):
    """JSON text with every float written to 17 significant digits.

    Non-finite floats are written as the strings "inf", "-inf", "nan" and
    turned back into floats by :func:`loads17`.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k))}: {dumps17(v, indent, _level + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps17(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps17(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _revive(obj):
    if isinstance(obj, dict):
        return {k: _revive(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_revive(v) for v in obj]
    if obj in ("inf", "-inf", "nan"):
        return float(obj)
    return obj


def loads17(text):
    return _revive(json.loads(text))


def fingerprint(obj):
    """Short stable hash of a JSON-able configuration."""
    return hashlib.sha256(dumps17(obj).encode()).hexdigest()[:16]


def worker_count(default=1):
    """Worker processes for embarrassingly parallel loops (``MHSP_WORKERS``)."""
    raw = os.environ.get("MHSP_WORKERS", "")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default


def parallel_map(fn, items, workers=None):
    """Ordered map, in worker processes when more than one is configured."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
