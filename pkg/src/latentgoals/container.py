"""Versioned JSON container used by all model/state serialization.

Floats are written with Python's shortest round-trip repr, so a text
round trip restores every float64 bit-exactly.
"""

import json

import numpy as np

from .errors import FormatError


def matrix_to_json(m):
    """Nested lists of floats for a 1-D or 2-D array."""
    return np.asarray(m, dtype=float).tolist()


def matrix_from_json(data, shape=None):
    arr = np.asarray(data, dtype=float)
    if shape is not None and arr.shape != tuple(shape):
        raise FormatError(f"expected array of shape {shape}, got {arr.shape}")
    return arr


def save(path, kind, version, payload):
    doc = {"format": "latentgoals", "kind": kind, "version": version}
    doc.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load(path, kind, version):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not a valid container file: {exc}") from exc
    if doc.get("format") != "latentgoals" or doc.get("kind") != kind:
        raise FormatError(f"{path}: expected a '{kind}' container")
    if doc.get("version") != version:
        raise FormatError(
            f"{path}: unsupported {kind} version {doc.get('version')!r}"
        )
    return doc
