"""Canonical CSV/JSON writers for run artifacts.

Floats are emitted with ``repr`` (shortest round-trip decimal, at most 17
significant digits) and JSON keys are sorted, so a rerun with the same
config and seed reproduces every byte.  No timestamps: provenance lives in
the embedded resolved config.
"""

import json
import os

__all__ = ["write_csv", "write_json", "ensure_outdir"]


def _fmt(x):
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _jsonable(x):
    if hasattr(x, "item"):  # numpy scalars
        return x.item()
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"not JSON-serializable: {type(x)}")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=_jsonable)
        fh.write("\n")


def ensure_outdir(path):
    os.makedirs(path, exist_ok=True)
    return path
