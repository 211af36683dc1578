"""Deterministic CSV/JSON emission.

Floats are serialized with Python's shortest round-trip repr, so two runs
with the same configuration produce byte-identical files (headers carry
the configuration echo, never timestamps or paths).
"""

from __future__ import annotations

import io
import json

import numpy as np


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return "nan"
    return repr(float(v))


def header_lines(metadata):
    lines = []
    for key in sorted(metadata):
        lines.append(f"# {key} = {json.dumps(metadata[key], sort_keys=True)}")
    return lines


def write_csv(target, columns, metadata=None):
    """Write columns = [(name, values), ...] to a path or file object."""
    names = [name for name, _ in columns]
    arrays = [np.asarray(vals) for _, vals in columns]
    length = len(arrays[0]) if arrays else 0
    body = []
    if metadata:
        body.extend(header_lines(metadata))
    body.append(",".join(names))
    for i in range(length):
        body.append(",".join(format_value(col[i]) for col in arrays))
    text = "\n".join(body) + "\n"
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        target.write(text)
    return text


def write_json(target, payload):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        target.write(text)
    return text
