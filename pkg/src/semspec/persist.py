"""Plain-text model dumps.

Layout::

    semspec-model 1
    config <one-line JSON>
    array <name> <rows> <cols>
    <row of space-separated floats>
    ...
    end

Floats are written with ``repr`` so they round-trip exactly; 1-d arrays are
stored as a single row. Discriminators are training-only and not dumped.
"""

import json

import numpy as np

from .config import HyperParams
from .dataset import atomic_write_text
from .errors import DataError
from .trainer import SpecializationModel

MAGIC = "semspec-model"
VERSION = 1


def dumps_model(model: SpecializationModel, config: dict) -> str:
    lines = [f"{MAGIC} {VERSION}", "config " + json.dumps(config, sort_keys=True)]
    lines.append(f"adam_step {model.adam.step}")
    for name, arr in model.state_arrays().items():
        mat = np.atleast_2d(arr)
        lines.append(f"array {name} {arr.ndim} {mat.shape[0]} {mat.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in mat)
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_model(model, config, path):
    atomic_write_text(path, dumps_model(model, config))


def _parse(text):
    lines = text.splitlines()
    if not lines or lines[0].split() != [MAGIC, str(VERSION)]:
        raise DataError("not a semspec model dump (bad header)", line=1)
    if not lines[1].startswith("config "):
        raise DataError("missing config line", line=2)
    config = json.loads(lines[1][len("config "):])
    step = int(lines[2].split()[1])
    arrays = {}
    i = 3
    while i < len(lines) and lines[i] != "end":
        head = lines[i].split()
        if len(head) != 5 or head[0] != "array":
            raise DataError(f"expected an array block, got {lines[i][:40]!r}", line=i + 1)
        name, ndim, rows, cols = head[1], int(head[2]), int(head[3]), int(head[4])
        block = lines[i + 1:i + 1 + rows]
        try:
            mat = np.array([[float(v) for v in row.split()] for row in block], dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"bad number in {name} ({exc})", line=i + 2) from None
        if mat.shape != (rows, cols):
            raise DataError(f"array {name} has shape {mat.shape}, header says {(rows, cols)}", line=i + 1)
        arrays[name] = mat[0] if ndim == 1 else mat
        i += 1 + rows
    if i >= len(lines):
        raise DataError("truncated model dump (no end marker)")
    return config, step, arrays


def loads_model(text):
    """Rebuild ``(model, config)`` from a dump."""
    config, step, arrays = _parse(text)
    hp = HyperParams(**config["hp"])
    model = SpecializationModel(config["dim"], config["n_classes"], hp)
    for name, target in model.state_arrays().items():
        if name not in arrays or arrays[name].shape != target.shape:
            raise DataError(f"model dump lacks a matching array {name!r}")
        target[...] = arrays[name]
    for name in model.params():
        if f"adam.m.{name}" in arrays:
            model.adam.m[name] = arrays[f"adam.m.{name}"]
            model.adam.v[name] = arrays[f"adam.v.{name}"]
    model.adam.step = step
    return model, config


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
