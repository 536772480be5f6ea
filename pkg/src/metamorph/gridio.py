"""Raw binary grid files: row-major float64 with a JSON shape sidecar.

A grid file ``name.f64`` holds the C-order float64 bytes of the array and
``name.f64.json`` records shape, dtype and order, keeping the format
language-neutral and diffable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def write_grid(path, array: np.ndarray) -> None:
    path = Path(path)
    arr = np.ascontiguousarray(array, dtype=np.float64)
    path.write_bytes(arr.tobytes(order="C"))
    sidecar = {"shape": list(arr.shape), "dtype": "float64", "order": "C"}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def read_grid(path) -> np.ndarray:
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not path.exists():
        raise FileNotFoundError(f"grid file not found: {path}")
    if not sidecar_path.exists():
        raise FileNotFoundError(f"grid sidecar not found: {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    if meta.get("dtype") != "float64" or meta.get("order") != "C":
        raise ValueError(f"unsupported grid encoding in {sidecar_path}")
    data = np.frombuffer(path.read_bytes(), dtype=np.float64)
    shape = tuple(meta["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"grid file size does not match sidecar shape {shape}")
    return data.reshape(shape).copy()
