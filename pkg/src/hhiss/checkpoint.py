"""Model checkpoints as ``.npz`` archives with a JSON header.

Archives are written with fixed zip timestamps so that identical models give
byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .net import NetworkArch, NetworkParams

MAGIC = "hhiss-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    params: NetworkParams
    method: str
    registry_hash: str
    feature_names: list[str]
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _arrays(params: NetworkParams) -> dict[str, np.ndarray]:
    out = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"W{i}"] = w
        out[f"b{i}"] = b
        if params.mask is not None:
            out[f"M{i}"] = params.mask[i]
    if params.input_shift is not None:
        out["input_shift"] = params.input_shift
        out["input_scale"] = params.input_scale
    return out


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    p = ckpt.params
    header = {
        "magic": MAGIC,
        "version": VERSION,
        "method": ckpt.method,
        "layer_sizes": list(p.arch.layer_sizes),
        "dropout_rate": p.arch.dropout_rate,
        "has_mask": p.mask is not None,
        "registry_hash": ckpt.registry_hash,
        "feature_names": list(ckpt.feature_names),
        "config": ckpt.config,
        "extra": ckpt.extra,
    }
    entries = {"header.json": json.dumps(header, sort_keys=True).encode()}
    for name, a in _arrays(p).items():
        buf = io.BytesIO()
        np.lib.format.write_array(buf, np.ascontiguousarray(a), allow_pickle=False)
        entries[f"{name}.npy"] = buf.getvalue()
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, entries[name])
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json"))
            if header.get("magic") != MAGIC:
                raise DataError(f"{path} is not a checkpoint")
            if header.get("version") != VERSION:
                raise DataError(f"{path}: unsupported checkpoint version {header.get('version')}")
            arrays = {
                n[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(n)), allow_pickle=False)
                for n in zf.namelist()
                if n.endswith(".npy")
            }
    except (OSError, KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    arch = NetworkArch(tuple(header["layer_sizes"]), header["dropout_rate"])
    n = arch.n_layers
    params = NetworkParams(
        arch,
        [arrays[f"W{i}"] for i in range(n)],
        [arrays[f"b{i}"] for i in range(n)],
        [arrays[f"M{i}"].astype(bool) for i in range(n)] if header["has_mask"] else None,
        arrays.get("input_shift"),
        arrays.get("input_scale"),
    )
    return Checkpoint(
        params, header["method"], header["registry_hash"], header["feature_names"], header["config"], header["extra"]
    )
