"""Versioned binary checkpoint container for policy parameters.

Layout: 8-byte magic, uint32 format version, uint32 header length, UTF-8
JSON header (array names/shapes in order, normalizer count, task metadata,
config hash), then the raw little-endian float32 array blobs in header
order.  Round trips are bitwise exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Dict, Optional, Tuple

import numpy as np

from .ppo import PolicyParams
from .tasks import TaskSpec

MAGIC = b"FOOSCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def config_hash(spec: TaskSpec) -> str:
    return hashlib.sha256(spec.to_json().encode()).hexdigest()[:16]


def _array_order(params: PolicyParams):
    return params.weight_keys() + ["norm_mean", "norm_var"]


def _get_array(params: PolicyParams, name: str) -> np.ndarray:
    if name == "norm_mean":
        return params.norm_mean
    if name == "norm_var":
        return params.norm_var
    return params.weights[name]


def save_checkpoint(
    path,
    params: PolicyParams,
    meta: Optional[Dict] = None,
    spec: Optional[TaskSpec] = None,
):
    arrays = []
    blobs = []
    for name in _array_order(params):
        a = np.ascontiguousarray(_get_array(params, name), dtype="<f4")
        arrays.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "hidden": list(params.hidden),
        "obs_dim": params.obs_dim,
        "act_dim": params.act_dim,
        "norm_count": params.norm_count,
        "arrays": arrays,
        "meta": meta or {},
        "config_hash": config_hash(spec) if spec is not None else None,
    }
    hdr = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(hdr)))
        f.write(hdr)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(
    path, spec: Optional[TaskSpec] = None
) -> Tuple[PolicyParams, Dict]:
    """Read a checkpoint; with a task spec given, reject mismatched files."""
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise CheckpointError("not a policy checkpoint (bad magic)")
        version, hdr_len = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        header = json.loads(f.read(hdr_len).decode())
        weights = {}
        norm = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            a = np.frombuffer(f.read(count * 4), dtype="<f4").reshape(shape)
            if entry["name"] in ("norm_mean", "norm_var"):
                norm[entry["name"]] = a.copy()
            else:
                weights[entry["name"]] = a.copy()
    params = PolicyParams(
        weights=weights,
        norm_mean=norm["norm_mean"],
        norm_var=norm["norm_var"],
        norm_count=float(header["norm_count"]),
        hidden=tuple(header["hidden"]),
    )
    if spec is not None:
        if params.obs_dim != _expected_obs_dim(spec):
            raise CheckpointError(
                f"checkpoint obs dim {params.obs_dim} does not match task "
                f"({_expected_obs_dim(spec)})"
            )
        want = config_hash(spec)
        have = header.get("config_hash")
        if have is not None and have != want:
            raise CheckpointError("checkpoint was trained on a different task config")
    return params, header["meta"]


def _expected_obs_dim(spec: TaskSpec) -> int:
    from .tasks import observation_dim

    return observation_dim(spec)
