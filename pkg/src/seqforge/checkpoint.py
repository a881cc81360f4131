"""Self-describing checkpoint container.

Layout::

    b"SEQFORGE" | u32 version | u64 header length | JSON header | raw array bytes

The JSON header (sorted keys, UTF-8) holds the cascade plan, the step counter,
free-form metadata and an index of arrays ``{name, dtype, shape, offset,
nbytes}``. Learnable parameters and optimizer moments are little-endian
float32; bookkeeping buffers keep their integer dtype. Writing the same state
twice produces identical bytes.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .models import Cascade, CascadePlan

MAGIC = b"SEQFORGE"
VERSION = 1
NETS = ("g1", "d1", "g2", "d2")


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    plan: CascadePlan
    step: int
    arrays: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)


def _as_array(t: torch.Tensor) -> np.ndarray:
    a = t.detach().cpu().numpy()
    if np.issubdtype(a.dtype, np.floating):
        return a.astype("<f4")
    if a.dtype == np.uint8:
        return a
    return a.astype("<i8")


def write_container(path: str | Path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    index, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        raw = a.tobytes()
        index.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    head = json.dumps({**header, "arrays": index}, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)
    os.replace(tmp, path)


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    start = len(MAGIC) + struct.calcsize("<IQ")
    if data[: len(MAGIC)] != MAGIC or len(data) < start:
        raise CheckpointError(f"{path} is not a seqforge checkpoint")
    version, head_len = struct.unpack_from("<IQ", data, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header") from exc
    body = start + head_len
    arrays = {}
    for entry in header.pop("arrays"):
        lo = body + entry["offset"]
        buf = data[lo:lo + entry["nbytes"]]
        if len(buf) != entry["nbytes"]:
            raise CheckpointError(f"{path} is truncated")
        arrays[entry["name"]] = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
    return header, arrays


def save_checkpoint(
    path: str | Path,
    cascade: Cascade,
    optimizers: dict[str, torch.optim.Optimizer] | None = None,
    step: int = 0,
    meta: dict | None = None,
) -> Path:
    arrays = {f"model/{k}": _as_array(v) for k, v in cascade.state_dict().items()}
    arrays["rng/noise"] = cascade.noise.generator.get_state().numpy().copy()
    groups = {}
    for net, opt in (optimizers or {}).items():
        sd = opt.state_dict()
        groups[net] = sd["param_groups"]
        for idx, slots in sd["state"].items():
            for slot, value in slots.items():
                arrays[f"optim/{net}/{idx}/{slot}"] = _as_array(torch.as_tensor(value))
    header = {"plan": cascade.plan.to_dict(), "step": int(step), "meta": meta or {}, "param_groups": groups}
    write_container(path, header, arrays)
    return Path(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    header, arrays = read_container(path)
    meta = dict(header.get("meta", {}))
    meta["param_groups"] = header.get("param_groups", {})
    return Checkpoint(CascadePlan.from_dict(header["plan"]), int(header["step"]), arrays, meta)


def restore_cascade(ckpt: Checkpoint, cascade: Cascade | None = None) -> Cascade:
    cascade = cascade or Cascade(ckpt.plan)
    if cascade.plan != ckpt.plan:
        raise CheckpointError("checkpoint plan does not match the cascade")
    own = cascade.state_dict()
    state = {}
    for key, ref in own.items():
        name = f"model/{key}"
        if name not in ckpt.arrays:
            raise CheckpointError(f"checkpoint lacks {name}")
        state[key] = torch.from_numpy(ckpt.arrays[name].copy()).to(ref.dtype)
    cascade.load_state_dict(state)
    if "rng/noise" in ckpt.arrays:
        cascade.noise.generator.set_state(torch.from_numpy(ckpt.arrays["rng/noise"].copy()))
    return cascade


def restore_optimizers(ckpt: Checkpoint, optimizers: dict[str, torch.optim.Optimizer]) -> None:
    groups = ckpt.meta.get("param_groups", {})
    for net, opt in optimizers.items():
        if net not in groups:
            raise CheckpointError(f"checkpoint has no optimizer state for {net}")
        state: dict[int, dict] = {}
        prefix = f"optim/{net}/"
        for name, arr in ckpt.arrays.items():
            if name.startswith(prefix):
                idx, slot = name[len(prefix):].split("/")
                value = torch.from_numpy(arr.copy())
                state.setdefault(int(idx), {})[slot] = value
        param_groups = []
        for g in groups[net]:
            g = dict(g)
            if "betas" in g:
                g["betas"] = tuple(g["betas"])
            param_groups.append(g)
        opt.load_state_dict({"state": state, "param_groups": param_groups})
