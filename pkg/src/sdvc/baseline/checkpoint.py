"""Model checkpoints: a small binary container of named float32 tensors plus a JSON sidecar.

Layout (little endian)::

    magic "SDVCCKPT" | u32 version | u32 n_tensors
    per tensor: u16 name_len | name (utf-8) | u8 ndim | u32 * ndim shape | float32 data
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"SDVCCKPT"
VERSION = 1


def save_tensors(path: str | Path, tensors: dict[str, torch.Tensor]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(tensors)))
        for name in sorted(tensors):
            arr = tensors[name].detach().cpu().numpy().astype("<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_tensors(path: str | Path) -> dict[str, torch.Tensor]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    version, n = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    out = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + ln].decode("utf-8")
        pos += ln
        (ndim,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        out[name] = torch.from_numpy(arr.astype(np.float32))
    return out


def save_model(path: str | Path, model: torch.nn.Module, meta: dict) -> None:
    """Write ``path`` (tensors) and ``path.json`` (config echo)."""
    path = Path(path)
    save_tensors(path, model.state_dict())
    Path(str(path) + ".json").write_text(json.dumps({"format_version": VERSION, **meta}, indent=2, sort_keys=True) + "\n")


def load_meta(path: str | Path) -> dict:
    return json.loads(Path(str(path) + ".json").read_text())


def load_into(path: str | Path, model: torch.nn.Module) -> torch.nn.Module:
    tensors = load_tensors(path)
    dtype = next(model.parameters()).dtype
    model.load_state_dict({k: v.to(dtype) for k, v in tensors.items()})
    return model
