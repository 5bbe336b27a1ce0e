"""Binary file formats: EVF field volumes, CKPT checkpoints, PGM slices.

Everything is little-endian and bit-exact across platforms. Writes are
atomic (temp file + rename). Checksums are 8-byte BLAKE2b digests.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    SpecMismatchError,
    TruncatedFileError,
    ValidationError,
)
from .fdtd import FieldVolume

EVF_MAGIC = b"EVF1"
CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

# EVF header after magic: dims (3 x u32), voxel_size, time, r, n (f64), dtype u8
_EVF_HEAD = struct.Struct("<3I4dB")


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def _atomic_write(path, blob: bytes):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# EVF field volumes


def write_volume(volume: FieldVolume, path) -> None:
    data = np.asarray(volume.data)
    if data.ndim != 3:
        raise ValidationError("EVF stores 3D arrays only")
    if data.dtype not in _DTYPE_TAGS:
        data = data.astype(np.float32)
    tag = _DTYPE_TAGS[data.dtype]
    r, n = volume.params
    head = _EVF_HEAD.pack(
        *data.shape, float(volume.voxel_size), float(volume.time), float(r), float(n), tag
    )
    # x-fastest payload ordering: transpose so the first axis varies fastest
    payload = np.ascontiguousarray(data.T.astype(_DTYPES[tag])).tobytes()
    _atomic_write(path, EVF_MAGIC + head + payload + _checksum(payload))


def read_volume(path) -> FieldVolume:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != EVF_MAGIC:
        raise BadMagicError(f"{path}: not an EVF file")
    off = 4 + _EVF_HEAD.size
    if len(blob) < off:
        raise TruncatedFileError(f"{path}: truncated EVF header")
    dx, dy, dz, voxel, time, r, n, tag = _EVF_HEAD.unpack(blob[4:off])
    if tag not in _DTYPES:
        raise ValidationError(f"{path}: unknown dtype tag {tag}")
    dt = _DTYPES[tag]
    nbytes = dx * dy * dz * dt.itemsize
    if len(blob) < off + nbytes + 8:
        raise TruncatedFileError(f"{path}: truncated EVF payload")
    payload = blob[off : off + nbytes]
    if _checksum(payload) != blob[off + nbytes : off + nbytes + 8]:
        raise ChecksumError(f"{path}: EVF payload checksum mismatch")
    data = np.frombuffer(payload, dtype=dt).reshape(dz, dy, dx).T.copy()
    return FieldVolume(data=data, time=time, params=(r, n), voxel_size=voxel)


# ---------------------------------------------------------------------------
# CKPT checkpoints


def write_checkpoint(path, arch_dict, norm_dict, seed, tensors) -> None:
    """tensors: ordered mapping name -> numpy array (stored as f32)."""
    index = []
    blobs = []
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        index.append({"name": name, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr).tobytes())
    meta = json.dumps(
        {"arch": arch_dict, "norm": norm_dict, "seed": seed, "tensors": index},
        sort_keys=True,
    ).encode()
    body = (
        struct.pack("<II", CKPT_VERSION, len(meta)) + meta + b"".join(blobs)
    )
    blob = CKPT_MAGIC + body
    _atomic_write(path, blob + _checksum(blob))


def read_checkpoint(path):
    """Returns (arch_dict, norm_dict, seed, {name: float32 array})."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != CKPT_MAGIC:
        raise BadMagicError(f"{path}: not a CKPT file")
    if len(blob) < 12 + 8:
        raise TruncatedFileError(f"{path}: truncated CKPT header")
    if _checksum(blob[:-8]) != blob[-8:]:
        raise ChecksumError(f"{path}: CKPT checksum mismatch")
    version, meta_len = struct.unpack("<II", blob[4:12])
    if version != CKPT_VERSION:
        raise SpecMismatchError(f"{path}: unsupported CKPT version {version}")
    off = 12
    if len(blob) - 8 < off + meta_len:
        raise TruncatedFileError(f"{path}: truncated CKPT metadata")
    meta = json.loads(blob[off : off + meta_len])
    off += meta_len
    tensors = {}
    for rec in meta["tensors"]:
        shape = tuple(rec["shape"])
        nbytes = int(np.prod(shape)) * 4
        if len(blob) - 8 < off + nbytes:
            raise TruncatedFileError(f"{path}: truncated tensor {rec['name']}")
        tensors[rec["name"]] = (
            np.frombuffer(blob[off : off + nbytes], dtype="<f4").reshape(shape).copy()
        )
        off += nbytes
    return meta["arch"], meta["norm"], meta["seed"], tensors


# ---------------------------------------------------------------------------
# PGM slice export


def export_slice(volume: FieldVolume, axis, index, path, field_scale=None) -> None:
    """8-bit grayscale PGM of one mid-plane; 0 field maps to gray 128."""
    data = np.asarray(volume.data)
    ax = {"x": 0, "y": 1, "z": 2}.get(axis, axis)
    if ax not in (0, 1, 2):
        raise ValidationError(f"axis must be x, y or z, got {axis!r}")
    if index == "mid":
        index = data.shape[ax] // 2
    index = int(index)
    if not 0 <= index < data.shape[ax]:
        raise ValidationError(
            f"slice index {index} out of bounds for axis of size {data.shape[ax]}"
        )
    plane = np.take(data, index, axis=ax)
    if field_scale is None:
        field_scale = float(np.max(np.abs(data))) or 1.0
    img = np.clip(np.round(127.5 + plane / field_scale * 127.5), 0, 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    _atomic_write(path, header + img.tobytes())
