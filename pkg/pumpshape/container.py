# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: binary container for diffusers and phase-screen stacks

Layout, all integers little-endian:

    magic      4 bytes  b"PSHP"
    version    u16
    kind       u8       1 diffuser, 2 volume diffuser, 3 screen stack
    hdr_len    u32
    header     hdr_len bytes of UTF-8 JSON
    arrays     float64 little-endian, in the order of header["arrays"]
"""
import hashlib
import json
import struct
from dataclasses import asdict
from typing import Union

import numpy as np

from .errors import ContainerError
from .field import Grid
from .media import DiffuserRealization, DiffuserSpec, VolumeDiffuser
from .turbulence import AtmosphereParams, PhaseScreen, PhaseScreenStack

MAGIC = b"PSHP"
VERSION = 1
_PREFIX = struct.Struct("<4sHBI")

KIND_DIFFUSER = 1
KIND_VOLUME = 2
KIND_STACK = 3

Storable = Union[DiffuserRealization, VolumeDiffuser, PhaseScreenStack]


def _grid_dict(grid: Grid) -> dict:
    return dict(n_points=grid.n_points, extent=grid.extent, ndim=grid.ndim)


def _spec_dict(spec):
    return asdict(spec) if spec is not None else None


def _diffuser_parts(r: DiffuserRealization, prefix: str):
    meta = dict(spec=_spec_dict(r.spec))
    arrays = {prefix + "opd": r.opd, prefix + "amplitude": r.amplitude}
    return meta, arrays


def to_bytes(obj: Storable) -> bytes:
    """Serialize a diffuser, volume diffuser or screen stack."""
    arrays = {}
    if isinstance(obj, DiffuserRealization):
        kind = KIND_DIFFUSER
        header, arrays = _diffuser_parts(obj, "")
        header["grid"] = _grid_dict(obj.grid)
    elif isinstance(obj, VolumeDiffuser):
        kind = KIND_VOLUME
        first, a1 = _diffuser_parts(obj.first, "first.")
        second, a2 = _diffuser_parts(obj.second, "second.")
        header = dict(grid=_grid_dict(obj.grid), gap=obj.gap, first=first, second=second)
        arrays = {**a1, **a2}
    elif isinstance(obj, PhaseScreenStack):
        kind = KIND_STACK
        grid = obj.screens[0].grid if obj.screens else None
        header = dict(
            grid=_grid_dict(grid) if grid else None,
            reference_wavelength=obj.reference_wavelength,
            atmosphere=_spec_dict(obj.atmosphere),
            screens=[dict(r0=s.r0, position=s.position) for s in obj.screens],
        )
        arrays = {"screen.%d" % i: s.phase for i, s in enumerate(obj.screens)}
    else:
        raise ContainerError("can't store %s" % type(obj).__name__)

    header["arrays"] = [dict(name=name, shape=list(arr.shape)) for name, arr in arrays.items()]
    raw_header = json.dumps(header, sort_keys=True).encode("utf8")
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in arrays.values())
    return _PREFIX.pack(MAGIC, VERSION, kind, len(raw_header)) + raw_header + body


def _read_arrays(header: dict, body: bytes) -> dict:
    out = {}
    offset = 0
    for desc in header["arrays"]:
        shape = tuple(desc["shape"])
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        if offset + size > len(body):
            raise ContainerError("container is truncated at array %r" % desc["name"])
        out[desc["name"]] = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        offset += size
    if offset != len(body):
        raise ContainerError("container has %d trailing bytes" % (len(body) - offset))
    return out


def _diffuser(grid: Grid, meta: dict, arrays: dict, prefix: str) -> DiffuserRealization:
    spec = DiffuserSpec(**meta["spec"]) if meta.get("spec") else None
    return DiffuserRealization(grid, arrays[prefix + "opd"], arrays[prefix + "amplitude"], spec)


def from_bytes(data: bytes) -> Storable:
    """Inverse of to_bytes."""
    if len(data) < _PREFIX.size:
        raise ContainerError("container is too short")
    magic, version, kind, hdr_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ContainerError("bad magic %r" % magic)
    if version != VERSION:
        raise ContainerError("unsupported container version %d" % version)
    start = _PREFIX.size
    try:
        header = json.loads(data[start : start + hdr_len].decode("utf8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise ContainerError("container header is not valid JSON") from e
    arrays = _read_arrays(header, data[start + hdr_len :])
    grid = Grid(**header["grid"]) if header.get("grid") else None

    if kind == KIND_DIFFUSER:
        return _diffuser(grid, header, arrays, "")
    if kind == KIND_VOLUME:
        return VolumeDiffuser(
            _diffuser(grid, header["first"], arrays, "first."),
            _diffuser(grid, header["second"], arrays, "second."),
            header["gap"],
        )
    if kind == KIND_STACK:
        atm = AtmosphereParams(**header["atmosphere"]) if header.get("atmosphere") else None
        screens = tuple(
            PhaseScreen(grid, arrays["screen.%d" % i], s["r0"], s["position"]) for i, s in enumerate(header["screens"])
        )
        return PhaseScreenStack(screens, header["reference_wavelength"], atm)
    raise ContainerError("unknown container kind %d" % kind)


def save(obj: Storable, path) -> str:
    """Write obj to path; returns the sha256 of the bytes written."""
    data = to_bytes(obj)
    with open(path, "wb") as f:
        f.write(data)
    return hashlib.sha256(data).hexdigest()


def load(path) -> Storable:
    with open(path, "rb") as f:
        return from_bytes(f.read())


def content_hash(obj: Storable) -> str:
    """sha256 of the container bytes, used to identify media in run manifests."""
    return hashlib.sha256(to_bytes(obj)).hexdigest()
