# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

import struct

import numpy as np
import pytest

from pumpshape.container import MAGIC, content_hash, from_bytes, load, save, to_bytes
from pumpshape.errors import ContainerError
from pumpshape.field import Grid
from pumpshape.media import VolumeDiffuser
from pumpshape.turbulence import AtmosphereParams, synth_screen_stack

from tests.helpers import PUMP, cell_grid, diffuser


def _same_diffuser(a, b):
    assert a.grid == b.grid
    assert a.spec == b.spec
    assert np.array_equal(a.opd, b.opd)
    assert np.array_equal(a.amplitude, b.amplitude)


def test_diffuser_container():
    r = diffuser(cell_grid(128), 3, loss_strength=0.2)
    data = to_bytes(r)
    assert data[:4] == MAGIC
    _same_diffuser(from_bytes(data), r)


def test_volume_container():
    grid = cell_grid(64)
    vol = VolumeDiffuser(diffuser(grid, 1), diffuser(grid, 2), 2e-3)
    back = from_bytes(to_bytes(vol))
    assert back.gap == 2e-3
    _same_diffuser(back.first, vol.first)
    _same_diffuser(back.second, vol.second)


def test_stack_container():
    stack = synth_screen_stack(Grid(32, 1.0, 2), AtmosphereParams(1e-15), 1e3, PUMP, n_screens=2, seed=4)
    back = from_bytes(to_bytes(stack))
    assert back.atmosphere == stack.atmosphere
    assert back.reference_wavelength == PUMP
    assert [s.position for s in back.screens] == [s.position for s in stack.screens]
    for a, b in zip(back.screens, stack.screens):
        assert a.grid == b.grid
        assert a.r0 == b.r0
        assert np.array_equal(a.phase, b.phase)


def test_bad_containers():
    data = to_bytes(diffuser(cell_grid(64), 0))
    with pytest.raises(ContainerError):
        from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ContainerError, match="truncated"):
        from_bytes(data[:-8])
    with pytest.raises(ContainerError, match="trailing"):
        from_bytes(data + b"\0" * 8)
    with pytest.raises(ContainerError):
        from_bytes(data[:3])
    with pytest.raises(ContainerError, match="version"):
        from_bytes(data[:4] + struct.pack("<H", 99) + data[6:])
    with pytest.raises(ContainerError):
        to_bytes("not a medium")


def test_save_and_hash(tmp_path):
    r = diffuser(cell_grid(64), 5)
    path = tmp_path / "d.pshp"
    digest = save(r, path)
    assert digest == content_hash(r)
    _same_diffuser(load(path), r)
    assert content_hash(diffuser(cell_grid(64), 5)) == digest
    assert content_hash(diffuser(cell_grid(64), 6)) != digest
