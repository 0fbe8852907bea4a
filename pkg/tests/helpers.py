# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

import numpy as np

from pumpshape.field import Grid, ComplexField
from pumpshape.media import DiffuserSpec, synth_diffuser

PUMP = 404e-9
PHOTON = 808e-9
D = 50e-6


def cell_grid(n=256, samples_per_cell=8, ndim=1):
    return Grid(n, n * D / samples_per_cell, ndim)


def gaussian(grid, waist, wavelength=PUMP):
    return ComplexField(grid, np.exp(-grid.radius2() / waist**2), wavelength).normalized()


def flat_top(grid, fraction=0.75, wavelength=PUMP):
    values = np.abs(grid.coords()) <= fraction * grid.extent / 2
    return ComplexField(grid, values.astype(complex), wavelength).normalized()


def random_field(grid, seed=0, wavelength=PUMP):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return ComplexField(grid, values, wavelength)


def diffuser(grid, seed=0, photon_phase_rms=2.0, loss_strength=0.0):
    opd = photon_phase_rms * PHOTON / (2 * np.pi)
    return synth_diffuser(DiffuserSpec(D, opd, loss_strength, seed), grid)


def small_fig4c(**params):
    """A fig4c config small enough for unit tests."""
    p = dict(K_values=[1, 200], seeds=2, n_points=320, samples_per_cell=16)
    p.update(params)
    return {"scenario_id": "fig4c_corr_vs_K", "master_seed": 1, "parameters": p}
