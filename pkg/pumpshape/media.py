# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: random media, diffusers and the memory effect"""
import logging as log
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import GridError, FieldError, StatisticsError
from .field import (
    POSITION,
    Grid,
    ComplexField,
    far_field,
    intensity,
    pearson_correlation,
    propagate_angular_spectrum,
    centered_fft,
    centered_ifft,
)
from .spdc import JointAmplitude, apply_diffuser_joint, propagate_joint

DEFAULT_PHOTON_WAVELENGTH = 808e-9
DEFAULT_PUMP_WAVELENGTH = 404e-9


@dataclass(frozen=True)
class DiffuserSpec:
    """Statistics of a thin random diffuser.

    The OPD is a Gaussian random field with autocorrelation exp(-r^2/d^2). Amplitude
    transmission is uniform on [1 - s, 1], constant over each d x d cell.
    """

    coherence_length: float
    opd_rms: float = 2 * DEFAULT_PHOTON_WAVELENGTH
    loss_strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.coherence_length > 0:
            raise ValueError("coherence length must be positive")
        if self.opd_rms < 0:
            raise ValueError("opd_rms must be nonnegative")
        if not 0 <= self.loss_strength <= 1:
            raise ValueError("loss strength must be in [0, 1]")

    def phase_rms(self, wavelength: float) -> float:
        return 2 * np.pi * self.opd_rms / wavelength


@dataclass(frozen=True)
class DiffuserRealization:
    """One frozen diffuser: OPD map in meters and amplitude transmission map."""

    grid: Grid
    opd: np.ndarray
    amplitude: np.ndarray
    spec: Optional[DiffuserSpec] = None

    def __post_init__(self):
        for name in ("opd", "amplitude"):
            values = np.asarray(getattr(self, name), dtype=float)
            if values.shape != self.grid.shape:
                raise GridError("%s shape %s doesn't match grid %s" % (name, values.shape, self.grid.shape))
            view = values.view()
            view.flags.writeable = False
            object.__setattr__(self, name, view)
        if np.any(self.amplitude < 0) or np.any(self.amplitude > 1):
            raise FieldError("amplitude transmission must lie in [0, 1]")


@dataclass(frozen=True)
class VolumeDiffuser:
    """Two thin diffusers separated by a free-space gap."""

    first: DiffuserRealization
    second: DiffuserRealization
    gap: float

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError("gap must be nonnegative")
        if self.first.grid != self.second.grid:
            raise GridError("volume diffuser surfaces are on different grids")

    @property
    def grid(self) -> Grid:
        return self.first.grid

    def transmit(self, f: ComplexField) -> ComplexField:
        f = f.with_values(f.values * transmission_at(self.first, f.wavelength))
        f = propagate_angular_spectrum(f, self.gap)
        return f.with_values(f.values * transmission_at(self.second, f.wavelength))

    def transmit_joint(self, psi: JointAmplitude) -> JointAmplitude:
        psi = apply_diffuser_joint(psi, transmission_at(self.first, psi.photon_wavelength))
        psi = propagate_joint(psi, self.gap)
        return apply_diffuser_joint(psi, transmission_at(self.second, psi.photon_wavelength))

    def translate(self, offset: float) -> "VolumeDiffuser":
        return replace(self, first=translate(self.first, offset), second=translate(self.second, offset))


Medium = Union[DiffuserRealization, VolumeDiffuser]


def _cell_index(grid: Grid, size: float) -> np.ndarray:
    x = grid.coords()
    return ((x - x[0]) // size).astype(int)


def synth_diffuser(spec: DiffuserSpec, grid: Grid) -> DiffuserRealization:
    """Seed-deterministic diffuser realization on grid."""
    d = spec.coherence_length
    if grid.dx >= d / 4:
        raise GridError("grid spacing %g doesn't resolve coherence length %g (needs < d/4)" % (grid.dx, d))
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(grid.shape)
    # |H|^2 = exp(-q^2 d^2 / 4) gives autocorrelation exp(-r^2/d^2)
    filt = np.exp(-grid.angular_radius2() * d * d / 8)
    opd = centered_ifft(centered_fft(noise, grid.axes) * filt, grid.axes).real
    opd -= opd.mean()
    std = opd.std()
    if spec.opd_rms > 0 and std > 0:
        opd *= spec.opd_rms / std
    else:
        opd = np.zeros(grid.shape)

    s = spec.loss_strength
    if s == 0:
        amplitude = np.ones(grid.shape)
    else:
        cells = _cell_index(grid, d)
        n_cells = cells.max() + 1
        t = rng.uniform(1 - s, 1, size=(n_cells,) * grid.ndim)
        amplitude = t[cells] if grid.ndim == 1 else t[np.ix_(cells, cells)]
    log.debug("diffuser seed %s: opd rms %.3g m, loss %.3g", spec.seed, spec.opd_rms, s)
    return DiffuserRealization(grid, opd, amplitude, spec)


def transmission_at(r: DiffuserRealization, wavelength: float) -> np.ndarray:
    """A = amplitude exp(i 2π opd / λ)."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    return r.amplitude * np.exp(2j * np.pi * r.opd / wavelength)


def pi_step_mask(grid: Grid, photon_wavelength: float = DEFAULT_PHOTON_WAVELENGTH) -> DiffuserRealization:
    """Phase step of ±π/2 at the photon wavelength across y = 0, a 2π step for the pump."""
    y = grid.mesh()[0]
    opd = np.where(y >= 0, 1.0, -1.0) * photon_wavelength / 4
    return DiffuserRealization(grid, opd, np.ones(grid.shape))


def translate(r: DiffuserRealization, offset: float) -> DiffuserRealization:
    """Cyclic shift along x by the nearest whole number of samples."""
    if abs(offset) >= r.grid.extent:
        raise GridError("offset %g exceeds the grid extent" % offset)
    shift = int(round(offset / r.grid.dx))
    if shift == 0:
        return r
    return replace(r, opd=np.roll(r.opd, shift, axis=-1), amplitude=np.roll(r.amplitude, shift, axis=-1))


def transmit(medium: Medium, f: ComplexField) -> ComplexField:
    """Field just after a thin or volume medium."""
    if isinstance(medium, VolumeDiffuser):
        return medium.transmit(f)
    return f.with_values(f.values * transmission_at(medium, f.wavelength))


def memory_effect_curve(
    medium: Medium, beam: ComplexField, tilt_angles: Sequence[float], region: Optional[np.ndarray] = None
) -> np.ndarray:
    """Far-field speckle correlation versus beam tilt.

    Each tilt is a linear phase ramp snapped to whole angular cells; the tilted far field is
    shifted back by the same number of cells before it is correlated with the untilted one.
    """
    if beam.domain != POSITION:
        raise FieldError("memory effect beam must be a position-domain field")
    grid = beam.grid
    dq = grid.reciprocal().dx
    x = grid.mesh()[-1]
    reference = intensity(far_field(transmit(medium, beam)))
    out = []
    for angle in tilt_angles:
        cells = int(round(beam.wavenumber * np.sin(angle) / dq))
        if cells == 0:
            out.append(1.0)
            continue
        tilted = beam.with_values(beam.values * np.exp(1j * cells * dq * x))
        pattern = intensity(far_field(transmit(medium, tilted)))
        shifted = np.roll(pattern.values, -cells, axis=-1)
        out.append(pearson_correlation(shifted, reference.values, region))
    return np.array(out)


def memory_effect_half_width(angles: Sequence[float], curve: Sequence[float], level: float = 0.5) -> float:
    """Smallest |angle| where the curve falls to level, linearly interpolated."""
    angles = np.abs(np.asarray(angles, dtype=float))
    curve = np.asarray(curve, dtype=float)
    order = np.argsort(angles)
    angles, curve = angles[order], curve[order]
    below = np.nonzero(curve < level)[0]
    if below.size == 0:
        log.warning("memory effect curve never drops below %g", level)
        return float("inf")
    j = below[0]
    if j == 0:
        return float(angles[0])
    a0, a1, c0, c1 = angles[j - 1], angles[j], curve[j - 1], curve[j]
    return float(a0 + (c0 - level) * (a1 - a0) / (c0 - c1))


def field_coherence_length(spec: DiffuserSpec, wavelength: float) -> float:
    """1/e width of the diffuse field autocorrelation for Gaussian phase statistics."""
    var = spec.phase_rms(wavelength) ** 2
    if var == 0:
        return float("inf")
    rho = np.log1p(np.expm1(var) / np.e) / var
    return float(spec.coherence_length * np.sqrt(-np.log(rho)))


def transmission_moments(loss_strength: float, power: int = 1):
    """(mean, std) of t^power for t ~ unif(1 - s, 1)."""

    def moment(p):
        if loss_strength == 0:
            return 1.0
        return (1 - (1 - loss_strength) ** (p + 1)) / ((p + 1) * loss_strength)

    mean = moment(power)
    var = max(moment(2 * power) - mean**2, 0.0)
    return mean, float(np.sqrt(var))


def phase_only_efficiency_bound(mean: float, std: float) -> float:
    """(1 + σ^2/μ^2)^-1, the best focusing efficiency phase-only control reaches."""
    if not mean > 0:
        raise StatisticsError("efficiency bound needs a positive mean transmission")
    return 1 / (1 + (std / mean) ** 2)


def segment_efficiency(amplitudes) -> float:
    """|Σa|^2 / (N Σ|a|^2) for segment amplitudes a after perfect phase correction."""
    a = np.abs(np.asarray(amplitudes, dtype=float).ravel())
    total = np.sum(a**2)
    if total <= 0:
        raise StatisticsError("segment efficiency needs nonzero amplitudes")
    return float(np.sum(a) ** 2 / (a.size * total))


def rayleigh_range(d: float, wavelength: float) -> float:
    """z_rd = π d^2 / λ."""
    return float(np.pi * d * d / wavelength)
