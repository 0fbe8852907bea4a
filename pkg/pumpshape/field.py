# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: grids, sampled fields and Fourier-optics propagation"""
import logging as log
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import curve_fit

from .errors import GridError, FieldError, StatisticsError, AliasingError, FitError

POSITION = "position"
ANGULAR = "angular"
DOMAINS = (POSITION, ANGULAR)

# samples evaluated per block in band-limited interpolation
_INTERP_BLOCK = 512


@dataclass(frozen=True)
class Grid:
    """Uniform sampling grid centered on zero, square when ndim is 2.

    Sample index n_points // 2 sits at coordinate zero, on both the position and the
    angular side.
    """

    n_points: int
    extent: float
    ndim: int = 1

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise GridError("grid needs at least 2 samples per axis, got %r" % (self.n_points,))
        if not np.isfinite(self.extent) or self.extent <= 0:
            raise GridError("grid extent must be positive, got %r" % (self.extent,))
        if self.ndim not in (1, 2):
            raise GridError("only 1D and 2D grids are supported, got ndim=%r" % (self.ndim,))
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "extent", float(self.extent))

    @property
    def dx(self) -> float:
        """Sample spacing."""
        return self.extent / self.n_points

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n_points,) * self.ndim

    @property
    def cell(self) -> float:
        """Measure of one sample: dx ** ndim."""
        return self.dx**self.ndim

    @property
    def axes(self) -> Tuple[int, ...]:
        return tuple(range(-self.ndim, 0))

    def coords(self) -> np.ndarray:
        """Centered sample coordinates along one axis."""
        return (np.arange(self.n_points) - self.n_points // 2) * self.dx

    def mesh(self) -> Tuple[np.ndarray, ...]:
        """Coordinate arrays shaped like the grid, (x,) in 1D and (y, x) in 2D."""
        x = self.coords()
        if self.ndim == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def radius2(self) -> np.ndarray:
        """Squared distance from the grid center, shaped like the grid."""
        return sum(c * c for c in self.mesh())

    def reciprocal(self) -> "Grid":
        """Grid of the transformed axis: spacing 2π/extent, extent 2π/dx."""
        return Grid(self.n_points, 2 * np.pi / self.dx, self.ndim)

    def angular_coords(self) -> np.ndarray:
        """Transverse wavevector samples (rad per unit length) of this grid's transform."""
        return self.reciprocal().coords()

    def angular_radius2(self) -> np.ndarray:
        return self.reciprocal().radius2()

    def index_of(self, coord: float) -> int:
        """Index of the sample nearest to coord along one axis."""
        idx = int(round(coord / self.dx)) + self.n_points // 2
        if not 0 <= idx < self.n_points:
            raise GridError("coordinate %g is outside the grid" % coord)
        return idx


def _readonly(values: np.ndarray) -> np.ndarray:
    view = values.view()
    view.flags.writeable = False
    return view


def _check_finite(values: np.ndarray):
    if not np.all(np.isfinite(values)):
        raise FieldError("field contains non-finite values")


@dataclass(frozen=True)
class ComplexField:
    """Sampled complex amplitude with a wavelength and a domain tag.

    Power is sum(|a|^2) * cell, and is what every unitary operation keeps fixed.
    """

    grid: Grid
    values: np.ndarray
    wavelength: float
    domain: str = POSITION
    clipped_power: float = 0.0
    focal_length: Optional[float] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise GridError("values shape %s doesn't match grid %s" % (values.shape, self.grid.shape))
        if not self.wavelength > 0:
            raise FieldError("wavelength must be positive, got %r" % (self.wavelength,))
        if self.domain not in DOMAINS:
            raise FieldError("unknown domain tag %r" % (self.domain,))
        object.__setattr__(self, "values", _readonly(values))

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell)

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength

    def with_values(self, values, **kws) -> "ComplexField":
        return replace(self, values=values, **kws)

    def normalized(self) -> "ComplexField":
        power = self.power
        if power <= 0:
            raise FieldError("can't normalize a field with zero power")
        return self.with_values(self.values / np.sqrt(power))

    def focal_plane_coords(self, focal_length: float) -> np.ndarray:
        """Detector-plane coordinates x_f = q λ f / 2π of an angular-domain field."""
        if self.domain != ANGULAR:
            raise FieldError("focal plane coordinates need an angular-domain field")
        return self.grid.coords() * self.wavelength * focal_length / (2 * np.pi)


@dataclass(frozen=True)
class RealField:
    """Nonnegative sampled intensity or count-rate pattern."""

    grid: Grid
    values: np.ndarray
    wavelength: Optional[float] = None
    domain: str = ANGULAR

    def __post_init__(self):
        values = np.asarray(self.values)
        if np.iscomplexobj(values):
            raise FieldError("real field can't hold complex values")
        values = values.astype(float)
        if values.shape != self.grid.shape:
            raise GridError("values shape %s doesn't match grid %s" % (values.shape, self.grid.shape))
        _check_finite(values)
        if np.any(values < 0):
            raise FieldError("real field values must be nonnegative")
        if self.domain not in DOMAINS:
            raise FieldError("unknown domain tag %r" % (self.domain,))
        object.__setattr__(self, "values", _readonly(values))

    @property
    def total(self) -> float:
        return float(np.sum(self.values) * self.grid.cell)

    def normalized(self) -> "RealField":
        total = self.total
        if total <= 0:
            raise FieldError("can't normalize a pattern with zero total")
        return replace(self, values=self.values / total)


def intensity(f: ComplexField) -> RealField:
    """|a|^2 of a complex field, keeping grid, wavelength and domain."""
    return RealField(f.grid, np.abs(f.values) ** 2, f.wavelength, f.domain)


def centered_fft(values: np.ndarray, axes) -> np.ndarray:
    """Unitary DFT with the zero coordinate at index n // 2 on both sides."""
    shifted = np.fft.ifftshift(values, axes=axes)
    return np.fft.fftshift(np.fft.fftn(shifted, axes=axes, norm="ortho"), axes=axes)


def centered_ifft(values: np.ndarray, axes) -> np.ndarray:
    """Inverse of centered_fft."""
    shifted = np.fft.ifftshift(values, axes=axes)
    return np.fft.fftshift(np.fft.ifftn(shifted, axes=axes, norm="ortho"), axes=axes)


def far_field(f: ComplexField, focal_length: Optional[float] = None) -> ComplexField:
    """Lens Fourier transform.

    Position-domain input gives the angular-domain field on q = 2π x_f / (λ f). Applying
    it to an angular-domain field is the second lens of a 4f relay and returns the
    parity-inverted position field. Power is preserved exactly.
    """
    if focal_length is not None and not focal_length > 0:
        raise FieldError("focal length must be positive")
    _check_finite(f.values)
    grid = f.grid.reciprocal()
    scale = (f.grid.dx / grid.dx) ** (f.grid.ndim / 2)
    values = centered_fft(f.values, f.grid.axes) * scale
    domain = ANGULAR if f.domain == POSITION else POSITION
    return ComplexField(grid, values, f.wavelength, domain, f.clipped_power, focal_length)


def inverse_far_field(f: ComplexField) -> ComplexField:
    """Exact inverse of far_field on an angular-domain field."""
    if f.domain != ANGULAR:
        raise FieldError("inverse far field needs an angular-domain field")
    _check_finite(f.values)
    grid = f.grid.reciprocal()
    scale = (f.grid.dx / grid.dx) ** (f.grid.ndim / 2)
    values = centered_ifft(f.values, f.grid.axes) * scale
    return ComplexField(grid, values, f.wavelength, POSITION, f.clipped_power)


def propagation_kernel(grid: Grid, wavelength: float, distance: float) -> Tuple[np.ndarray, np.ndarray]:
    """Angular-spectrum transfer function and the propagating-wave mask.

    The global phase exp(ikz) is dropped; the kernel is exp(iz(kz - k)).
    """
    k = 2 * np.pi / wavelength
    q2 = grid.angular_radius2()
    propagating = q2 < k * k
    kz = np.sqrt(np.where(propagating, k * k - q2, 0.0))
    # kz - k without cancellation
    delta = -q2 / (k + kz)
    kernel = np.where(propagating, np.exp(1j * distance * delta), 0.0)
    return kernel, propagating


def edge_fraction(f: ComplexField, border: float = 1 / 16) -> float:
    """Fraction of power within the outer border of the grid, on any axis."""
    power = np.abs(f.values) ** 2
    total = power.sum()
    if total <= 0:
        return 0.0
    n = f.grid.n_points
    width = max(1, int(n * border))
    inner = np.zeros(f.grid.shape, dtype=bool)
    sl = slice(width, n - width)
    inner[(sl,) * f.grid.ndim] = True
    return float(power[~inner].sum() / total)


def propagate_angular_spectrum(
    f: ComplexField, distance: float, guard: Optional[float] = None, border: float = 1 / 16
) -> ComplexField:
    """Free-space propagation by distance with the angular-spectrum kernel.

    Evanescent components are removed, logged, and added to clipped_power. With a guard
    set, a result whose border energy exceeds the guard raises AliasingError.
    """
    if f.domain != POSITION:
        raise FieldError("angular-spectrum propagation needs a position-domain field")
    _check_finite(f.values)
    if distance == 0:
        return f
    axes = f.grid.axes
    spectrum = centered_fft(f.values, axes)
    kernel, propagating = propagation_kernel(f.grid, f.wavelength, distance)
    spec_power = np.abs(spectrum) ** 2
    clipped = float(spec_power[~propagating].sum() * f.grid.cell)
    if clipped > 0:
        log.warning("evanescent clipping removed %.3g of %.3g power", clipped, f.power)
    values = centered_ifft(spectrum * kernel, axes)
    out = ComplexField(f.grid, values, f.wavelength, POSITION, f.clipped_power + clipped)
    if guard is not None:
        frac = edge_fraction(out, border)
        if frac > guard:
            raise AliasingError(
                "guard band holds %.3g of the power after %g m (guard %.3g)" % (frac, distance, guard),
                edge_fraction=frac,
                step=distance,
            )
    return out


def _as_values(a: Union[RealField, np.ndarray]) -> np.ndarray:
    return a.values if isinstance(a, RealField) else np.asarray(a, dtype=float)


def pearson_correlation(
    a: Union[RealField, np.ndarray], b: Union[RealField, np.ndarray], region: Optional[np.ndarray] = None
) -> float:
    """Pearson correlation coefficient of two patterns on the same grid.

    Args:
        a: first pattern
        b: second pattern
        region: optional boolean mask, only samples where it is True are used

    Returns:
        coefficient in [-1, 1]
    """
    if isinstance(a, RealField) and isinstance(b, RealField) and a.grid != b.grid:
        raise GridError("patterns are on different grids")
    x = _as_values(a)
    y = _as_values(b)
    if x.shape != y.shape:
        raise GridError("patterns have different shapes %s and %s" % (x.shape, y.shape))
    if region is not None:
        region = np.asarray(region, dtype=bool)
        x = x[region]
        y = y[region]
    x = x.ravel() - x.mean()
    y = y.ravel() - y.mean()
    sx = np.sqrt(np.dot(x, x))
    sy = np.sqrt(np.dot(y, y))
    if sx == 0 or sy == 0:
        raise StatisticsError("correlation is undefined for a constant pattern")
    return float(np.clip(np.dot(x, y) / (sx * sy), -1.0, 1.0))


def speckle_contrast(a: Union[RealField, np.ndarray]) -> float:
    """std / mean of a pattern."""
    values = _as_values(a)
    mean = values.mean()
    if mean <= 0:
        raise StatisticsError("speckle contrast needs a pattern with positive mean")
    return float(values.std() / mean)


def _gaussian(q, amp, q0, width):
    return amp * np.exp(-2 * (q - q0) ** 2 / width**2)


def _moments(pattern: RealField) -> Tuple[float, float]:
    """Center and 1/e^2 half-width of a 1D pattern from its first two moments."""
    q = pattern.grid.coords()
    weights = pattern.values
    total = weights.sum()
    if total <= 0:
        raise FieldError("can't take moments of an all-zero pattern")
    center = float(np.sum(q * weights) / total)
    var = float(np.sum((q - center) ** 2 * weights) / total)
    return center, 2 * np.sqrt(var)


def fit_gaussian_width(pattern: RealField) -> Tuple[float, float]:
    """Least-squares 1/e^2 half-width of a 1D pattern and its standard error."""
    if pattern.grid.ndim != 1:
        raise GridError("width fits need a 1D pattern")
    q = pattern.grid.coords()
    y = pattern.values
    center, width = _moments(pattern)
    p0 = (float(y.max()), center, max(width, pattern.grid.dx))
    try:
        popt, pcov = curve_fit(_gaussian, q, y, p0=p0, maxfev=20000)
    except (RuntimeError, ValueError) as e:
        raise FitError("gaussian width fit did not converge: %s" % e) from e
    err = np.sqrt(np.diag(pcov))
    if not np.all(np.isfinite(err)):
        raise FitError("gaussian width fit has undefined covariance")
    return float(abs(popt[2])), float(err[2])


def flatten_envelope(pattern: RealField, floor: float = 1e-12) -> RealField:
    """Divide a speckle pattern by its moment-matched Gaussian envelope."""
    grid = pattern.grid
    values = pattern.values
    total = values.sum()
    if total <= 0:
        raise FieldError("can't flatten an all-zero pattern")
    mesh = grid.mesh()
    centers = [float(np.sum(c * values) / total) for c in mesh]
    r2 = sum((c - c0) ** 2 for c, c0 in zip(mesh, centers))
    # per-axis variance is w^2/4 for exp(-2 r^2 / w^2)
    var = float(np.sum(r2 * values) / total) / grid.ndim
    width2 = 4 * var
    envelope = np.exp(-2 * r2 / width2)
    envelope *= total / envelope.sum()
    return replace(pattern, values=values / np.maximum(envelope, floor * envelope.max()))


def fourier_interpolate(values: np.ndarray, grid: Grid, coords: np.ndarray) -> np.ndarray:
    """Band-limited (trigonometric) interpolation of 1D samples at arbitrary coords."""
    if grid.ndim != 1:
        raise GridError("band-limited interpolation is 1D")
    n = grid.n_points
    coeffs = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(values))) / n
    k = np.arange(n) - n // 2
    if n % 2 == 0:
        # split the Nyquist term so the interpolant stays real for real input
        coeffs = np.append(coeffs, coeffs[0] / 2)
        coeffs[0] /= 2
        k = np.append(k, n // 2)
    coords = np.asarray(coords, dtype=float)
    out = np.empty(coords.shape, dtype=complex)
    flat = coords.ravel()
    res = out.ravel()
    for start in range(0, flat.size, _INTERP_BLOCK):
        chunk = flat[start : start + _INTERP_BLOCK]
        phase = np.exp(2j * np.pi * np.outer(chunk, k) / grid.extent)
        res[start : start + _INTERP_BLOCK] = phase @ coeffs
    out = res.reshape(coords.shape)
    if np.isrealobj(values):
        return out.real
    return out
