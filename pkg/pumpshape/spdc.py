# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: two-photon joint amplitudes, Schmidt analysis and coincidence patterns"""
import logging as log
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .errors import GridError, FieldError, NormalizationError, RegimeError, AliasingError
from .field import (
    ANGULAR,
    POSITION,
    DOMAINS,
    Grid,
    ComplexField,
    RealField,
    centered_fft,
    centered_ifft,
    propagation_kernel,
    fit_gaussian_width,
    fourier_interpolate,
)

# exp(-alpha y) best matches sinc(y) for y >= 0 at this alpha
SINC_GAUSS_MATCH = 0.193

# estimator regime limit on b * sigma
MAX_B_SIGMA = 0.2

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class CrystalSpec:
    """Nonlinear crystal of length L pumped at pump_wavelength."""

    length: float
    pump_wavelength: float
    n_crystal: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("crystal length must be positive")
        if not self.pump_wavelength > 0 or not self.n_crystal > 0:
            raise ValueError("pump wavelength and refractive index must be positive")

    @property
    def pump_wavenumber(self) -> float:
        return 2 * np.pi * self.n_crystal / self.pump_wavelength

    @property
    def photon_wavelength(self) -> float:
        return 2 * self.pump_wavelength

    @property
    def b(self) -> float:
        """Phase-matching length scale, b^2 = L / 4k."""
        return float(np.sqrt(self.length / (4 * self.pump_wavenumber)))

    def coherence_width(self) -> float:
        """Order-of-magnitude two-photon coherence width sqrt(λL)."""
        return float(np.sqrt(self.pump_wavelength * self.length))

    def spdc_angle(self) -> float:
        """Order-of-magnitude emission cone angle sqrt(λ/L)."""
        return float(np.sqrt(self.pump_wavelength / self.length))

    def phase_matching(self, dq: np.ndarray) -> np.ndarray:
        """sinc(L dq^2 / 4k), with sinc(x) = sin(x)/x."""
        return np.sinc(self.length * dq**2 / (4 * self.pump_wavenumber) / np.pi)

    def matched_double_gaussian(self, sigma: float) -> "DoubleGaussianParams":
        """Gaussian approximation of the phase matching for a pump of angular width sigma."""
        return DoubleGaussianParams(sigma, np.sqrt(SINC_GAUSS_MATCH) * self.b)


@dataclass(frozen=True)
class DoubleGaussianParams:
    """Pump angular width sigma and phase-matching scale b of a double-Gaussian state."""

    sigma: float
    b: float

    def __post_init__(self):
        if not self.sigma > 0 or not self.b > 0:
            raise ValueError("sigma and b must be positive")

    @classmethod
    def for_schmidt(cls, schmidt: float, sigma: float) -> "DoubleGaussianParams":
        """Parameters with the given Schmidt number, on the b * sigma <= 1 branch."""
        if schmidt < 1:
            raise RegimeError("Schmidt number can't be below 1, got %g" % schmidt)
        root = np.sqrt(schmidt)
        x = root - np.sqrt(schmidt - 1)
        return cls(sigma, x / sigma)


@dataclass(frozen=True)
class SchmidtEstimate:
    schmidt: float
    uncertainty: float
    sigma: float
    b: float


@dataclass(frozen=True)
class JointAmplitude:
    """Two-photon amplitude ψ on a signal x idler grid, 1D transverse per photon.

    transmittance tracks the pair survival probability removed by lossy elements;
    values stay normalized.
    """

    grid_s: Grid
    grid_i: Grid
    values: np.ndarray
    photon_wavelength: float
    domain: str = ANGULAR
    transmittance: float = 1.0

    def __post_init__(self):
        if self.grid_s.ndim != 1 or self.grid_i.ndim != 1:
            raise GridError("joint amplitudes are 1D transverse per photon")
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid_s.n_points, self.grid_i.n_points):
            raise GridError("joint values shape %s doesn't match grids" % (values.shape,))
        if not np.all(np.isfinite(values)):
            raise FieldError("joint amplitude contains non-finite values")
        if self.domain not in DOMAINS:
            raise FieldError("unknown domain tag %r" % (self.domain,))
        view = values.view()
        view.flags.writeable = False
        object.__setattr__(self, "values", view)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid_s.dx * self.grid_i.dx)

    @property
    def pump_wavelength(self) -> float:
        return self.photon_wavelength / 2

    def is_normalized(self, tol: float = NORM_TOLERANCE) -> bool:
        return abs(self.norm - 1) < tol

    def normalized(self) -> "JointAmplitude":
        norm = self.norm
        if norm <= 0:
            raise FieldError("can't normalize an all-zero joint amplitude")
        return replace(self, values=self.values / np.sqrt(norm))

    def exchange_residual(self) -> float:
        """max |ψ(a, b) - ψ(b, a)|."""
        if self.grid_s != self.grid_i:
            raise GridError("exchange symmetry needs identical signal and idler grids")
        return float(np.max(np.abs(self.values - self.values.T)))

    def weighted(self) -> np.ndarray:
        """Values scaled by sqrt(Δs Δi), the matrix whose singular values give the Schmidt modes."""
        return self.values * np.sqrt(self.grid_s.dx * self.grid_i.dx)


def _joint_grids(grid_s: Grid, grid_i: Optional[Grid]) -> Tuple[Grid, Grid]:
    grid_i = grid_i or grid_s
    if grid_s.ndim != 1 or grid_i.ndim != 1:
        raise GridError("joint amplitudes are 1D transverse per photon")
    return grid_s, grid_i


def _interp_complex(x: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    re = np.interp(x, xp, fp.real, left=0.0, right=0.0)
    im = np.interp(x, xp, fp.imag, left=0.0, right=0.0)
    return re + 1j * im


def build_state_eq1(
    pump_angular: ComplexField, crystal: CrystalSpec, grid_s: Grid, grid_i: Optional[Grid] = None, support_tol: float = 1e-6
) -> JointAmplitude:
    """ψ(q_s, q_i) = v(q_s + q_i) sinc(L (q_s - q_i)^2 / 4k), normalized.

    Args:
        pump_angular: pump angular spectrum v(q), 1D
        crystal: crystal length and pump wavenumber
        grid_s: signal angular grid
        grid_i: idler angular grid, same as signal when omitted

    Raises GridError if the pump spectrum holds more than support_tol of its power outside the
    sum-coordinate range representable on the joint grid.
    """
    grid_s, grid_i = _joint_grids(grid_s, grid_i)
    if pump_angular.domain != ANGULAR or pump_angular.grid.ndim != 1:
        raise FieldError("build_state_eq1 needs a 1D angular-domain pump")
    q_s = grid_s.coords()
    q_i = grid_i.coords()
    sum_max = abs(q_s).max() + abs(q_i).max()
    q_p = pump_angular.grid.coords()
    pump_power = np.abs(pump_angular.values) ** 2
    outside = pump_power[np.abs(q_p) > sum_max].sum() / max(pump_power.sum(), np.finfo(float).tiny)
    if outside > support_tol:
        raise GridError("pump spectrum extends beyond the representable sum range (%.3g outside)" % outside)
    qs, qi = np.meshgrid(q_s, q_i, indexing="ij")
    v = _interp_complex(qs + qi, q_p, pump_angular.values)
    values = v * crystal.phase_matching(qs - qi)
    return JointAmplitude(grid_s, grid_i, values, crystal.photon_wavelength, ANGULAR).normalized()


def _check_double_gaussian_grid(p: DoubleGaussianParams, grid: Grid, domain: str):
    half = grid.extent / 2
    if domain == ANGULAR:
        widths = (p.sigma, 1 / p.b)
        finest = min(p.sigma / 2, 1 / (2 * p.b))
    else:
        widths = (4 / p.sigma, 4 * p.b)
        finest = min(2 / p.sigma, 2 * p.b)
    if half < max(widths):
        raise GridError("grid half-extent %g doesn't cover the state widths %s" % (half, widths))
    if grid.dx > finest / 2:
        raise GridError("grid spacing %g doesn't resolve the state width %g" % (grid.dx, finest))


def build_double_gaussian(
    p: DoubleGaussianParams,
    grid_s: Grid,
    grid_i: Optional[Grid] = None,
    domain: str = ANGULAR,
    photon_wavelength: float = 808e-9,
) -> JointAmplitude:
    """Normalized double-Gaussian state.

    Angular domain: exp(-(q_s+q_i)^2/σ^2) exp(-b^2 (q_s-q_i)^2).
    Position domain: exp(-σ^2 (x_s+x_i)^2 / 16) exp(-(x_s-x_i)^2 / 16b^2), its transform.
    """
    grid_s, grid_i = _joint_grids(grid_s, grid_i)
    if domain not in DOMAINS:
        raise FieldError("unknown domain tag %r" % (domain,))
    for grid in {grid_s, grid_i}:
        _check_double_gaussian_grid(p, grid, domain)
    a, b = np.meshgrid(grid_s.coords(), grid_i.coords(), indexing="ij")
    if domain == ANGULAR:
        values = np.exp(-((a + b) ** 2) / p.sigma**2 - p.b**2 * (a - b) ** 2)
    else:
        values = np.exp(-(p.sigma**2) * (a + b) ** 2 / 16 - (a - b) ** 2 / (16 * p.b**2))
    return JointAmplitude(grid_s, grid_i, values, photon_wavelength, domain).normalized()


def build_state_from_pump(pump: ComplexField, b: float) -> JointAmplitude:
    """Finite-K state ψ(x_s, x_i) = W((x_s+x_i)/2) exp(-(x_s-x_i)^2 / 16b^2) for any pump profile W."""
    if pump.domain != POSITION or pump.grid.ndim != 1:
        raise FieldError("build_state_from_pump needs a 1D position-domain pump")
    if not b > 0:
        raise ValueError("b must be positive")
    x = pump.grid.coords()
    xs, xi = np.meshgrid(x, x, indexing="ij")
    w = _interp_complex((xs + xi) / 2, x, np.asarray(pump.values))
    values = w * np.exp(-((xs - xi) ** 2) / (16 * b**2))
    return JointAmplitude(pump.grid, pump.grid, values, 2 * pump.wavelength, POSITION).normalized()


def build_thin_crystal_state(pump: ComplexField) -> JointAmplitude:
    """δ-correlated state W(x) δ(x_s - x_i) on the pump grid."""
    if pump.domain != POSITION or pump.grid.ndim != 1:
        raise FieldError("build_thin_crystal_state needs a 1D position-domain pump")
    values = np.diag(np.asarray(pump.values)) / np.sqrt(pump.grid.dx)
    return JointAmplitude(pump.grid, pump.grid, values, 2 * pump.wavelength, POSITION).normalized()


def schmidt_number_analytic(p: DoubleGaussianParams) -> float:
    """K = ¼ (1/(bσ) + bσ)^2."""
    x = p.b * p.sigma
    return 0.25 * (1 / x + x) ** 2


def schmidt_coefficients(psi: JointAmplitude) -> np.ndarray:
    """Schmidt weights p_i in decreasing order, summing to 1."""
    if not psi.is_normalized():
        raise NormalizationError("joint amplitude norm is %.12g, not 1" % psi.norm)
    sv = np.linalg.svd(psi.weighted(), compute_uv=False)
    weights = sv**2
    return weights / weights.sum()


def schmidt_number_per_axis(psi: JointAmplitude) -> float:
    """1 / sum(p_i^2) from the singular values of the discretized amplitude, one transverse axis."""
    weights = schmidt_coefficients(psi)
    return float(1 / np.sum(weights**2))


def schmidt_number_numeric(psi: JointAmplitude) -> float:
    """Schmidt number of the full transverse state.

    The state is separable in x and y with the same amplitude on each axis, so the
    Schmidt number is the square of the per-axis value, matching schmidt_number_analytic.
    """
    return schmidt_number_per_axis(psi) ** 2



def _joint_transform(psi: JointAmplitude, inverse: bool) -> JointAmplitude:
    grid_s = psi.grid_s.reciprocal()
    grid_i = psi.grid_i.reciprocal()
    scale = np.sqrt(psi.grid_s.dx * psi.grid_i.dx / (grid_s.dx * grid_i.dx))
    transform = centered_ifft if inverse else centered_fft
    values = transform(psi.values, (0, 1)) * scale
    domain = POSITION if inverse else ANGULAR
    return replace(psi, grid_s=grid_s, grid_i=grid_i, values=values, domain=domain)


def to_angular(psi: JointAmplitude) -> JointAmplitude:
    """Per-photon far-field transform of a position-domain amplitude."""
    if psi.domain == ANGULAR:
        return psi
    return _joint_transform(psi, inverse=False)


def to_position(psi: JointAmplitude) -> JointAmplitude:
    """Inverse of to_angular."""
    if psi.domain == POSITION:
        return psi
    return _joint_transform(psi, inverse=True)


def _transmission_array(psi: JointAmplitude, transmission) -> np.ndarray:
    if isinstance(transmission, ComplexField):
        if transmission.grid != psi.grid_s:
            raise GridError("transmission map grid doesn't match the photon grid")
        values = transmission.values
    else:
        values = np.asarray(transmission, dtype=complex)
    if values.shape != (psi.grid_s.n_points,):
        raise GridError("transmission map shape %s doesn't match the photon grid" % (values.shape,))
    return values


def _renormalize(psi: JointAmplitude, values: np.ndarray, what: str) -> JointAmplitude:
    out = replace(psi, values=values)
    norm = out.norm
    if norm <= 0:
        raise FieldError("%s removed all of the two-photon amplitude" % what)
    if abs(norm - 1) > 1e-12:
        log.debug("%s transmitted %.6g of the pairs", what, norm)
        out = replace(out.normalized(), transmittance=psi.transmittance * norm)
    return out


def apply_diffuser_joint(psi: JointAmplitude, transmission) -> JointAmplitude:
    """ψ(x_s, x_i) A(x_s) A(x_i), renormalized when A is lossy.

    The pair survival fraction accumulates in transmittance.
    """
    if psi.domain != POSITION:
        raise FieldError("diffusers act on a position-domain joint amplitude")
    if psi.grid_s != psi.grid_i:
        raise GridError("diffuser needs identical signal and idler grids")
    a = _transmission_array(psi, transmission)
    values = psi.values * a[:, None] * a[None, :]
    return _renormalize(psi, values, "diffuser")


def propagate_joint(psi: JointAmplitude, distance: float, guard: Optional[float] = None, border: float = 1 / 16) -> JointAmplitude:
    """Free-space propagation acting separably on both photon coordinates."""
    if psi.domain != POSITION:
        raise FieldError("joint propagation needs a position-domain amplitude")
    if distance == 0:
        return psi
    spectrum = centered_fft(psi.values, (0, 1))
    kernel_s, prop_s = propagation_kernel(psi.grid_s, psi.photon_wavelength, distance)
    kernel_i, prop_i = propagation_kernel(psi.grid_i, psi.photon_wavelength, distance)
    if not (prop_s.all() and prop_i.all()):
        clipped = np.abs(spectrum[~(prop_s[:, None] & prop_i[None, :])]) ** 2
        log.warning("evanescent clipping removed %.3g of the joint amplitude", clipped.sum() / (np.abs(spectrum) ** 2).sum())
    values = centered_ifft(spectrum * kernel_s[:, None] * kernel_i[None, :], (0, 1))
    out = _renormalize(psi, values, "propagation")
    if guard is not None:
        power = np.abs(out.values) ** 2
        singles = power.sum(axis=1)
        width = max(1, int(psi.grid_s.n_points * border))
        frac = float((singles[:width].sum() + singles[-width:].sum()) / singles.sum())
        if frac > guard:
            raise AliasingError(
                "guard band holds %.3g of the pairs after %g m (guard %.3g)" % (frac, distance, guard),
                edge_fraction=frac,
                step=distance,
            )
    return out


def coincidence_pattern(psi: JointAmplitude) -> RealField:
    """C(q_s, q_i) = |ψ(q_s, q_i)|^2 on the joint angular grid, normalized to 1."""
    psi = to_angular(psi)
    if psi.grid_s != psi.grid_i:
        raise GridError("coincidence pattern needs identical signal and idler grids")
    grid = Grid(psi.grid_s.n_points, psi.grid_s.extent, ndim=2)
    return RealField(grid, np.abs(psi.values) ** 2, psi.photon_wavelength, ANGULAR).normalized()


def coincidence_slice(psi: JointAmplitude, idler_index: Optional[int] = None) -> RealField:
    """C(q_s, q_i fixed): one scanning signal detector, one stationary idler detector."""
    psi = to_angular(psi)
    if idler_index is None:
        idler_index = psi.grid_i.n_points // 2
    values = np.abs(psi.values[:, idler_index]) ** 2
    return RealField(psi.grid_s, values, psi.photon_wavelength, ANGULAR).normalized()


def singles_pattern(psi: JointAmplitude, photon: str = "signal") -> RealField:
    """Marginal single-photon pattern, normalized to 1."""
    psi = to_angular(psi)
    power = np.abs(psi.values) ** 2
    if photon == "signal":
        grid, values = psi.grid_s, power.sum(axis=1) * psi.grid_i.dx
    elif photon == "idler":
        grid, values = psi.grid_i, power.sum(axis=0) * psi.grid_s.dx
    else:
        raise ValueError("photon must be 'signal' or 'idler', got %r" % (photon,))
    return RealField(grid, values, psi.photon_wavelength, ANGULAR).normalized()


def heralded_photon(psi: JointAmplitude, idler_index: Optional[int] = None) -> ComplexField:
    """Signal field ψ(x_s, x_i) given the idler detected at one near-field position.

    The idler position defaults to the grid center. The result is a normalized
    position-domain field at the photon wavelength.
    """
    psi = to_position(psi)
    if idler_index is None:
        idler_index = psi.grid_i.n_points // 2
    values = np.asarray(psi.values[:, idler_index])
    if not np.any(values):
        raise FieldError("no pairs with the idler at index %d" % idler_index)
    return ComplexField(psi.grid_s, values, psi.photon_wavelength, POSITION).normalized()


def sum_coordinate_marginal(coinc: RealField) -> RealField:
    """Distribution of q_s + q_i on the photon angular lattice, wrapped to the grid period."""
    if coinc.grid.ndim != 2:
        raise GridError("sum-coordinate marginal needs a joint pattern")
    n = coinc.grid.n_points
    js, ji = np.indices(coinc.grid.shape)
    index = (js + ji - n // 2) % n
    values = np.bincount(index.ravel(), weights=coinc.values.ravel(), minlength=n) * coinc.grid.dx
    grid = Grid(n, coinc.grid.extent)
    return RealField(grid, values, coinc.wavelength, ANGULAR).normalized()


def thin_crystal_coincidence(pump: ComplexField, photon_transmission) -> RealField:
    """Thin-crystal coincidence |FT[W A^2]|^2 as a function of q_s + q_i, normalized.

    The result sits on the pump angular grid and is tagged with the pump wavelength, so it
    compares directly to the pump far field.
    """
    if pump.domain != POSITION:
        raise FieldError("thin-crystal coincidence needs a position-domain pump")
    if isinstance(photon_transmission, ComplexField):
        if photon_transmission.grid != pump.grid:
            raise GridError("transmission map grid doesn't match the pump grid")
        a = photon_transmission.values
    else:
        a = np.asarray(photon_transmission, dtype=complex)
    if a.shape != pump.grid.shape:
        raise GridError("transmission map shape %s doesn't match the pump grid" % (a.shape,))
    spectrum = centered_fft(pump.values * a * a, pump.grid.axes)
    grid = pump.grid.reciprocal()
    return RealField(grid, np.abs(spectrum) ** 2, pump.wavelength, ANGULAR).normalized()


def resample_sum_coordinate(coinc: RealField, pump_ff: RealField, min_overlap: float = 0.5) -> Tuple[RealField, RealField]:
    """Map a coincidence pattern onto the pump angular grid.

    Coincidences at detector angle θ line up with the pump far field at θ/2, so the
    coincidence angle axis is compressed by exactly 2 and band-limited interpolation puts
    it on the pump grid. A coincidence pattern without a wavelength tag is taken to be at
    twice the pump wavelength.

    Returns:
        (resampled coincidence, pump far field), both on the pump grid
    """
    if pump_ff.wavelength is None:
        raise FieldError("pump far field needs a wavelength tag")
    if coinc.grid.ndim != pump_ff.grid.ndim:
        raise GridError("coincidence and pump patterns have different dimensions")
    coinc_wavelength = coinc.wavelength or 2 * pump_ff.wavelength
    # pump q maps to coincidence q * scale
    scale = 2 * pump_ff.wavelength / coinc_wavelength
    if coinc.grid == pump_ff.grid and np.isclose(scale, 1.0, rtol=1e-12):
        return replace(coinc, wavelength=pump_ff.wavelength).normalized(), pump_ff
    target = pump_ff.grid.coords() * scale
    half = coinc.grid.extent / 2
    inside = np.abs(target) <= half
    if inside.mean() < min_overlap:
        raise GridError("coincidence grid covers only %.0f%% of the pump grid" % (100 * inside.mean()))
    values = coinc.values
    for axis in range(coinc.grid.ndim):
        values = np.apply_along_axis(lambda row: np.where(inside, fourier_interpolate(row, coinc.grid, target), 0.0), axis, values)
    values = np.clip(values, 0.0, None)
    resampled = RealField(pump_ff.grid, values, pump_ff.wavelength, ANGULAR)
    return resampled.normalized(), pump_ff


def estimate_schmidt_from_widths(
    coinc_slice_width: float, singles_width: float, coinc_err: float = 0.0, singles_err: float = 0.0
) -> SchmidtEstimate:
    """Schmidt number from 1/e^2 half-widths of the coincidence slice and the singles.

    σ comes from the coincidence slice and b from the singles, which follow exp(-8 b^2 q^2).
    K = 1/(2bσ)^2 is then (singles_width / coinc_slice_width)^2.
    """
    if not coinc_slice_width > 0 or not singles_width > 0:
        raise ValueError("widths must be positive")
    sigma = coinc_slice_width
    b = 1 / (2 * singles_width)
    if b * sigma > MAX_B_SIGMA:
        raise RegimeError("b*sigma = %.3g is outside the width-estimator regime (<= %g)" % (b * sigma, MAX_B_SIGMA))
    schmidt = (singles_width / coinc_slice_width) ** 2
    rel = 2 * np.hypot(coinc_err / coinc_slice_width, singles_err / singles_width)
    return SchmidtEstimate(schmidt, schmidt * rel, sigma, b)


def estimate_schmidt(psi: JointAmplitude) -> SchmidtEstimate:
    """Fit the coincidence slice at q_i = 0 and the signal singles, then estimate K."""
    coinc_w, coinc_err = fit_gaussian_width(coincidence_slice(psi))
    singles_w, singles_err = fit_gaussian_width(singles_pattern(psi))
    return estimate_schmidt_from_widths(coinc_w, singles_w, coinc_err, singles_err)
