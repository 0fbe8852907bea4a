# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: atmospheric turbulence, phase screens and free-space links"""
import logging as log
from dataclasses import dataclass, replace
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special

from .errors import GridError, FieldError, StatisticsError
from .field import POSITION, Grid, ComplexField, far_field, intensity, centered_ifft, propagate_angular_spectrum
from .shaping import (
    PUMP_INTENSITY,
    FeedbackChannel,
    SlmConfig,
    beta_metric,
    stepwise_optimize,
    target_cell,
)
from .spdc import (
    JointAmplitude,
    apply_diffuser_joint,
    build_state_from_pump,
    coincidence_slice,
    propagate_joint,
)

RYTOV_LIMIT = 2.5
KOLMOGOROV_COEFF = 6.88
MIN_SCALING_POINTS = 4


@dataclass(frozen=True)
class AtmosphereParams:
    """Constant-Cn2 atmosphere; scales in meters, pressure in mbar, temperature in K."""

    cn2: float
    outer_scale: float = 10.0
    inner_scale: float = 5e-3
    pressure: float = 1013.0
    temperature: float = 288.0

    def __post_init__(self):
        if not self.cn2 > 0:
            raise ValueError("Cn2 must be positive")
        if not self.outer_scale > self.inner_scale > 0:
            raise ValueError("scales need outer_scale > inner_scale > 0")
        if not self.pressure > 0 or not self.temperature > 0:
            raise ValueError("pressure and temperature must be positive")


def refractive_index(pressure: float, temperature: float, wavelength_um: float) -> float:
    """n(P, T, λ) of air, with λ in microns."""
    return 1 + 77.6 * (1 + 7.52e-3 / wavelength_um**2) * (pressure / temperature) * 1e-6


def dispersion_ratio(atm: AtmosphereParams, wavelength: float, reference_wavelength: float) -> float:
    """(n(λ) - 1) / (n(λ_ref) - 1): screen phase scaling beyond the 1/λ factor."""
    n = refractive_index(atm.pressure, atm.temperature, wavelength * 1e6)
    n_ref = refractive_index(atm.pressure, atm.temperature, reference_wavelength * 1e6)
    return (n - 1) / (n_ref - 1)


def fried_parameter(cn2: float, z: float, wavelength: float) -> float:
    """r0 = (0.4229 k^2 z Cn2)^(-3/5)."""
    k = 2 * np.pi / wavelength
    return (0.4229 * k * k * z * cn2) ** (-3 / 5)


def cn2_for_r0(r0: float, z: float, wavelength: float) -> float:
    """Inverse of fried_parameter: the constant Cn2 giving r0 over a path of length z."""
    k = 2 * np.pi / wavelength
    return r0 ** (-5 / 3) / (0.4229 * k * k * z)


def rytov_variance(cn2: float, z: float, wavelength: float) -> float:
    """σ_R^2 = 1.23 k^(7/6) Cn2 z^(11/6)."""
    k = 2 * np.pi / wavelength
    return 1.23 * k ** (7 / 6) * cn2 * z ** (11 / 6)


def rytov_applicable(sigma_r2: float) -> bool:
    """Weak-to-moderate fluctuations, where the phase-screen model holds."""
    return sigma_r2 < RYTOV_LIMIT


def coherence_radius(r0: float, wavelength: Optional[float] = None) -> Tuple[float, Optional[float]]:
    """(ρ0, z_ra) with ρ0 = r0/2.1 and z_ra = π ρ0^2 / λ when a wavelength is given."""
    rho0 = r0 / 2.1
    z_ra = np.pi * rho0**2 / wavelength if wavelength else None
    return rho0, z_ra


def link_length_for_r0(r0: float, cn2: float, wavelength: float) -> float:
    """Inverse of fried_parameter in z: the constant-Cn2 path length over which r0 is reached."""
    k = 2 * np.pi / wavelength
    return r0 ** (-5 / 3) / (0.4229 * k * k * cn2)


def z_ra_crossing_length(cn2: float, wavelength: float) -> float:
    """Link length z at which z equals z_ra of the link's own coherence radius.

    z_ra = π (r0(z) / 2.1)^2 / λ falls as z^(-6/5), so the crossing is unique and scales as Cn2^(-6/11).
    """
    k = 2 * np.pi / wavelength
    a = 0.4229 * k * k * cn2
    return float((np.pi / (2.1**2 * wavelength)) ** (5 / 11) * a ** (-6 / 11))


def crossing_lengths(
    cn2: float, wavelength: float, waist: float, n_lengths: int, start_r0_waists: float = 4.0, z_ra_span: float = 4.0
) -> np.ndarray:
    """Log-spaced link lengths that bracket both β crossings for one Cn2.

    Starts where r0 is start_r0_waists pump waists, ends at z_ra_span times z_ra_crossing_length.
    """
    lo = link_length_for_r0(start_r0_waists * waist, cn2, wavelength)
    hi = z_ra_span * z_ra_crossing_length(cn2, wavelength)
    if not hi > lo:
        raise ValueError("Cn2 %g: r0 falls below %g waists only past the z_ra crossing" % (cn2, start_r0_waists))
    return np.geomspace(lo, hi, n_lengths)


def von_karman_phase_psd(kx, ky, r0: float, outer_scale: float, inner_scale: float):
    """Phase power spectrum 0.49 r0^(-5/3) (k^2 + k_o^2)^(-11/6) exp(-k^2/k_m^2)."""
    k2 = np.asarray(kx) ** 2 + np.asarray(ky) ** 2
    k0 = 2 * np.pi / outer_scale
    km = 5.32 / inner_scale
    return 0.49 * r0 ** (-5 / 3) * (k2 + k0 * k0) ** (-11 / 6) * np.exp(-k2 / (km * km))


def von_karman_index_psd(kx, ky, kz, cn2: float, outer_scale: float, inner_scale: Optional[float] = None):
    """Refractive-index spectrum 0.033 Cn2 (k^2 + k_o^2)^(-11/6)."""
    k2 = np.asarray(kx) ** 2 + np.asarray(ky) ** 2 + np.asarray(kz) ** 2
    k0 = 2 * np.pi / outer_scale
    out = 0.033 * cn2 * (k2 + k0 * k0) ** (-11 / 6)
    if inner_scale:
        out = out * np.exp(-k2 / (5.92 / inner_scale) ** 2)
    return out


def phase_structure_function(r: float, r0: float, outer_scale: float, inner_scale: float) -> float:
    """D(r) = 4π ∫ κ Φ(κ) (1 - J0(κr)) dκ for the von Kármán phase spectrum."""

    def integrand(u):
        kappa = np.exp(u)
        psd = von_karman_phase_psd(kappa, 0.0, r0, outer_scale, inner_scale)
        return 4 * np.pi * kappa * kappa * psd * (1 - special.j0(kappa * r))

    k0 = 2 * np.pi / outer_scale
    km = 5.32 / inner_scale
    lo = np.log(min(k0, 1 / r) * 1e-4)
    hi = np.log(km * 10)
    value, _ = integrate.quad(integrand, lo, hi, limit=1000)
    return float(value)


@dataclass(frozen=True)
class PhaseScreen:
    """Signed phase map (radians at the reference wavelength) at position along a link."""

    grid: Grid
    phase: np.ndarray
    r0: float
    position: float = 0.0

    def __post_init__(self):
        phase = np.asarray(self.phase, dtype=float)
        if phase.shape != self.grid.shape:
            raise GridError("screen shape %s doesn't match grid %s" % (phase.shape, self.grid.shape))
        view = phase.view()
        view.flags.writeable = False
        object.__setattr__(self, "phase", view)


@dataclass(frozen=True)
class PhaseScreenStack:
    """Screens ordered along the link, phases at reference_wavelength."""

    screens: Tuple[PhaseScreen, ...]
    reference_wavelength: float
    atmosphere: Optional[AtmosphereParams] = None

    def __post_init__(self):
        object.__setattr__(self, "screens", tuple(self.screens))
        positions = [s.position for s in self.screens]
        if any(p < 0 for p in positions):
            raise ValueError("screen positions must be nonnegative")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("screen positions must be strictly increasing")

    def phase_scale(self, wavelength: float, dispersion: bool = True) -> float:
        scale = self.reference_wavelength / wavelength
        if dispersion and self.atmosphere is not None:
            scale *= dispersion_ratio(self.atmosphere, wavelength, self.reference_wavelength)
        return scale


def synth_phase_screen(
    grid: Grid, r0: float, outer_scale: float, inner_scale: float, seed: int, n_subharmonics: int = 10
) -> PhaseScreen:
    """Von Kármán phase screen by the FFT method plus low-frequency subharmonics.

    The FFT part sums complex Gaussian coefficients sqrt(Φ) Δκ on the grid's κ lattice and
    keeps the real part. Each subharmonic level p adds the 3 x 3 lattice with spacing
    Δκ / 3^p around zero, skipping its center. The low-frequency part has its piston
    removed. A 1D grid takes the central row of the 2D screen.
    """
    dx = grid.dx
    if dx > r0 / 2:
        raise GridError("grid spacing %g doesn't resolve r0 = %g (needs dx <= r0/2)" % (dx, r0))
    extent = grid.extent
    if extent > outer_scale:
        log.warning("screen extent %g m exceeds the outer scale %g m", extent, outer_scale)
    if extent < 4 * r0:
        log.warning("screen extent %g m spans fewer than 4 r0 (%g m)", extent, r0)

    rng = np.random.default_rng(seed)
    n = grid.n_points
    square = Grid(n, extent, ndim=2)
    dk = 2 * np.pi / extent
    ky, kx = square.reciprocal().mesh()
    psd = von_karman_phase_psd(kx, ky, r0, outer_scale, inner_scale)
    psd[n // 2, n // 2] = 0.0
    coeffs = (rng.standard_normal(psd.shape) + 1j * rng.standard_normal(psd.shape)) * np.sqrt(psd) * dk
    # ortho inverse carries 1/n; the screen is the plain sum over coefficients
    high = (centered_ifft(coeffs, (0, 1)) * n).real

    y, x = square.mesh()
    low = np.zeros(square.shape)
    for p in range(1, n_subharmonics + 1):
        dkp = dk / 3**p
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                if i == 0 and j == 0:
                    continue
                kxp, kyp = i * dkp, j * dkp
                amp = np.sqrt(von_karman_phase_psd(kxp, kyp, r0, outer_scale, inner_scale)) * dkp
                c = (rng.standard_normal() + 1j * rng.standard_normal()) * amp
                low += (c * np.exp(1j * (kxp * x + kyp * y))).real
    low -= low.mean()

    phase = high + low
    if grid.ndim == 1:
        phase = phase[n // 2]
    return PhaseScreen(grid, phase, r0)


def measure_structure_function(screens: Sequence[PhaseScreen], lags: Sequence[int]) -> np.ndarray:
    """Ensemble mean of (φ(x + r) - φ(x))^2 for each lag in samples, along both axes of 2D screens."""
    out = []
    for lag in lags:
        acc = []
        for s in screens:
            ph = s.phase
            acc.append(np.mean((ph[..., lag:] - ph[..., :-lag]) ** 2))
            if ph.ndim == 2:
                acc.append(np.mean((ph[lag:, :] - ph[:-lag, :]) ** 2))
        out.append(np.mean(acc))
    return np.array(out)


def split_link(r0_total: float, n_screens: int) -> List[float]:
    """Equal-strength split: each of M screens gets r0_total * M^(3/5)."""
    if n_screens < 1:
        raise ValueError("a link needs at least one screen")
    return [r0_total * n_screens ** (3 / 5)] * n_screens


def screen_positions(link_length: float, n_screens: int) -> List[float]:
    """Midpoints of M equal link sections, z (2m - 1) / 2M."""
    return [link_length * (2 * m - 1) / (2 * n_screens) for m in range(1, n_screens + 1)]


def synth_screen_stack(
    grid: Grid,
    atm: AtmosphereParams,
    link_length: float,
    reference_wavelength: float,
    n_screens: int = 2,
    seed: int = 0,
    n_subharmonics: int = 10,
) -> PhaseScreenStack:
    """Screens for a constant-Cn2 link of link_length, with seeds derived from seed."""
    r0 = fried_parameter(atm.cn2, link_length, reference_wavelength)
    seeds = np.random.SeedSequence(seed).generate_state(n_screens)
    screens = []
    for r0_m, z_m, s in zip(split_link(r0, n_screens), screen_positions(link_length, n_screens), seeds):
        screen = synth_phase_screen(grid, r0_m, atm.outer_scale, atm.inner_scale, int(s), n_subharmonics)
        screens.append(replace(screen, position=z_m))
    return PhaseScreenStack(tuple(screens), reference_wavelength, atm)


def _check_stack(stack: PhaseScreenStack, grid: Grid, link_length: float):
    for s in stack.screens:
        if s.grid != grid:
            raise GridError("screen grid doesn't match the field grid")
        if s.position >= link_length:
            raise ValueError("screen at %g m lies beyond the link length %g m" % (s.position, link_length))


def propagate_pump_link(
    pump: ComplexField,
    stack: PhaseScreenStack,
    link_length: float,
    guard: Optional[float] = None,
    dispersion: bool = True,
) -> ComplexField:
    """Split-step propagation to the receiver aperture plane."""
    if pump.domain != POSITION:
        raise FieldError("link propagation needs a position-domain field")
    _check_stack(stack, pump.grid, link_length)
    scale = stack.phase_scale(pump.wavelength, dispersion)
    z = 0.0
    f = pump
    for s in stack.screens:
        f = propagate_angular_spectrum(f, s.position - z, guard)
        f = f.with_values(f.values * np.exp(1j * scale * s.phase))
        z = s.position
    return propagate_angular_spectrum(f, link_length - z, guard)


def propagate_joint_link(
    psi: JointAmplitude,
    stack: PhaseScreenStack,
    link_length: float,
    guard: Optional[float] = None,
    dispersion: bool = True,
) -> JointAmplitude:
    """Split-step propagation of a pair: each screen acts on both photons."""
    if psi.domain != POSITION:
        raise FieldError("link propagation needs a position-domain amplitude")
    _check_stack(stack, psi.grid_s, link_length)
    scale = stack.phase_scale(psi.photon_wavelength, dispersion)
    z = 0.0
    for s in stack.screens:
        psi = propagate_joint(psi, s.position - z, guard)
        psi = apply_diffuser_joint(psi, np.exp(1j * scale * s.phase))
        z = s.position
    return propagate_joint(psi, link_length - z, guard)


class LinkForward:
    """Pump and pair observables in the receiver far field for a shaped transmitter pump."""

    def __init__(self, pump: ComplexField, b: float, stack: Optional[PhaseScreenStack], link_length: float, dispersion=True):
        self.pump_field = pump
        self.b = b
        self.stack = stack or PhaseScreenStack((), pump.wavelength)
        self.link_length = link_length
        self.dispersion = dispersion
        self.grid = pump.grid
        self.medium = None

    def shaped(self, phase):
        return self.pump_field.with_values(self.pump_field.values * np.exp(1j * phase))

    def pump(self, phase):
        f = propagate_pump_link(self.shaped(phase), self.stack, self.link_length, dispersion=self.dispersion)
        return intensity(far_field(f))

    def coincidence(self, phase):
        psi = build_state_from_pump(self.shaped(phase), self.b)
        psi = propagate_joint_link(psi, self.stack, self.link_length, dispersion=self.dispersion)
        return coincidence_slice(psi)


@dataclass(frozen=True)
class LinkSweepResult:
    """β against link length for one atmosphere, normalized to vacuum propagation."""

    atmosphere: AtmosphereParams
    lengths: np.ndarray
    beta_optimized: np.ndarray
    beta_unoptimized: np.ndarray
    z_o: float
    z_no: float
    rows: Tuple[dict, ...] = ()

    @property
    def z_ratio(self) -> float:
        return self.z_o / self.z_no


def half_crossing(lengths: Sequence[float], betas: Sequence[float], level: float = 0.5) -> float:
    """First length where β falls to level, interpolated linearly in log length."""
    lengths = np.asarray(lengths, dtype=float)
    betas = np.asarray(betas, dtype=float)
    ok = np.isfinite(betas)
    lengths, betas = lengths[ok], betas[ok]
    below = np.nonzero(betas < level)[0]
    if below.size == 0 or below[0] == 0:
        return float("nan")
    j = below[0]
    l0, l1 = np.log(lengths[j - 1]), np.log(lengths[j])
    b0, b1 = betas[j - 1], betas[j]
    return float(np.exp(l0 + (b0 - level) * (l1 - l0) / (b0 - b1)))


@dataclass(frozen=True)
class LinkSetup:
    """Transmitter and optimizer settings for a link sweep."""

    pump: ComplexField
    b: float
    slm: SlmConfig
    n_screens: int = 2
    n_seeds: int = 10
    passes: int = 1
    n_subharmonics: int = 10


def link_trial(setup: LinkSetup, atm: AtmosphereParams, length: float, seed: int) -> dict:
    """One (atmosphere, length, seed) task: unoptimized and pump-optimized coincidence β."""
    grid = setup.pump.grid
    target = target_cell(grid)
    zero = np.zeros(grid.shape)
    vacuum = LinkForward(setup.pump, setup.b, None, length)
    beta_vac = beta_metric(vacuum.coincidence(zero), target)
    stack = synth_screen_stack(
        grid, atm, length, setup.pump.wavelength, setup.n_screens, seed, setup.n_subharmonics
    )
    fwd = LinkForward(setup.pump, setup.b, stack, length)
    beta_unopt = beta_metric(fwd.coincidence(zero), target) / beta_vac
    fb = FeedbackChannel(PUMP_INTENSITY, target, seed=seed)
    trace = stepwise_optimize(fwd, setup.slm, fb, passes=setup.passes, track_coincidence=False)
    phase = setup.slm.expand(trace.final_mask, grid)
    beta_opt = beta_metric(fwd.coincidence(phase), target) / beta_vac
    r0 = fried_parameter(atm.cn2, length, setup.pump.wavelength)
    return dict(
        cn2=atm.cn2,
        length_m=float(length),
        seed=int(seed),
        beta_opt=float(beta_opt),
        beta_unopt=float(beta_unopt),
        sigma_R2=rytov_variance(atm.cn2, length, 2 * setup.pump.wavelength),
        r0_m=r0,
    )


SweepLengths = Union[Sequence[float], Mapping[float, Sequence[float]]]


def lengths_for(lengths: SweepLengths, atm: AtmosphereParams) -> List[float]:
    """The lengths swept for atm: one shared list, or a list per Cn2."""
    if isinstance(lengths, Mapping):
        return [float(z) for z in lengths[atm.cn2]]
    return [float(z) for z in lengths]


def link_length_sweep(
    atmospheres: Sequence[AtmosphereParams], lengths: SweepLengths, setup: LinkSetup, seeds: Optional[Sequence[int]] = None, pool=None
) -> List[LinkSweepResult]:
    """β_opt and β_unopt against link length per atmosphere, seed-averaged.

    Lengths whose screens can't be resolved on the grid are skipped with a warning.
    """
    seeds = list(seeds) if seeds is not None else list(range(setup.n_seeds))
    tasks = [(atm, z, s) for atm in atmospheres for z in lengths_for(lengths, atm) for s in seeds]

    def run(task):
        atm, z, s = task
        try:
            return link_trial(setup, atm, z, s)
        except GridError as e:
            log.warning("skipping Cn2=%g at %g m: %s", atm.cn2, z, e)
            return None

    rows = pool.map(run, tasks) if pool is not None else [run(t) for t in tasks]
    return summarize_sweep(atmospheres, lengths, [r for r in rows if r is not None])


def summarize_sweep(atmospheres: Sequence[AtmosphereParams], lengths: SweepLengths, rows: Sequence[dict]) -> List[LinkSweepResult]:
    """Seed-average link_trial rows into one LinkSweepResult per atmosphere."""
    results = []
    for atm in atmospheres:
        mine = [r for r in rows if r["cn2"] == atm.cn2]
        zs = lengths_for(lengths, atm)
        opt, unopt = [], []
        for z in zs:
            at_z = [r for r in mine if r["length_m"] == z]
            opt.append(np.mean([r["beta_opt"] for r in at_z]) if at_z else np.nan)
            unopt.append(np.mean([r["beta_unopt"] for r in at_z]) if at_z else np.nan)
        results.append(
            LinkSweepResult(
                atm,
                np.asarray(zs, dtype=float),
                np.array(opt),
                np.array(unopt),
                half_crossing(zs, opt),
                half_crossing(zs, unopt),
                tuple(mine),
            )
        )
        log.info("Cn2=%g: z_o=%.4g m, z_no=%.4g m", atm.cn2, results[-1].z_o, results[-1].z_no)
    return results


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float


def scaling_fit(results: Sequence[LinkSweepResult], min_points: int = MIN_SCALING_POINTS) -> ScalingFit:
    """Linear fit of z_o / z_no against Cn2^(5/11)."""
    x = np.array([r.atmosphere.cn2 ** (5 / 11) for r in results])
    y = np.array([r.z_ratio for r in results])
    ok = np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) < min_points:
        raise StatisticsError(
            "scaling fit needs %d Cn2 values with both crossings, got %d of %d" % (min_points, len(x), len(results))
        )
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), float(r2))
