# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: SLM model, feedback channels and wavefront-shaping optimizers"""
import logging as log
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import FieldError, GridError, StatisticsError
from .field import POSITION, Grid, ComplexField, RealField, far_field, intensity, centered_fft
from .media import (
    DiffuserRealization,
    VolumeDiffuser,
    Medium,
    transmit,
    transmission_at,
    translate,
)
from .spdc import (
    JointAmplitude,
    apply_diffuser_joint,
    build_state_from_pump,
    coincidence_slice,
    thin_crystal_coincidence,
)

PUMP_INTENSITY = "pump_intensity"
COINCIDENCE_POISSON = "coincidence_poisson"
FEEDBACK_MODES = (PUMP_INTENSITY, COINCIDENCE_POISSON)


@dataclass(frozen=True)
class SlmConfig:
    """Segmented phase-only SLM imaged onto the crystal plane.

    Segments are N equal contiguous tiles across the aperture (a square layout of
    sqrt(N) x sqrt(N) tiles on 2D grids). Samples outside the aperture belong to the
    nearest edge tile, so the tiles always partition the grid.
    """

    n_segments: int
    phase_levels: int = 8
    response_time: float = 0.1
    aperture: Optional[float] = None

    def __post_init__(self):
        if self.n_segments < 1:
            raise ValueError("SLM needs at least one segment")
        if self.phase_levels < 3:
            raise ValueError("cosine fitting needs at least 3 phase levels")
        if not self.response_time > 0:
            raise ValueError("response time must be positive")

    def tiles(self, grid: Grid) -> np.ndarray:
        """Segment index of every grid sample."""
        aperture = self.aperture or grid.extent
        if grid.ndim == 1:
            per_axis = self.n_segments
        else:
            per_axis = int(round(np.sqrt(self.n_segments)))
            if per_axis * per_axis != self.n_segments:
                raise GridError("2D SLM layouts need a square number of segments")
        x = grid.coords()
        idx = np.clip(np.floor((x + aperture / 2) / (aperture / per_axis)), 0, per_axis - 1).astype(int)
        if grid.ndim == 1:
            return idx
        return idx[:, None] * per_axis + idx[None, :]

    def expand(self, mask: np.ndarray, grid: Grid) -> np.ndarray:
        """Per-segment phases mapped onto the grid."""
        mask = np.asarray(mask, dtype=float)
        if mask.shape != (self.n_segments,):
            raise ValueError("mask needs %d phases, got shape %s" % (self.n_segments, mask.shape))
        return mask[self.tiles(grid)]

    def phase_offsets(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.phase_levels) / self.phase_levels


@dataclass(frozen=True)
class FeedbackChannel:
    """What the optimizer measures, and where.

    With photon-counting feedback, a difference between readings counts only when it
    exceeds significance standard deviations of the shot noise.
    """

    mode: str
    target: np.ndarray
    integration_time: float = 1.0
    rate_scale: float = 1.0
    seed: int = 0
    baseline_cells: int = 10
    significance: float = 2.0

    def __post_init__(self):
        if self.mode not in FEEDBACK_MODES:
            raise ValueError("unknown feedback mode %r" % (self.mode,))
        target = np.asarray(self.target, dtype=bool)
        if not target.any():
            raise ValueError("target region is empty")
        object.__setattr__(self, "target", target)
        if self.mode == COINCIDENCE_POISSON and not self.rate_scale > 0:
            raise ValueError("coincidence feedback needs a positive rate scale")
        if not self.integration_time > 0:
            raise ValueError("integration time must be positive")
        if self.significance < 0:
            raise ValueError("significance must be nonnegative")


def target_cell(grid: Grid, offset: int = 0) -> np.ndarray:
    """Single far-field cell at the grid center, shifted along x by offset cells."""
    mask = np.zeros(grid.shape, dtype=bool)
    center = grid.n_points // 2
    mask[(center,) * (grid.ndim - 1) + (center + offset,)] = True
    return mask


@dataclass(frozen=True)
class TraceRow:
    time: float
    iteration: int
    mask: np.ndarray
    feedback: float
    beta_pump: float
    beta_coinc: float


@dataclass
class OptimizationTrace:
    """Feedback, masks and both β metrics over one optimization run."""

    rows: List[TraceRow] = field(default_factory=list)
    baseline_pump: Optional[float] = None
    baseline_coinc: Optional[float] = None
    skipped: List[int] = field(default_factory=list)

    def record(self, row: TraceRow):
        if self.rows and row.time < self.rows[-1].time:
            raise ValueError("trace times must be nondecreasing")
        self.rows.append(row)

    @property
    def final_mask(self) -> Optional[np.ndarray]:
        return self.rows[-1].mask if self.rows else None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])

    @property
    def eta_pump(self) -> float:
        return enhancement(self)[0]

    @property
    def eta_coinc(self) -> float:
        return enhancement(self)[1]


def optimization_to_rows(trace: OptimizationTrace) -> List[dict]:
    """Rows for CSV export."""
    return [
        dict(time_s=r.time, iteration=r.iteration, feedback=r.feedback, beta_pump=r.beta_pump, beta_coinc=r.beta_coinc)
        for r in trace.rows
    ]


def beta_metric(pattern: Union[RealField, np.ndarray], target: np.ndarray) -> float:
    """Fraction of the pattern's total signal inside target."""
    values = pattern.values if isinstance(pattern, RealField) else np.asarray(pattern, dtype=float)
    total = values.sum()
    if total <= 0:
        raise StatisticsError("β is undefined for a pattern with zero total")
    return float(values[np.asarray(target, dtype=bool)].sum() / total)


def poisson_counts(true_rate: float, integration_time: float, seed=None, size=None):
    """Poisson-distributed counts with mean true_rate * integration_time."""
    if true_rate < 0:
        raise ValueError("rate must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    counts = rng.poisson(true_rate * integration_time, size=size)
    return int(counts) if size is None else counts


class ThinCrystalForward:
    """Thin-crystal fast path: pump far field and the sum-coordinate coincidence pattern."""

    def __init__(self, pump: ComplexField, medium: Optional[DiffuserRealization] = None):
        if pump.domain != POSITION:
            raise ValueError("forward models take a position-domain pump")
        self.pump_field = pump
        self.medium = medium
        self.grid = pump.grid

    def with_medium(self, medium) -> "ThinCrystalForward":
        return type(self)(self.pump_field, medium)

    def shaped(self, phase: np.ndarray) -> ComplexField:
        return self.pump_field.with_values(self.pump_field.values * np.exp(1j * phase))

    def pump(self, phase: np.ndarray) -> RealField:
        f = self.shaped(phase)
        if self.medium is not None:
            f = transmit(self.medium, f)
        return intensity(far_field(f))

    def coincidence(self, phase: np.ndarray) -> RealField:
        if isinstance(self.medium, VolumeDiffuser):
            raise FieldError("the thin-crystal fast path needs a thin medium")
        if self.medium is None:
            a = np.ones(self.grid.shape)
        else:
            a = transmission_at(self.medium, 2 * self.pump_field.wavelength)
        return thin_crystal_coincidence(self.shaped(phase), a)


class JointStateForward(ThinCrystalForward):
    """Finite-K forward model: the shaped pump builds the joint state, which scatters as a pair.

    The coincidence observable is the signal pattern with the idler detector fixed at q_i = 0.
    """

    def __init__(self, pump: ComplexField, b: float, medium: Optional[Medium] = None):
        super().__init__(pump, medium)
        if pump.grid.ndim != 1:
            raise GridError("joint-state forward model is 1D transverse")
        self.b = b

    def with_medium(self, medium) -> "JointStateForward":
        return type(self)(self.pump_field, self.b, medium)

    def transmitted_state(self, phase: np.ndarray) -> JointAmplitude:
        """Joint amplitude just after the medium, position domain."""
        psi = build_state_from_pump(self.shaped(phase), self.b)
        if isinstance(self.medium, VolumeDiffuser):
            return self.medium.transmit_joint(psi)
        if self.medium is not None:
            return apply_diffuser_joint(psi, transmission_at(self.medium, psi.photon_wavelength))
        return psi

    def coincidence(self, phase: np.ndarray) -> RealField:
        return coincidence_slice(self.transmitted_state(phase))


def estimate_baseline(
    forward, target: np.ndarray, cells: int = 10, spacing: int = 3, coincidence: bool = True
) -> Tuple[float, float]:
    """Mean pre-optimization β for both channels over target copies shifted along x.

    With coincidence=False the coincidence baseline is nan.
    """
    zero = np.zeros(forward.grid.shape)
    offsets = spacing * (np.arange(cells) - cells // 2)
    pump = forward.pump(zero)
    bp = np.mean([beta_metric(pump, np.roll(target, k, axis=-1)) for k in offsets])
    bc = float("nan")
    if coincidence:
        coinc = forward.coincidence(zero)
        bc = np.mean([beta_metric(coinc, np.roll(target, k, axis=-1)) for k in offsets])
    return float(bp), float(bc)


def enhancement(trace: OptimizationTrace) -> Tuple[float, float]:
    """(η_pump, η_coinc): final β over the pre-optimization baseline."""
    if not trace.rows:
        raise StatisticsError("enhancement needs a nonempty trace")
    if not trace.baseline_pump or not trace.baseline_coinc:
        raise StatisticsError("enhancement needs a nonzero pre-optimization baseline")
    last = trace.rows[-1]
    return last.beta_pump / trace.baseline_pump, last.beta_coinc / trace.baseline_coinc


def ensemble_enhancement(traces: Sequence[OptimizationTrace]) -> Tuple[float, float]:
    """Mean final β over the mean baseline, across independent runs."""
    base_p = np.mean([t.baseline_pump for t in traces])
    base_c = np.mean([t.baseline_coinc for t in traces])
    if not base_p or not base_c:
        raise StatisticsError("enhancement needs a nonzero pre-optimization baseline")
    return (
        float(np.mean([t.rows[-1].beta_pump for t in traces]) / base_p),
        float(np.mean([t.rows[-1].beta_coinc for t in traces]) / base_c),
    )


def fit_cosine(phases: np.ndarray, values: np.ndarray) -> Tuple[float, float]:
    """Least-squares a0 + a1 cos θ + a2 sin θ; returns (θ at the maximum, modulation amplitude)."""
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    (_, a1, a2), *_ = np.linalg.lstsq(design, np.asarray(values, dtype=float), rcond=None)
    return float(np.mod(np.arctan2(a2, a1), 2 * np.pi)), float(np.hypot(a1, a2))


class _Session:
    """Measurement loop shared by the optimizers: clock, noise and trace bookkeeping."""

    def __init__(self, forward, slm: SlmConfig, fb: FeedbackChannel, forward_at=None, track_coincidence=True):
        self.forward = forward
        self.forward_at = forward_at or (lambda _t: forward)
        self.slm = slm
        self.fb = fb
        self.track_coincidence = track_coincidence
        self.rng = np.random.default_rng(fb.seed)
        self.time = 0.0
        self.iteration = 0
        self.mask = np.zeros(slm.n_segments)
        self.trace = OptimizationTrace()
        self.trace.baseline_pump, self.trace.baseline_coinc = estimate_baseline(
            forward, fb.target, fb.baseline_cells, coincidence=track_coincidence
        )

    def phase(self, mask: np.ndarray) -> np.ndarray:
        return self.slm.expand(mask, self.forward.grid)

    def measure(self, mask: np.ndarray) -> float:
        """One feedback reading; the SLM settles for response_time first."""
        fwd = self.forward_at(self.time)
        self.time += self.slm.response_time
        if self.fb.mode == PUMP_INTENSITY:
            return beta_metric(fwd.pump(self.phase(mask)), self.fb.target)
        beta = beta_metric(fwd.coincidence(self.phase(mask)), self.fb.target)
        return float(poisson_counts(self.fb.rate_scale * beta, self.fb.integration_time, self.rng))

    def record(self, feedback: float):
        fwd = self.forward_at(self.time)
        phase = self.phase(self.mask)
        beta_p = beta_metric(fwd.pump(phase), self.fb.target)
        beta_c = beta_metric(fwd.coincidence(phase), self.fb.target) if self.track_coincidence else float("nan")
        self.trace.record(TraceRow(self.time, self.iteration, self.mask.copy(), feedback, beta_p, beta_c))
        self.iteration += 1

    def improves(self, candidate: float, current: float) -> bool:
        if self.fb.mode == PUMP_INTENSITY:
            return candidate > current
        # two Poisson counts differ with variance candidate + current
        return candidate - current > self.fb.significance * np.sqrt(candidate + current)

    def modulated(self, values: Sequence[float], amplitude: float) -> bool:
        """Whether a phase cycle's cosine amplitude stands out of the shot noise."""
        if self.fb.mode == PUMP_INTENSITY:
            return True
        noise = np.sqrt(2 * np.mean(values) / len(values))
        return amplitude > self.fb.significance * noise

    def step_segment(self, seg: int):
        offsets = self.slm.phase_offsets()
        values = []
        for theta in offsets:
            trial = self.mask.copy()
            trial[seg] = theta
            values.append(self.measure(trial))
        if not np.any(values):
            log.warning("segment %d: feedback was zero across the phase cycle, skipped", seg)
            self.trace.skipped.append(seg)
            return
        best, amplitude = fit_cosine(offsets, values)
        if not self.modulated(values, amplitude):
            log.debug("segment %d: modulation %.3g is within the shot noise, kept", seg, amplitude)
            self.record(self.measure(self.mask))
            return
        self.mask[seg] = best
        self.record(self.measure(self.mask))

    def step_partition(self, subset: np.ndarray):
        offsets = self.slm.phase_offsets()
        values = []
        for theta in offsets:
            trial = self.mask.copy()
            trial[subset] += theta
            values.append(self.measure(trial))
        if not np.any(values):
            log.warning("iteration %d: feedback was zero across the phase cycle, skipped", self.iteration)
            self.trace.skipped.append(self.iteration)
            self.record(values[0])
            return
        best, _ = fit_cosine(offsets, values)
        trial = self.mask.copy()
        trial[subset] = np.mod(trial[subset] + best, 2 * np.pi)
        candidate = self.measure(trial)
        # offset 0 is the current mask
        if self.improves(candidate, values[0]):
            self.mask = trial
            self.record(candidate)
        else:
            self.record(values[0])

    def subset(self) -> np.ndarray:
        n = self.slm.n_segments
        return self.partition_rng.permutation(n)[: max(1, n // 2)]

    @property
    def partition_rng(self) -> np.random.Generator:
        if not hasattr(self, "_partition_rng"):
            self._partition_rng = np.random.default_rng([self.fb.seed, 1])
        return self._partition_rng


def stepwise_optimize(forward, slm: SlmConfig, fb: FeedbackChannel, passes: int = 2, track_coincidence=True) -> OptimizationTrace:
    """Sequential optimization: each segment in turn is stepped through M phases and set by cosine fit."""
    session = _Session(forward, slm, fb, track_coincidence=track_coincidence)
    session.record(session.measure(session.mask))
    for _ in range(passes):
        for seg in range(slm.n_segments):
            session.step_segment(seg)
    log.debug("stepwise: %d segments, %d passes, %d skipped", slm.n_segments, passes, len(session.trace.skipped))
    return session.trace


def partition_optimize(
    forward, slm: SlmConfig, fb: FeedbackChannel, n_iterations: int, track_coincidence=True
) -> OptimizationTrace:
    """Partitioning optimization: random halves of the segments get a common best phase offset.

    A new mask is kept only when its fresh reading beats the current one.
    """
    session = _Session(forward, slm, fb, track_coincidence=track_coincidence)
    session.record(session.measure(session.mask))
    for _ in range(n_iterations):
        session.step_partition(session.subset())
    return session.trace


def power_law_exponent(points: Sequence[Tuple[float, float]]) -> float:
    """Slope of log β_coinc against log β_pump."""
    pts = np.asarray(points, dtype=float)
    pts = pts[np.all(pts > 0, axis=1)]
    if len(pts) < 2:
        raise StatisticsError("power-law fit needs at least two positive points")
    slope, _ = np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)
    return float(slope)


@dataclass(frozen=True)
class BetaScan:
    points: np.ndarray
    exponent: float


def beta_relation_scan(forward, slm: SlmConfig, fb: FeedbackChannel, n_iterations: int) -> BetaScan:
    """(β_pump, β_coinc) pairs registered while a pump-feedback optimization runs."""
    trace = partition_optimize(forward, slm, fb, n_iterations)
    points = np.column_stack([trace.column("beta_pump"), trace.column("beta_coinc")])
    return BetaScan(points, power_law_exponent(points))


def absorption_scan(pump: ComplexField, target: np.ndarray, transmissions: Sequence[float]) -> BetaScan:
    """β pairs under a global amplitude loss t on the pump and on each photon.

    Both channels are normalized to the lossless total, so β_pump goes as t^2 and
    β_coinc as t^4.
    """
    raw = []
    for t in transmissions:
        p = intensity(far_field(pump.with_values(pump.values * t))).values
        c = np.abs(centered_fft(pump.values * t * t, pump.grid.axes)) ** 2
        raw.append((p, c))
    ref_p = intensity(far_field(pump)).values
    ref_c = np.abs(centered_fft(pump.values, pump.grid.axes)) ** 2
    beta0_p = ref_p[target].sum() / ref_p.sum()
    beta0_c = ref_c[target].sum() / ref_c.sum()
    points = np.array(
        [(p[target].sum() / ref_p.sum() / beta0_p, c[target].sum() / ref_c.sum() / beta0_c) for p, c in raw]
    )
    return BetaScan(points, power_law_exponent(points))


def dynamic_run(
    forward,
    slm: SlmConfig,
    fb: FeedbackChannel,
    speed: float,
    duration: float,
    schedule: Optional[Callable[[float], bool]] = None,
    track_coincidence=True,
) -> OptimizationTrace:
    """Closed-loop partitioning while the medium drifts along x at speed (m/s).

    schedule(t) says whether the optimizer runs at time t; while it is off, the current
    mask is only measured.
    """
    base = forward.medium
    if base is None and speed:
        raise ValueError("a drifting run needs a medium")

    def forward_at(t):
        if not speed:
            return forward
        offset = np.fmod(speed * t, base.grid.extent)
        if isinstance(base, VolumeDiffuser):
            return forward.with_medium(base.translate(offset))
        return forward.with_medium(translate(base, offset))

    session = _Session(forward, slm, fb, forward_at=forward_at, track_coincidence=track_coincidence)
    session.record(session.measure(session.mask))
    while session.time < duration:
        if schedule is None or schedule(session.time):
            session.step_partition(session.subset())
        else:
            session.record(session.measure(session.mask))
    return session.trace
