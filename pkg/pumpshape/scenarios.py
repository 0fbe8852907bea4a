# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: desk-scale scenarios, one per reproduced experiment

Every scenario splits into independent tasks.  A task is a pure function of its
parameters and its child seed, and returns rows for the scenario's tables.  After all
tasks finish, summarize() reads the stored rows back (in task order) and adds the
aggregate tables.
"""
import logging as log
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
from notanorm import DbType

from .config import Param, at_least, nonnegative, positive, register_schema, unit_interval
from .container import content_hash
from .errors import GridError
from .field import POSITION, ComplexField, Grid, far_field, flatten_envelope, intensity, pearson_correlation
from .media import (
    DEFAULT_PHOTON_WAVELENGTH,
    DEFAULT_PUMP_WAVELENGTH,
    DiffuserSpec,
    VolumeDiffuser,
    field_coherence_length,
    memory_effect_curve,
    memory_effect_half_width,
    phase_only_efficiency_bound,
    pi_step_mask,
    rayleigh_range,
    segment_efficiency,
    synth_diffuser,
    transmission_at,
    transmission_moments,
    transmit,
)
from .shaping import (
    COINCIDENCE_POISSON,
    PUMP_INTENSITY,
    FeedbackChannel,
    JointStateForward,
    SlmConfig,
    ThinCrystalForward,
    absorption_scan,
    beta_metric,
    beta_relation_scan,
    dynamic_run,
    estimate_baseline,
    partition_optimize,
    power_law_exponent,
    stepwise_optimize,
    target_cell,
)
from .spdc import (
    DoubleGaussianParams,
    apply_diffuser_joint,
    build_double_gaussian,
    coincidence_slice,
    estimate_schmidt,
    heralded_photon,
    schmidt_number_numeric,
    singles_pattern,
)
from .store import Column, ResultStore, TableSpec
from .turbulence import (
    AtmosphereParams,
    LinkSetup,
    cn2_for_r0,
    coherence_radius,
    crossing_lengths,
    link_trial,
    scaling_fit,
    summarize_sweep,
)

INT = DbType.INTEGER
TEXT = DbType.TEXT
FLOAT = DbType.DOUBLE

EXPERIMENTAL_FIG2_CORRELATION = 0.83


@dataclass
class TaskResult:
    """Rows per table from one task, plus content hashes of the media it synthesized."""

    rows: Dict[str, List[dict]] = field(default_factory=dict)
    media: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class PlotSpec:
    """One panel of the generated plot script."""

    table: str
    x: str
    y: Tuple[str, ...]
    group: Optional[str] = None
    logx: bool = False
    logy: bool = False
    title: str = ""


class Scenario:
    """Base class: subclasses with a scenario_id register themselves."""

    registry: Dict[str, Type["Scenario"]] = {}

    scenario_id: Optional[str] = None
    params: Tuple[Param, ...] = ()
    tables: Tuple[TableSpec, ...] = ()
    summary_tables: Tuple[TableSpec, ...] = ()
    plots: Tuple[PlotSpec, ...] = ()
    notes: Dict[str, Tuple[str, ...]] = {}

    def __init_subclass__(cls, **kws):
        super().__init_subclass__(**kws)
        if cls.scenario_id:
            Scenario.registry[cls.scenario_id] = cls
            register_schema(cls.scenario_id, cls.params)

    def __init__(self, params: Dict[str, Any]):
        self.p = params

    @classmethod
    def get(cls, scenario_id: str) -> Type["Scenario"]:
        return cls.registry[scenario_id]

    @classmethod
    def all_tables(cls) -> Tuple[TableSpec, ...]:
        return cls.tables + cls.summary_tables

    def tasks(self) -> List[dict]:
        raise NotImplementedError

    def run_task(self, task: dict, seed: int) -> TaskResult:
        raise NotImplementedError

    def summarize(self, store: ResultStore) -> Dict[str, List[dict]]:
        return {}

    def _seeded(self, **task) -> List[dict]:
        """Cross the task dicts with seed indexes."""
        return [dict(task, seed_index=i) for i in range(self.p["seeds"])]


def _table(name: str, *columns) -> TableSpec:
    cols = []
    for c in columns:
        if isinstance(c, str):
            c = (c,)
        cols.append(Column(*c))
    return TableSpec(name, cols)


def gaussian_pump(grid: Grid, waist: float, wavelength: float = DEFAULT_PUMP_WAVELENGTH) -> ComplexField:
    """Normalized Gaussian pump exp(-r^2/w^2)."""
    values = np.exp(-grid.radius2() / waist**2).astype(complex)
    return ComplexField(grid, values, wavelength).normalized()


def flat_top_pump(grid: Grid, aperture: float, wavelength: float = DEFAULT_PUMP_WAVELENGTH) -> ComplexField:
    """Normalized uniform pump over |r| <= aperture/2."""
    values = (np.sqrt(grid.radius2()) <= aperture / 2).astype(complex)
    return ComplexField(grid, values, wavelength).normalized()


def make_diffuser(grid: Grid, d: float, photon_phase_rms: float, seed: int, loss_strength: float = 0.0):
    """Diffuser with the given phase rms at the photon wavelength."""
    opd = photon_phase_rms * DEFAULT_PHOTON_WAVELENGTH / (2 * np.pi)
    return synth_diffuser(DiffuserSpec(d, opd, loss_strength, seed), grid)


def cell_grid(p: dict) -> Grid:
    d = p["coherence_length_m"]
    return Grid(p["n_points"], p["n_points"] * d / p["samples_per_cell"])


def speckle_region(pattern_grid: Grid, d: float, photon_phase_rms: float) -> np.ndarray:
    """|q| within one standard deviation of the pump speckle envelope."""
    return np.abs(pattern_grid.coords()) <= 2 * np.sqrt(2) * photon_phase_rms / d


def speckle_pair(grid: Grid, d: float, waist: float, schmidt: float, photon_phase_rms: float, seed: int):
    """Pump far field and coincidence slice behind one diffuser for a double-Gaussian pair.

    Returns:
        (pump pattern, coincidence pattern, envelope-flattened correlation, diffuser)
    """
    diffuser = make_diffuser(grid, d, photon_phase_rms, seed)
    pump = gaussian_pump(grid, waist)
    pump_ff = intensity(far_field(transmit(diffuser, pump)))
    params = DoubleGaussianParams.for_schmidt(schmidt, 2 / waist)
    psi = build_double_gaussian(params, grid, domain=POSITION)
    psi = apply_diffuser_joint(psi, transmission_at(diffuser, psi.photon_wavelength))
    coinc = coincidence_slice(psi)
    region = speckle_region(pump_ff.grid, d, photon_phase_rms)
    corr = pearson_correlation(flatten_envelope(pump_ff), flatten_envelope(coinc), region)
    return pump_ff, coinc, corr, diffuser


def _cell_params(n_points=1024, samples_per_cell=32, phase=2.0):
    return (
        Param("coherence_length_m", float, 50e-6, positive, "diffuser coherence length d"),
        Param("photon_phase_rms", float, phase, positive, "diffuser phase rms at the photon wavelength"),
        Param("n_points", int, n_points, at_least(64)),
        Param("samples_per_cell", int, samples_per_cell, at_least(5), "grid samples per d"),
    )


class SpeckleIdentity(Scenario):
    """Pump and coincidence speckle match at high K; both focus under pump feedback."""

    scenario_id = "fig2_speckle_identity"
    params = _cell_params() + (
        Param("pump_waist_cells", float, 4.0, positive),
        Param("schmidt", float, 680.0, at_least(1)),
        Param("seeds", int, 20, positive),
        Param("n_segments", [int], [8, 16, 32, 64], positive),
        Param("passes", int, 2, positive),
        Param("law_n_points", int, 2048, at_least(64)),
        Param("law_samples_per_cell", int, 8, at_least(5)),
        Param("aperture_fraction", float, 0.75, unit_interval),
    )
    tables = (
        _table("correlation", ("seed", INT), ("schmidt", FLOAT), ("corr", FLOAT)),
        _table("patterns", ("q", FLOAT, "rad/m"), "pump", "coincidence"),
        _table(
            "enhancement", ("seed", INT), ("n_segments", INT), "eta_pump", "eta_coinc", "eta_theory"
        ),
    )
    summary_tables = (
        _table("enhancement_law", ("n_segments", INT), "eta_pump_mean", "eta_coinc_mean", "eta_theory", "ratio_median"),
    )
    plots = (
        PlotSpec("patterns", "q", ("pump", "coincidence"), title="speckle before optimization"),
        PlotSpec("enhancement_law", "n_segments", ("eta_pump_mean", "eta_coinc_mean", "eta_theory"), title="enhancement"),
    )
    notes = {
        "correlation": (
            "measured pump/coincidence correlation in the experiment: %.2f" % EXPERIMENTAL_FIG2_CORRELATION,
            "the simulated value is higher: camera and detector noise are not modeled",
        )
    }

    def tasks(self):
        return self._seeded()

    def run_task(self, task, seed):
        p = self.p
        d = p["coherence_length_m"]
        grid = cell_grid(p)
        pump_ff, coinc, corr, diffuser = speckle_pair(
            grid, d, p["pump_waist_cells"] * d, p["schmidt"], p["photon_phase_rms"], seed
        )
        out = TaskResult(media={"diffuser": content_hash(diffuser)})
        out.rows["correlation"] = [dict(seed=task["seed_index"], schmidt=p["schmidt"], corr=corr)]
        if task["seed_index"] == 0:
            q = pump_ff.grid.coords()
            out.rows["patterns"] = [
                dict(q=qq, pump=a, coincidence=b) for qq, a, b in zip(q, pump_ff.values, coinc.values)
            ]

        law_grid = Grid(p["law_n_points"], p["law_n_points"] * d / p["law_samples_per_cell"])
        aperture = p["aperture_fraction"] * law_grid.extent
        law_diffuser = make_diffuser(law_grid, d, p["photon_phase_rms"], seed)
        fwd = ThinCrystalForward(flat_top_pump(law_grid, aperture), law_diffuser)
        fb = FeedbackChannel(PUMP_INTENSITY, target_cell(law_grid), seed=seed)
        rows = []
        for n in p["n_segments"]:
            trace = stepwise_optimize(fwd, SlmConfig(n, aperture=aperture), fb, passes=p["passes"])
            rows.append(
                dict(
                    seed=task["seed_index"],
                    n_segments=n,
                    eta_pump=trace.eta_pump,
                    eta_coinc=trace.eta_coinc,
                    eta_theory=np.pi / 4 * (n - 1) + 1,
                )
            )
        out.rows["enhancement"] = rows
        out.media["law_diffuser"] = content_hash(law_diffuser)
        return out

    def summarize(self, store):
        rows = store.select("enhancement")
        law = []
        for n in self.p["n_segments"]:
            mine = [r for r in rows if r["n_segments"] == n]
            law.append(
                dict(
                    n_segments=n,
                    eta_pump_mean=float(np.mean([r["eta_pump"] for r in mine])),
                    eta_coinc_mean=float(np.mean([r["eta_coinc"] for r in mine])),
                    eta_theory=np.pi / 4 * (n - 1) + 1,
                    ratio_median=float(np.median([r["eta_coinc"] / r["eta_pump"] for r in mine])),
                )
            )
        return {"enhancement_law": law}


class DynamicShaping(Scenario):
    """Closed-loop shaping while the diffuser drifts, with pump or photon-counting feedback."""

    scenario_id = "fig3_dynamic"
    params = _cell_params(n_points=1024, samples_per_cell=8) + (
        Param("aperture_fraction", float, 0.75, unit_interval),
        Param("n_segments", int, 16, positive),
        Param("response_time_s", float, 0.1, positive),
        Param("decorrelation_factor", float, 100.0, positive, "drift time over d, in units of N x response time"),
        Param("duration_s", float, 300.0, positive),
        Param("shaping_start_s", float, 20.0, nonnegative),
        Param("shaping_stop_s", float, 240.0, positive),
        Param("counts_per_setting", float, 0.5, positive, "mean coincidence counts per phase setting before shaping"),
        Param("seeds", int, 3, positive),
    )
    arms = ("pump", "coincidence")
    tables = (
        _table(
            "trace",
            ("arm", TEXT),
            ("seed", INT),
            ("time_s", FLOAT, "s"),
            "feedback",
            "eta_pump",
            "eta_coinc",
            ("shaping", INT),
        ),
        _table(
            "runs",
            ("arm", TEXT),
            ("seed", INT),
            "eta_static",
            "eta_sustained_pump",
            "eta_sustained_coinc",
            "eta_final_pump",
            "eta_final_coinc",
        ),
    )
    summary_tables = (
        _table("arms", ("arm", TEXT), "eta_static", "eta_sustained_pump", "eta_sustained_coinc", "eta_final_coinc"),
    )
    plots = (
        PlotSpec("trace", "time_s", ("eta_pump", "eta_coinc"), group="arm", title="dynamic shaping"),
    )

    def tasks(self):
        return [t for arm in self.arms for t in self._seeded(arm=arm)]

    def run_task(self, task, seed):
        p = self.p
        d = p["coherence_length_m"]
        grid = cell_grid(p)
        aperture = p["aperture_fraction"] * grid.extent
        diffuser = make_diffuser(grid, d, p["photon_phase_rms"], seed)
        fwd = ThinCrystalForward(flat_top_pump(grid, aperture), diffuser)
        slm = SlmConfig(p["n_segments"], response_time=p["response_time_s"], aperture=aperture)
        target = target_cell(grid)
        start, stop = p["shaping_start_s"], p["shaping_stop_s"]

        pump_fb = FeedbackChannel(PUMP_INTENSITY, target, seed=seed)
        if task["arm"] == "pump":
            fb = pump_fb
        else:
            _, base_c = estimate_baseline(fwd, target)
            fb = FeedbackChannel(COINCIDENCE_POISSON, target, rate_scale=p["counts_per_setting"] / base_c, seed=seed)

        speed = d / (p["decorrelation_factor"] * p["n_segments"] * p["response_time_s"])
        trace = dynamic_run(fwd, slm, fb, speed, p["duration_s"], schedule=lambda t: start <= t < stop)

        # static reference: same number of partition steps, no drift
        steps = int((stop - start) / (p["response_time_s"] * (slm.phase_levels + 1)))
        static = partition_optimize(fwd, slm, pump_fb, steps, track_coincidence=False)

        rows = []
        for r in trace.rows:
            rows.append(
                dict(
                    arm=task["arm"],
                    seed=task["seed_index"],
                    time_s=r.time,
                    feedback=r.feedback,
                    eta_pump=r.beta_pump / trace.baseline_pump,
                    eta_coinc=r.beta_coinc / trace.baseline_coinc,
                    shaping=int(start <= r.time < stop),
                )
            )
        late = [r for r in rows if (start + stop) / 2 <= r["time_s"] < stop]
        if not late:
            log.warning("%s: no trace rows in the second half of the shaping window", self.scenario_id)
        run = dict(
            arm=task["arm"],
            seed=task["seed_index"],
            eta_static=static.eta_pump,
            eta_sustained_pump=float(np.mean([r["eta_pump"] for r in late])) if late else float("nan"),
            eta_sustained_coinc=float(np.mean([r["eta_coinc"] for r in late])) if late else float("nan"),
            eta_final_pump=trace.eta_pump,
            eta_final_coinc=trace.eta_coinc,
        )
        return TaskResult({"trace": rows, "runs": [run]}, {"diffuser": content_hash(diffuser)})

    def summarize(self, store):
        runs = store.select("runs")
        out = []
        for arm in self.arms:
            mine = [r for r in runs if r["arm"] == arm]
            out.append(
                dict(
                    arm=arm,
                    **{
                        k: float(np.nanmean([r[k] for r in mine]))
                        for k in ("eta_static", "eta_sustained_pump", "eta_sustained_coinc", "eta_final_coinc")
                    },
                )
            )
        return {"arms": out}


def _schmidt_b(schmidt: float, waist: float) -> float:
    return DoubleGaussianParams.for_schmidt(schmidt, 2 / waist).b


class BetaRelation(Scenario):
    """β_coinc against β_pump: quadratic under absorption, linear under scattering at high K."""

    scenario_id = "fig4b_beta_relation"
    params = _cell_params(n_points=512, samples_per_cell=16, phase=1.5) + (
        Param("pump_waist_cells", float, 4.0, positive),
        Param("schmidt_values", [float], [200.0, 1.0], at_least(1)),
        Param("n_segments", int, 16, positive),
        Param("n_iterations", int, 60, positive),
        Param("transmissions", [float], [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3], unit_interval),
        Param("seeds", int, 3, positive),
    )
    tables = (
        _table("absorption", "transmission", "beta_pump_rel", "beta_coinc_rel"),
        _table("scattering", "schmidt", ("seed", INT), ("iteration", INT), "beta_pump", "beta_coinc"),
    )
    summary_tables = (_table("exponents", ("arm", TEXT), "schmidt", "exponent"),)
    plots = (
        PlotSpec("absorption", "beta_pump_rel", ("beta_coinc_rel",), logx=True, logy=True, title="absorption"),
        PlotSpec("scattering", "beta_pump", ("beta_coinc",), group="schmidt", logx=True, logy=True, title="scattering"),
    )

    def tasks(self):
        tasks = [dict(arm="absorption")]
        for k in self.p["schmidt_values"]:
            tasks += self._seeded(arm="scattering", schmidt=k)
        return tasks

    def run_task(self, task, seed):
        p = self.p
        d = p["coherence_length_m"]
        grid = cell_grid(p)
        waist = p["pump_waist_cells"] * d
        pump = gaussian_pump(grid, waist)
        target = target_cell(grid)
        if task["arm"] == "absorption":
            scan = absorption_scan(pump, target, p["transmissions"])
            rows = [
                dict(transmission=t, beta_pump_rel=bp, beta_coinc_rel=bc)
                for t, (bp, bc) in zip(p["transmissions"], scan.points)
            ]
            return TaskResult({"absorption": rows})

        diffuser = make_diffuser(grid, d, p["photon_phase_rms"], seed)
        fwd = JointStateForward(pump, _schmidt_b(task["schmidt"], waist), diffuser)
        slm = SlmConfig(p["n_segments"], aperture=4 * waist)
        fb = FeedbackChannel(PUMP_INTENSITY, target, seed=seed)
        scan = beta_relation_scan(fwd, slm, fb, p["n_iterations"])
        rows = [
            dict(
                schmidt=task["schmidt"],
                seed=task["seed_index"],
                iteration=i,
                beta_pump=float(bp),
                beta_coinc=float(bc),
            )
            for i, (bp, bc) in enumerate(scan.points)
        ]
        return TaskResult({"scattering": rows}, {"diffuser": content_hash(diffuser)})

    def summarize(self, store):
        absorption = store.select("absorption")
        out = [
            dict(
                arm="absorption",
                schmidt=float("nan"),
                exponent=power_law_exponent([(r["beta_pump_rel"], r["beta_coinc_rel"]) for r in absorption]),
            )
        ]
        scattering = store.select("scattering")
        for k in self.p["schmidt_values"]:
            pts = [(r["beta_pump"], r["beta_coinc"]) for r in scattering if r["schmidt"] == k]
            out.append(dict(arm="scattering", schmidt=k, exponent=power_law_exponent(pts)))
        return {"exponents": out}


class CorrelationVsSchmidt(Scenario):
    """Pump/coincidence speckle correlation as the pair becomes more entangled."""

    scenario_id = "fig4c_corr_vs_K"
    params = _cell_params() + (
        Param("pump_waist_cells", float, 4.0, positive),
        Param("K_values", [float], [1.0, 2.0, 5.0, 10.0, 50.0, 200.0, 680.0], at_least(1)),
        Param("seeds", int, 20, positive),
    )
    tables = (_table("correlation", "schmidt", ("seed", INT), "corr"),)
    summary_tables = (_table("corr_vs_K", "schmidt", "corr_median", "corr_q25", "corr_q75"),)
    plots = (PlotSpec("corr_vs_K", "schmidt", ("corr_median", "corr_q25", "corr_q75"), logx=True, title="correlation vs K"),)

    def tasks(self):
        return [t for k in self.p["K_values"] for t in self._seeded(schmidt=k)]

    def run_task(self, task, seed):
        p = self.p
        d = p["coherence_length_m"]
        _, _, corr, diffuser = speckle_pair(
            cell_grid(p), d, p["pump_waist_cells"] * d, task["schmidt"], p["photon_phase_rms"], seed
        )
        row = dict(schmidt=task["schmidt"], seed=task["seed_index"], corr=corr)
        return TaskResult({"correlation": [row]}, {"diffuser": content_hash(diffuser)})

    def summarize(self, store):
        rows = store.select("correlation")
        out = []
        for k in self.p["K_values"]:
            c = [r["corr"] for r in rows if r["schmidt"] == k]
            q25, med, q75 = np.percentile(c, [25, 50, 75])
            out.append(dict(schmidt=k, corr_median=med, corr_q25=q25, corr_q75=q75))
        return {"corr_vs_K": out}


def _volume(grid: Grid, d: float, photon_phase_rms: float, gap: float, seed: int) -> VolumeDiffuser:
    s1, s2 = np.random.SeedSequence(seed).generate_state(2)
    return VolumeDiffuser(
        make_diffuser(grid, d, photon_phase_rms, int(s1)), make_diffuser(grid, d, photon_phase_rms, int(s2)), gap
    )


class DoubleDiffuser(Scenario):
    """Focus through a volume diffuser, then move the idler detector away from the optimized one."""

    scenario_id = "fig5b_double_diffuser"
    params = _cell_params(n_points=512, samples_per_cell=16, phase=1.5) + (
        Param("pump_waist_cells", float, 4.0, positive),
        Param("schmidt", float, 200.0, at_least(1)),
        Param("gap_rayleigh", float, 0.5, positive, "surface gap over the photon z_rd"),
        Param("n_segments", int, 16, positive),
        Param("passes", int, 2, positive),
        Param("displacements", [int], [0, 1, 2, 4, 8, 16, 32], nonnegative, "idler displacement, angular cells"),
        Param("seeds", int, 5, positive),
    )
    tables = (_table("displacement", ("seed", INT), ("cells", INT), "beta_volume", "beta_thin"),)
    summary_tables = (_table("degradation", ("cells", INT), "beta_volume_rel", "beta_thin_rel"),)
    plots = (PlotSpec("degradation", "cells", ("beta_volume_rel", "beta_thin_rel"), title="idler displacement"),)

    def tasks(self):
        return self._seeded()

    @staticmethod
    def _displaced_betas(fwd: JointStateForward, phase: np.ndarray, cells: Sequence[int]) -> List[float]:
        psi = fwd.transmitted_state(phase)
        center = psi.grid_s.n_points // 2
        out = []
        for c in cells:
            if center + c >= psi.grid_i.n_points:
                raise GridError("idler displacement %d leaves the grid" % c)
            pattern = coincidence_slice(psi, idler_index=center + c)
            out.append(beta_metric(pattern, target_cell(pattern.grid, -c)))
        return out

    def run_task(self, task, seed):
        p = self.p
        d = p["coherence_length_m"]
        grid = cell_grid(p)
        waist = p["pump_waist_cells"] * d
        gap = p["gap_rayleigh"] * rayleigh_range(d, DEFAULT_PHOTON_WAVELENGTH)
        volume = _volume(grid, d, p["photon_phase_rms"], gap, seed)
        pump = gaussian_pump(grid, waist)
        b = _schmidt_b(p["schmidt"], waist)
        slm = SlmConfig(p["n_segments"], aperture=4 * waist)
        fb = FeedbackChannel(PUMP_INTENSITY, target_cell(grid), seed=seed)

        betas = {}
        for arm, medium in (("volume", volume), ("thin", volume.first)):
            fwd = JointStateForward(pump, b, medium)
            trace = stepwise_optimize(fwd, slm, fb, passes=p["passes"], track_coincidence=False)
            betas[arm] = self._displaced_betas(fwd, slm.expand(trace.final_mask, grid), p["displacements"])
        rows = [
            dict(seed=task["seed_index"], cells=c, beta_volume=bv, beta_thin=bt)
            for c, bv, bt in zip(p["displacements"], betas["volume"], betas["thin"])
        ]
        return TaskResult({"displacement": rows}, {"volume": content_hash(volume)})

    def summarize(self, store):
        rows = store.select("displacement")
        zero = min(self.p["displacements"])
        rel = {"volume": {}, "thin": {}}
        for arm in rel:
            base = np.mean([r["beta_" + arm] for r in rows if r["cells"] == zero])
            for c in self.p["displacements"]:
                rel[arm][c] = float(np.mean([r["beta_" + arm] for r in rows if r["cells"] == c]) / base)
        return {
            "degradation": [
                dict(cells=c, beta_volume_rel=rel["volume"][c], beta_thin_rel=rel["thin"][c])
                for c in self.p["displacements"]
            ]
        }


def _link_params(
    n_points=512, extent=8.0, waist=1.0, pair_b=0.01, cn2=(1e-18, 1e-17, 1e-16), seeds=10, n_screens=2, n_segments=64
):
    # the pair_b defaults give K near 680 for the pump waist
    return (
        Param("n_points", int, n_points, at_least(64)),
        Param("extent_m", float, extent, positive),
        Param("waist_m", float, waist, positive),
        Param("pair_b_m", float, pair_b, positive, "pair correlation parameter b of the transmitted state"),
        Param("cn2_values", [float], list(cn2), positive),
        Param("min_length_m", float, 10.0, positive),
        Param("max_length_m", float, 1e6, positive),
        Param("n_lengths", int, 16, at_least(2)),
        Param("n_screens", int, n_screens, positive),
        Param("n_segments", int, n_segments, positive),
        Param("passes", int, 1, positive),
        Param("n_subharmonics", int, 10, nonnegative),
        Param("seeds", int, seeds, positive),
    )


def link_setup(p: dict) -> LinkSetup:
    grid = Grid(p["n_points"], p["extent_m"])
    slm = SlmConfig(p["n_segments"], aperture=2 * p["waist_m"])
    return LinkSetup(
        gaussian_pump(grid, p["waist_m"]), p["pair_b_m"], slm, p["n_screens"], p["seeds"], p["passes"], p["n_subharmonics"]
    )


_TRIAL_COLUMNS = ("beta_opt", "beta_unopt", "sigma_R2", ("r0_m", FLOAT, "m"))


class LinkSweep(Scenario):
    """Pump-optimized and unoptimized coincidence β against link length, per Cn2."""

    scenario_id = "fig5d_link_sweep"
    params = _link_params()
    tables = (_table("trials", ("cn2", FLOAT, "m^-2/3"), ("length_m", FLOAT, "m"), ("seed", INT), *_TRIAL_COLUMNS),)
    summary_tables = (
        _table("sweep", ("cn2", FLOAT, "m^-2/3"), ("length_m", FLOAT, "m"), "beta_opt", "beta_unopt"),
        _table("crossings", ("cn2", FLOAT, "m^-2/3"), ("z_o_m", FLOAT, "m"), ("z_no_m", FLOAT, "m"), "z_ratio"),
    )
    plots = (PlotSpec("sweep", "length_m", ("beta_opt", "beta_unopt"), group="cn2", logx=True, title="link sweep"),)

    def lengths(self, cn2: float) -> List[float]:
        p = self.p
        return [float(z) for z in np.geomspace(p["min_length_m"], p["max_length_m"], p["n_lengths"])]

    def tasks(self):
        return [t for cn2 in self.p["cn2_values"] for z in self.lengths(cn2) for t in self._seeded(cn2=cn2, length_m=z)]

    def run_task(self, task, seed):
        atm = AtmosphereParams(task["cn2"])
        try:
            row = link_trial(link_setup(self.p), atm, task["length_m"], seed)
        except GridError as e:
            log.warning("skipping Cn2=%g at %g m: %s", atm.cn2, task["length_m"], e)
            return TaskResult()
        row["seed"] = task["seed_index"]
        return TaskResult({"trials": [row]})

    def summarize(self, store):
        atms = [AtmosphereParams(c) for c in self.p["cn2_values"]]
        lengths = {c: self.lengths(c) for c in self.p["cn2_values"]}
        results = summarize_sweep(atms, lengths, store.select("trials"))
        sweep = [
            dict(cn2=r.atmosphere.cn2, length_m=z, beta_opt=bo, beta_unopt=bu)
            for r in results
            for z, bo, bu in zip(r.lengths, r.beta_optimized, r.beta_unoptimized)
        ]
        crossings = [dict(cn2=r.atmosphere.cn2, z_o_m=r.z_o, z_no_m=r.z_no, z_ratio=r.z_ratio) for r in results]
        self.results = results
        return {"sweep": sweep, "crossings": crossings}


class ScalingSweep(LinkSweep):
    """z_o / z_no against Cn2^(5/11) over several turbulence strengths."""

    scenario_id = "figS7_scaling"
    params = tuple(
        p
        for p in _link_params(
            n_points=1536, extent=12.0, cn2=(1e-18, 3e-18, 1e-17, 3e-17, 1e-16), n_screens=4, n_segments=128
        )
        if p.name not in ("min_length_m", "max_length_m")
    ) + (
        Param("start_r0_waists", float, 4.0, positive, "each sweep starts where r0 is this many pump waists"),
        Param("z_ra_span", float, 4.0, positive, "each sweep ends at this multiple of the length where z = z_ra"),
    )
    summary_tables = LinkSweep.summary_tables + (_table("scaling", "slope", "intercept", "r_squared"),)
    plots = LinkSweep.plots + (PlotSpec("crossings", "cn2", ("z_ratio",), logx=True, title="z_o / z_no"),)

    def lengths(self, cn2):
        p = self.p
        zs = crossing_lengths(
            cn2, DEFAULT_PUMP_WAVELENGTH, p["waist_m"], p["n_lengths"], p["start_r0_waists"], p["z_ra_span"]
        )
        return [float(z) for z in zs]

    def summarize(self, store):
        out = super().summarize(store)
        fit = scaling_fit(self.results)
        out["scaling"] = [dict(slope=fit.slope, intercept=fit.intercept, r_squared=fit.r_squared)]
        return out


class NarrowWaistSweep(LinkSweep):
    """The link sweep with a 15 cm transmitter waist."""

    scenario_id = "figS8_waist15cm"
    params = _link_params(extent=1.2, waist=0.15, pair_b=0.0015)


class PiStep(Scenario):
    """A phase step of π/2 per photon leaves coincidences unchanged and splits each heralded photon.

    singles is the far field of the signal photon heralded by an idler at the step line;
    marginal is the unconditioned singles pattern, which a thin mask leaves alone at high K.
    """

    scenario_id = "figS1_pi_step"
    params = (
        Param("n_points", int, 1024, at_least(64)),
        Param("extent_m", float, 2e-3, positive),
        Param("waist_fraction", float, 0.125, unit_interval, "pump waist over the grid extent"),
        Param("schmidt", float, 680.0, at_least(1)),
    )
    tables = (
        _table("correlations", ("quantity", TEXT), "corr"),
        _table(
            "patterns",
            ("q", FLOAT, "rad/m"),
            "pump_plain",
            "pump_step",
            "coinc_plain",
            "coinc_step",
            "singles_plain",
            "singles_step",
            "marginal_plain",
            "marginal_step",
            "beam_plain",
            "beam_step",
        ),
    )
    plots = (
        PlotSpec("patterns", "q", ("coinc_plain", "coinc_step"), title="coincidences"),
        PlotSpec("patterns", "q", ("singles_plain", "singles_step"), title="heralded photon"),
        PlotSpec("patterns", "q", ("beam_plain", "beam_step"), title="single-photon beam"),
    )

    def tasks(self):
        return [{}]

    def run_task(self, task, seed):
        p = self.p
        grid = Grid(p["n_points"], p["extent_m"])
        waist = p["waist_fraction"] * grid.extent
        mask = pi_step_mask(grid)
        pump = gaussian_pump(grid, waist)
        beam = ComplexField(grid, pump.values, DEFAULT_PHOTON_WAVELENGTH)
        psi = build_double_gaussian(DoubleGaussianParams.for_schmidt(p["schmidt"], 2 / waist), grid, domain=POSITION)
        stepped = apply_diffuser_joint(psi, transmission_at(mask, psi.photon_wavelength))

        pats = dict(
            pump_plain=intensity(far_field(pump)),
            pump_step=intensity(far_field(transmit(mask, pump))),
            coinc_plain=coincidence_slice(psi),
            coinc_step=coincidence_slice(stepped),
            singles_plain=intensity(far_field(heralded_photon(psi))),
            singles_step=intensity(far_field(heralded_photon(stepped))),
            marginal_plain=singles_pattern(psi),
            marginal_step=singles_pattern(stepped),
            beam_plain=intensity(far_field(beam)),
            beam_step=intensity(far_field(transmit(mask, beam))),
        )
        corrs = [
            dict(quantity=name, corr=pearson_correlation(pats[name + "_plain"].values, pats[name + "_step"].values))
            for name in ("pump", "coinc", "singles", "marginal", "beam")
        ]
        q = pats["pump_plain"].grid.coords()
        rows = [dict(q=qq, **{k: float(v.values[i]) for k, v in pats.items()}) for i, qq in enumerate(q)]
        return TaskResult({"correlations": corrs, "patterns": rows})


class RayleighCollapse(Scenario):
    """Coincidence β after pump-feedback optimization through a volume diffuser, against gap / z_rd."""

    scenario_id = "figS2_zrd_collapse"
    params = (
        Param("n_points", int, 1024, at_least(64)),
        Param("dx_m", float, 5e-6, positive),
        Param("d_values_m", [float], [40e-6, 80e-6, 160e-6], positive),
        Param("photon_phase_rms", float, 1.0, positive),
        Param("gap_ratios", [float], [0.1, 0.3, 1.0, 3.0, 10.0], positive),
        Param("aperture_fraction", float, 0.5, unit_interval),
        Param("pair_b_m", float, 7.5e-6, positive),
        Param("n_segments", int, 32, positive),
        Param("passes", int, 2, positive),
        Param("seeds", int, 3, positive),
    )
    tables = (_table("trials", ("d_m", FLOAT, "m"), "gap_over_zrd", ("seed", INT), "beta_opt"),)
    summary_tables = (_table("collapse", ("d_m", FLOAT, "m"), "gap_over_zrd", "beta_opt_mean", "beta_rel"),)
    plots = (PlotSpec("collapse", "gap_over_zrd", ("beta_rel",), group="d_m", logx=True, logy=True, title="z_rd collapse"),)

    def tasks(self):
        return [t for d in self.p["d_values_m"] for r in self.p["gap_ratios"] for t in self._seeded(d_m=d, gap_over_zrd=r)]

    def run_task(self, task, seed):
        p = self.p
        grid = Grid(p["n_points"], p["n_points"] * p["dx_m"])
        d = task["d_m"]
        gap = task["gap_over_zrd"] * rayleigh_range(d, DEFAULT_PUMP_WAVELENGTH)
        volume = _volume(grid, d, p["photon_phase_rms"], gap, seed)
        aperture = p["aperture_fraction"] * grid.extent
        fwd = JointStateForward(flat_top_pump(grid, aperture), p["pair_b_m"], volume)
        slm = SlmConfig(p["n_segments"], aperture=aperture)
        fb = FeedbackChannel(PUMP_INTENSITY, target_cell(grid), seed=seed)
        trace = stepwise_optimize(fwd, slm, fb, passes=p["passes"], track_coincidence=False)
        beta = beta_metric(fwd.coincidence(slm.expand(trace.final_mask, grid)), fb.target)
        row = dict(d_m=d, gap_over_zrd=task["gap_over_zrd"], seed=task["seed_index"], beta_opt=beta)
        return TaskResult({"trials": [row]}, {"volume": content_hash(volume)})

    def summarize(self, store):
        rows = store.select("trials")
        out = []
        for d in self.p["d_values_m"]:
            means = [
                float(np.mean([r["beta_opt"] for r in rows if r["d_m"] == d and r["gap_over_zrd"] == g]))
                for g in self.p["gap_ratios"]
            ]
            ref = means[int(np.argmin(self.p["gap_ratios"]))]
            for g, m in zip(self.p["gap_ratios"], means):
                out.append(dict(d_m=d, gap_over_zrd=g, beta_opt_mean=m, beta_rel=m / ref))
        return {"collapse": out}


class MemoryEffect(Scenario):
    """Speckle correlation against beam tilt for a thin and a volume diffuser."""

    scenario_id = "figS3_memory_effect"
    params = (
        Param("n_points", int, 4096, at_least(64)),
        Param("coherence_length_m", float, 100e-6, positive),
        Param("samples_per_cell", int, 16, at_least(5)),
        Param("wavelength_m", float, DEFAULT_PUMP_WAVELENGTH, positive),
        Param("phase_rms", float, 2 * np.pi, positive, "diffuser phase rms at the beam wavelength"),
        Param("gap_m", float, 3e-3, positive),
        Param("beam_waist_fraction", float, 0.125, unit_interval),
        Param("n_angles", int, 16, at_least(2)),
        Param("max_angle_factor", float, 3.0, positive, "largest tilt over the predicted half-width"),
        Param("seeds", int, 5, positive),
    )
    tables = (_table("curve", ("seed", INT), ("angle_rad", FLOAT, "rad"), "corr_volume", "corr_thin"),)
    summary_tables = (_table("half_width", ("measured_rad", FLOAT, "rad"), ("predicted_rad", FLOAT, "rad")),)
    plots = (PlotSpec("curve", "angle_rad", ("corr_volume", "corr_thin"), group="seed", title="memory effect"),)

    def _spec(self, seed=0) -> DiffuserSpec:
        p = self.p
        return DiffuserSpec(p["coherence_length_m"], p["phase_rms"] * p["wavelength_m"] / (2 * np.pi), seed=seed)

    def predicted_half_width(self) -> float:
        return field_coherence_length(self._spec(), self.p["wavelength_m"]) / self.p["gap_m"]

    def angles(self) -> np.ndarray:
        return np.linspace(0, self.p["max_angle_factor"] * self.predicted_half_width(), self.p["n_angles"])

    def tasks(self):
        return self._seeded()

    def run_task(self, task, seed):
        p = self.p
        grid = Grid(p["n_points"], p["n_points"] * p["coherence_length_m"] / p["samples_per_cell"])
        s1, s2 = np.random.SeedSequence(seed).generate_state(2)
        first = synth_diffuser(self._spec(int(s1)), grid)
        volume = VolumeDiffuser(first, synth_diffuser(self._spec(int(s2)), grid), p["gap_m"])
        beam = gaussian_pump(grid, p["beam_waist_fraction"] * grid.extent, p["wavelength_m"])
        angles = self.angles()
        vol = memory_effect_curve(volume, beam, angles)
        thin = memory_effect_curve(first, beam, angles)
        rows = [
            dict(seed=task["seed_index"], angle_rad=a, corr_volume=v, corr_thin=t) for a, v, t in zip(angles, vol, thin)
        ]
        return TaskResult({"curve": rows}, {"volume": content_hash(volume)})

    def summarize(self, store):
        rows = store.select("curve")
        angles = self.angles()
        mean = [np.mean([r["corr_volume"] for r in rows if r["angle_rad"] == a]) for a in angles]
        return {
            "half_width": [
                dict(measured_rad=memory_effect_half_width(angles, mean), predicted_rad=self.predicted_half_width())
            ]
        }


class LossyDiffuser(Scenario):
    """Phase-only shaping through a diffuser with random amplitude loss."""

    scenario_id = "figS5_lossy"
    params = _cell_params(n_points=2048, samples_per_cell=8) + (
        Param("aperture_fraction", float, 0.75, unit_interval),
        Param("loss_strengths", [float], [0.0, 0.5, 1.0], unit_interval),
        Param("n_segments", int, 32, positive),
        Param("passes", int, 2, positive),
        Param("seeds", int, 10, positive),
    )
    tables = (
        _table("runs", "loss_strength", ("seed", INT), "eta_pump", "eta_coinc", "eff_pump", "eff_coinc"),
    )
    summary_tables = (
        _table(
            "efficiency",
            "loss_strength",
            "eff_pump_mean",
            "eff_coinc_mean",
            "bound_pump",
            "bound_coinc",
            "eta_pump_mean",
            "eta_coinc_mean",
        ),
    )
    plots = (
        PlotSpec("efficiency", "loss_strength", ("eff_pump_mean", "eff_coinc_mean", "bound_pump", "bound_coinc"), title="efficiency"),
    )

    def tasks(self):
        return [t for s in self.p["loss_strengths"] for t in self._seeded(loss_strength=s)]

    def run_task(self, task, seed):
        p = self.p
        d = p["coherence_length_m"]
        grid = cell_grid(p)
        aperture = p["aperture_fraction"] * grid.extent
        diffuser = make_diffuser(grid, d, p["photon_phase_rms"], seed, task["loss_strength"])
        pump = flat_top_pump(grid, aperture)
        fwd = ThinCrystalForward(pump, diffuser)
        fb = FeedbackChannel(PUMP_INTENSITY, target_cell(grid), seed=seed)
        trace = stepwise_optimize(fwd, SlmConfig(p["n_segments"], aperture=aperture), fb, passes=p["passes"])
        lit = np.abs(pump.values) > 0
        t = diffuser.amplitude[lit]
        row = dict(
            loss_strength=task["loss_strength"],
            seed=task["seed_index"],
            eta_pump=trace.eta_pump,
            eta_coinc=trace.eta_coinc,
            eff_pump=segment_efficiency(t),
            eff_coinc=segment_efficiency(t**2),
        )
        return TaskResult({"runs": [row]}, {"diffuser": content_hash(diffuser)})

    def summarize(self, store):
        rows = store.select("runs")
        out = []
        for s in self.p["loss_strengths"]:
            mine = [r for r in rows if r["loss_strength"] == s]
            row = dict(loss_strength=s)
            for k in ("eff_pump", "eff_coinc", "eta_pump", "eta_coinc"):
                row[k + "_mean"] = float(np.mean([r[k] for r in mine]))
            row["bound_pump"] = phase_only_efficiency_bound(*transmission_moments(s, 1))
            row["bound_coinc"] = phase_only_efficiency_bound(*transmission_moments(s, 2))
            out.append(row)
        return {"efficiency": out}


class CoherenceRadiusCollapse(Scenario):
    """Optimized β against z / z_ra for links of fixed Fried parameter."""

    scenario_id = "figS4_zra_collapse"
    params = _link_params(seeds=5)[:4] + (
        Param("r0_values_m", [float], [0.1, 0.2, 0.4], positive),
        Param("zra_ratios", [float], [0.1, 0.3, 1.0, 3.0, 10.0], positive),
        Param("n_screens", int, 2, positive),
        Param("n_segments", int, 64, positive),
        Param("passes", int, 1, positive),
        Param("n_subharmonics", int, 10, nonnegative),
        Param("seeds", int, 5, positive),
    )
    tables = (
        _table(
            "trials",
            ("r0_target_m", FLOAT, "m"),
            "z_over_zra",
            ("seed", INT),
            ("cn2", FLOAT, "m^-2/3"),
            ("length_m", FLOAT, "m"),
            *_TRIAL_COLUMNS,
        ),
    )
    summary_tables = (
        _table("collapse", ("r0_target_m", FLOAT, "m"), "z_over_zra", "beta_opt_mean", "beta_unopt_mean", "beta_rel"),
    )
    plots = (PlotSpec("collapse", "z_over_zra", ("beta_rel",), group="r0_target_m", logx=True, title="z_ra collapse"),)

    def tasks(self):
        return [t for r0 in self.p["r0_values_m"] for g in self.p["zra_ratios"] for t in self._seeded(r0=r0, ratio=g)]

    def run_task(self, task, seed):
        wavelength = DEFAULT_PUMP_WAVELENGTH
        _, z_ra = coherence_radius(task["r0"], wavelength)
        length = task["ratio"] * z_ra
        atm = AtmosphereParams(cn2_for_r0(task["r0"], length, wavelength))
        try:
            row = link_trial(link_setup(self.p), atm, length, seed)
        except GridError as e:
            log.warning("skipping r0=%g m at %g z_ra: %s", task["r0"], task["ratio"], e)
            return TaskResult()
        row.update(r0_target_m=task["r0"], z_over_zra=task["ratio"], seed=task["seed_index"])
        return TaskResult({"trials": [row]})

    def summarize(self, store):
        rows = store.select("trials")
        out = []
        for r0 in self.p["r0_values_m"]:
            mine = {}
            for g in sorted(self.p["zra_ratios"]):
                sel = [r for r in rows if r["r0_target_m"] == r0 and r["z_over_zra"] == g]
                if sel:
                    mine[g] = sel
            if not mine:
                continue
            ref = float(np.mean([r["beta_opt"] for r in mine[min(mine)]]))
            for g, sel in mine.items():
                m = float(np.mean([r["beta_opt"] for r in sel]))
                out.append(
                    dict(
                        r0_target_m=r0,
                        z_over_zra=g,
                        beta_opt_mean=m,
                        beta_unopt_mean=float(np.mean([r["beta_unopt"] for r in sel])),
                        beta_rel=m / ref if ref > 0 else float("nan"),
                    )
                )
        return {"collapse": out}


class SchmidtEstimation(Scenario):
    """Width-based Schmidt estimate against the SVD value on synthetic double-Gaussian states."""

    scenario_id = "schmidt_estimate"
    params = (
        Param("schmidt_values", [float], [680.0], at_least(1)),
        Param("n_points", int, 1024, at_least(64)),
        Param("extent", float, 256.0, positive, "angular grid extent"),
        Param("sigma", float, 2.0, positive),
    )
    tables = (
        _table("estimate", "schmidt_true", "schmidt_est", "uncertainty", "sigma_fit", "b_fit", "schmidt_svd", "rel_error"),
    )
    plots = (PlotSpec("estimate", "schmidt_true", ("schmidt_est", "schmidt_svd"), logx=True, logy=True, title="Schmidt number"),)

    def tasks(self):
        return [dict(schmidt=k) for k in self.p["schmidt_values"]]

    def run_task(self, task, seed):
        p = self.p
        grid = Grid(p["n_points"], p["extent"])
        psi = build_double_gaussian(DoubleGaussianParams.for_schmidt(task["schmidt"], p["sigma"]), grid)
        est = estimate_schmidt(psi)
        row = dict(
            schmidt_true=task["schmidt"],
            schmidt_est=est.schmidt,
            uncertainty=est.uncertainty,
            sigma_fit=est.sigma,
            b_fit=est.b,
            schmidt_svd=schmidt_number_numeric(psi),
            rel_error=abs(est.schmidt - task["schmidt"]) / task["schmidt"],
        )
        return TaskResult({"estimate": [row]})
