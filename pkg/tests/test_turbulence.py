# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

from dataclasses import replace

import numpy as np
import pytest

from pumpshape.errors import GridError, StatisticsError
from pumpshape.field import Grid, propagate_angular_spectrum
from pumpshape.shaping import PUMP_INTENSITY, FeedbackChannel, SlmConfig, beta_metric, stepwise_optimize, target_cell
from pumpshape.spdc import apply_diffuser_joint, build_state_from_pump, coincidence_slice, propagate_joint
from pumpshape.turbulence import (
    AtmosphereParams,
    LinkForward,
    LinkSetup,
    LinkSweepResult,
    PhaseScreen,
    PhaseScreenStack,
    cn2_for_r0,
    coherence_radius,
    crossing_lengths,
    dispersion_ratio,
    fried_parameter,
    half_crossing,
    link_length_for_r0,
    link_length_sweep,
    link_trial,
    measure_structure_function,
    phase_structure_function,
    propagate_joint_link,
    propagate_pump_link,
    refractive_index,
    rytov_applicable,
    rytov_variance,
    scaling_fit,
    screen_positions,
    split_link,
    summarize_sweep,
    synth_phase_screen,
    synth_screen_stack,
    von_karman_index_psd,
    von_karman_phase_psd,
    z_ra_crossing_length,
)

from tests.helpers import PUMP, gaussian


def test_atmosphere_validation():
    with pytest.raises(ValueError):
        AtmosphereParams(-1e-16)
    with pytest.raises(ValueError):
        AtmosphereParams(1e-16, outer_scale=1e-3, inner_scale=1e-2)


def test_fried_parameter_round_trip():
    r0 = fried_parameter(1e-16, 1e4, PUMP)
    k = 2 * np.pi / PUMP
    assert r0 == pytest.approx((0.4229 * k * k * 1e4 * 1e-16) ** (-3 / 5))
    assert cn2_for_r0(r0, 1e4, PUMP) == pytest.approx(1e-16)


def test_rytov():
    k = 2 * np.pi / 808e-9
    assert rytov_variance(1e-16, 1e3, 808e-9) == pytest.approx(1.23 * k ** (7 / 6) * 1e-16 * 1e3 ** (11 / 6))
    assert rytov_applicable(1.0)
    assert not rytov_applicable(3.0)


def test_coherence_radius():
    rho0, z_ra = coherence_radius(0.21, PUMP)
    assert rho0 == pytest.approx(0.1)
    assert z_ra == pytest.approx(np.pi * 0.01 / PUMP)
    assert coherence_radius(0.21)[1] is None


def test_dispersion():
    n = refractive_index(1013.0, 288.0, 0.808)
    assert 1.0002 < n < 1.0004
    atm = AtmosphereParams(1e-16)
    assert dispersion_ratio(atm, PUMP, PUMP) == pytest.approx(1.0)
    # air disperses more at shorter wavelengths
    assert dispersion_ratio(atm, PUMP, 808e-9) > 1


def test_split_link():
    parts = split_link(0.1, 4)
    assert len(parts) == 4
    # the screens add back up to the whole-link r0
    assert sum(r ** (-5 / 3) for r in parts) ** (-3 / 5) == pytest.approx(0.1)
    assert screen_positions(100.0, 2) == [25.0, 75.0]
    with pytest.raises(ValueError):
        split_link(0.1, 0)


def test_structure_function_oracle_is_kolmogorov():
    r0 = 0.1
    for r in (0.02, 0.05):
        kolmogorov = 6.88 * (r / r0) ** (5 / 3)
        assert phase_structure_function(r, r0, 1e5, 1e-5) == pytest.approx(kolmogorov, rel=0.03)


def _screen_ratio(n_subharmonics, lags, seeds=50):
    grid = Grid(256, 2.56, ndim=2)
    r0 = 0.1
    screens = [synth_phase_screen(grid, r0, 1e5, 1e-4, seed, n_subharmonics) for seed in range(seeds)]
    measured = measure_structure_function(screens, lags)
    r = np.asarray(lags) * grid.dx
    return measured / (6.88 * (r / r0) ** (5 / 3))


def test_screen_structure_function():
    ratio = _screen_ratio(10, [4, 8, 16])
    assert np.all(np.abs(ratio - 1) < 0.1)


def test_screen_without_subharmonics_underestimates():
    ratio = _screen_ratio(0, [64], seeds=20)
    assert ratio[0] < 0.9


def test_screen_checks(caplog):
    with pytest.raises(GridError):
        synth_phase_screen(Grid(64, 6.4), 0.1, 10.0, 1e-3, 0)
    caplog.set_level("WARNING")
    s = synth_phase_screen(Grid(64, 32.0), 1.0, 10.0, 1e-3, 0)
    assert "outer scale" in caplog.text
    assert s.phase.shape == (64,)
    with pytest.raises(GridError):
        PhaseScreen(Grid(8, 1.0), np.zeros(7), 0.1)


def test_screen_is_seed_deterministic():
    grid = Grid(64, 1.0)
    a = synth_phase_screen(grid, 0.1, 10.0, 1e-3, 3)
    b = synth_phase_screen(grid, 0.1, 10.0, 1e-3, 3)
    assert np.array_equal(a.phase, b.phase)


def test_stack():
    grid = Grid(64, 1.0)
    atm = AtmosphereParams(1e-15)
    stack = synth_screen_stack(grid, atm, 1e3, PUMP, n_screens=3, seed=1)
    assert [s.position for s in stack.screens] == pytest.approx(screen_positions(1e3, 3))
    assert stack.screens[0].r0 == pytest.approx(fried_parameter(1e-15, 1e3, PUMP) * 3 ** (3 / 5))
    assert stack.phase_scale(PUMP) == pytest.approx(1.0)
    assert stack.phase_scale(808e-9, dispersion=False) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        PhaseScreenStack(tuple(reversed(stack.screens)), PUMP)


def test_measure_structure_function_of_flat_screen():
    s = PhaseScreen(Grid(16, 1.0, 2), np.ones((16, 16)), 0.1)
    assert np.all(measure_structure_function([s], [1, 2]) == 0)


def test_empty_link_is_free_space():
    grid = Grid(128, 1.0)
    pump = gaussian(grid, 0.1)
    out = propagate_pump_link(pump, PhaseScreenStack((), PUMP), 500.0)
    assert np.allclose(out.values, propagate_angular_spectrum(pump, 500.0).values)
    with pytest.raises(ValueError):
        screens = (PhaseScreen(grid, np.zeros(128), 0.1, 600.0),)
        propagate_pump_link(pump, PhaseScreenStack(screens, PUMP), 500.0)


def test_half_crossing():
    lengths = [1.0, 10.0, 100.0]
    assert half_crossing(lengths, [1.0, 0.75, 0.25]) == pytest.approx(np.sqrt(10.0) * 10.0)
    assert np.isnan(half_crossing(lengths, [1.0, 0.9, 0.8]))
    assert np.isnan(half_crossing(lengths, [0.4, 0.3, 0.2]))


def test_scaling_fit():
    results = []
    for cn2 in (1e-18, 1e-17, 1e-16, 1e-15):
        ratio = 3 + 2e7 * cn2 ** (5 / 11)
        results.append(LinkSweepResult(AtmosphereParams(cn2), np.ones(1), np.ones(1), np.ones(1), ratio, 1.0))
    fit = scaling_fit(results)
    assert fit.slope == pytest.approx(2e7)
    assert fit.intercept == pytest.approx(3)
    assert fit.r_squared == pytest.approx(1.0)
    with pytest.raises(StatisticsError):
        scaling_fit(results[:3])
    nan = replace(results[0], z_o=float("nan"))
    with pytest.raises(StatisticsError):
        scaling_fit([nan] + results[1:])
    assert scaling_fit(results[:3], min_points=3).r_squared == pytest.approx(1.0)


def _setup():
    grid = Grid(64, 8.0)
    return LinkSetup(gaussian(grid, 1.0), 0.03, SlmConfig(8, aperture=2.0), n_screens=2, n_seeds=2, passes=1)


def test_link_trial():
    # per-screen r0 at 1e3 m is 0.37 m, three grid samples
    row = link_trial(_setup(), AtmosphereParams(1e-16), 1e3, seed=3)
    assert set(row) == {"cn2", "length_m", "seed", "beta_opt", "beta_unopt", "sigma_R2", "r0_m"}
    assert row["beta_unopt"] > 0
    assert np.isfinite(row["beta_opt"])
    assert row["r0_m"] == pytest.approx(fried_parameter(1e-16, 1e3, PUMP))
    assert link_trial(_setup(), AtmosphereParams(1e-16), 1e3, seed=3) == row


def test_summarize_sweep():
    atm = AtmosphereParams(1e-16)
    rows = [
        dict(cn2=1e-16, length_m=z, seed=s, beta_opt=b, beta_unopt=b / 2)
        for z, b in ((1.0, 1.0), (10.0, 0.75), (100.0, 0.25))
        for s in (0, 1)
    ]
    (res,) = summarize_sweep([atm], [1.0, 10.0, 100.0], rows)
    assert list(res.beta_optimized) == [1.0, 0.75, 0.25]
    assert res.z_o == pytest.approx(np.sqrt(10.0) * 10.0)
    assert res.z_no == pytest.approx(1.0)
    assert len(res.rows) == 6


def test_link_length_sweep_skips_unresolved(caplog):
    caplog.set_level("WARNING")
    atm = AtmosphereParams(1e-16)
    # at 1e4 m each screen's r0 (0.094 m) is below two grid samples
    (res,) = link_length_sweep([atm], [1e3, 1e4], _setup(), seeds=[0])
    assert np.isfinite(res.beta_optimized[0])
    assert np.isnan(res.beta_optimized[1])
    assert len(res.rows) == 1
    assert "skipping" in caplog.text


def test_crossing_lengths():
    z = z_ra_crossing_length(1e-16, PUMP)
    _, z_ra = coherence_radius(fried_parameter(1e-16, z, PUMP), PUMP)
    assert z_ra == pytest.approx(z)
    assert z_ra_crossing_length(1e-18, PUMP) / z == pytest.approx(100 ** (6 / 11))
    assert fried_parameter(1e-16, link_length_for_r0(0.5, 1e-16, PUMP), PUMP) == pytest.approx(0.5)

    zs = crossing_lengths(1e-16, PUMP, 1.0, 8)
    assert len(zs) == 8
    assert np.all(np.diff(zs) > 0)
    assert zs[0] == pytest.approx(link_length_for_r0(4.0, 1e-16, PUMP))
    assert zs[-1] == pytest.approx(4 * z)
    with pytest.raises(ValueError):
        crossing_lengths(1e-16, PUMP, 1.0, 8, start_r0_waists=1e-3)


def test_summarize_sweep_lengths_per_cn2():
    weak, strong = AtmosphereParams(1e-18), AtmosphereParams(1e-16)
    lengths = {1e-18: [100.0, 1000.0], 1e-16: [1.0, 10.0]}
    rows = [
        dict(cn2=c, length_m=z, seed=0, beta_opt=b, beta_unopt=b)
        for c, zs in lengths.items()
        for z, b in zip(zs, (1.0, 0.0))
    ]
    res = summarize_sweep([weak, strong], lengths, rows)
    assert list(res[0].lengths) == [100.0, 1000.0]
    assert list(res[1].lengths) == [1.0, 10.0]
    assert res[0].z_o == pytest.approx(np.sqrt(1e5))
    assert res[1].z_no == pytest.approx(np.sqrt(10.0))


def test_index_spectrum():
    k = np.array([10.0, 20.0])
    psd = von_karman_index_psd(k, 0.0, 0.0, 1e-16, 1e4)
    assert psd[0] == pytest.approx(0.033e-16 * 10 ** (-11 / 3), rel=1e-6)
    assert np.log(psd[1] / psd[0]) / np.log(2) == pytest.approx(-11 / 3, rel=1e-6)
    km = 5.92 / 5e-3
    damped = von_karman_index_psd(km, 0.0, 0.0, 1e-16, 1e4, inner_scale=5e-3)
    assert damped == pytest.approx(von_karman_index_psd(km, 0.0, 0.0, 1e-16, 1e4) / np.e)


def test_phase_spectrum_integrates_index_spectrum():
    # a layer of thickness z turns the index spectrum into the phase spectrum of its r0
    z, kappa = 1e3, np.array([1.0, 10.0, 100.0])
    k = 2 * np.pi / PUMP
    r0 = fried_parameter(1e-16, z, PUMP)
    phase = von_karman_phase_psd(kappa, 0.0, r0, 10.0, 1e-9)
    index = von_karman_index_psd(kappa, 0.0, 0.0, 1e-16, 10.0)
    assert np.allclose(phase, 2 * np.pi * k * k * z * index, rtol=1e-3)


def test_screen_count_keeps_link_statistics():
    grid = Grid(128, 1.28, ndim=2)
    atm = AtmosphereParams(cn2_for_r0(0.1, 1e3, PUMP))
    lags = [4, 8]
    measured = {}
    for m in (2, 4):
        totals = []
        for seed in range(30):
            stack = synth_screen_stack(grid, atm, 1e3, PUMP, n_screens=m, seed=seed)
            totals.append(PhaseScreen(grid, sum(s.phase for s in stack.screens), 0.1))
        measured[m] = measure_structure_function(totals, lags)
    assert np.allclose(measured[2], measured[4], rtol=0.15)


def test_joint_link_without_screens_is_free_space():
    grid = Grid(64, 8.0)
    psi = build_state_from_pump(gaussian(grid, 1.0), 0.03)
    out = propagate_joint_link(psi, PhaseScreenStack((), PUMP), 1e3)
    assert np.allclose(out.values, propagate_joint(psi, 1e3).values)


def test_joint_link_screen_at_transmitter():
    grid = Grid(64, 8.0)
    psi = build_state_from_pump(gaussian(grid, 1.0), 0.03)
    screen = synth_phase_screen(grid, 0.5, 10.0, 5e-3, seed=2)
    stack = PhaseScreenStack((screen,), PUMP, AtmosphereParams(1e-16))
    out = propagate_joint_link(psi, stack, 1e3)
    # free space after the screen only adds phase to the far field
    scale = stack.phase_scale(psi.photon_wavelength)
    near = apply_diffuser_joint(psi, np.exp(1j * scale * screen.phase))
    assert np.allclose(coincidence_slice(out).values, coincidence_slice(near).values, atol=1e-10)
    with pytest.raises(ValueError):
        propagate_joint_link(psi, stack, 0.0)


def test_dispersion_is_negligible_after_pump_shaping():
    grid = Grid(64, 8.0)
    pump = gaussian(grid, 1.0)
    slm = SlmConfig(8, aperture=2.0)
    target = target_cell(grid)
    on, off = [], []
    for seed in range(3):
        stack = synth_screen_stack(grid, AtmosphereParams(3e-18), 1e3, PUMP, n_screens=2, seed=seed)
        with_disp = LinkForward(pump, 0.03, stack, 1e3)
        without = LinkForward(pump, 0.03, stack, 1e3, dispersion=False)
        fb = FeedbackChannel(PUMP_INTENSITY, target, seed=seed)
        trace = stepwise_optimize(with_disp, slm, fb, passes=1, track_coincidence=False)
        phase = slm.expand(trace.final_mask, grid)
        # the pump is the reference wavelength, so only the pair sees dispersion
        assert np.array_equal(with_disp.pump(phase).values, without.pump(phase).values)
        on.append(beta_metric(with_disp.coincidence(phase), target))
        off.append(beta_metric(without.coincidence(phase), target))
    assert np.mean(on) == pytest.approx(np.mean(off), rel=0.01)
