# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

import numpy as np
import pytest

from pumpshape.errors import FieldError, GridError, NormalizationError, RegimeError
from pumpshape.field import ANGULAR, POSITION, ComplexField, Grid, RealField, far_field, intensity
from pumpshape.media import pi_step_mask, transmission_at
from pumpshape.spdc import (
    CrystalSpec,
    DoubleGaussianParams,
    JointAmplitude,
    apply_diffuser_joint,
    build_double_gaussian,
    build_state_eq1,
    build_state_from_pump,
    build_thin_crystal_state,
    coincidence_pattern,
    coincidence_slice,
    estimate_schmidt,
    estimate_schmidt_from_widths,
    heralded_photon,
    propagate_joint,
    resample_sum_coordinate,
    schmidt_coefficients,
    schmidt_number_analytic,
    schmidt_number_numeric,
    schmidt_number_per_axis,
    singles_pattern,
    sum_coordinate_marginal,
    thin_crystal_coincidence,
    to_angular,
    to_position,
)

from tests.helpers import PHOTON, PUMP, cell_grid, diffuser, gaussian


def test_crystal_scales():
    c = CrystalSpec(2e-3, PUMP)
    assert c.photon_wavelength == PHOTON
    assert c.b == pytest.approx(np.sqrt(2e-3 / (4 * 2 * np.pi / PUMP)))
    assert c.coherence_width() == pytest.approx(np.sqrt(PUMP * 2e-3))
    assert c.spdc_angle() == pytest.approx(np.sqrt(PUMP / 2e-3))
    assert c.phase_matching(np.zeros(3)) == pytest.approx(np.ones(3))
    with pytest.raises(ValueError):
        CrystalSpec(0, PUMP)


@pytest.mark.parametrize("schmidt", [1, 10, 680])
def test_for_schmidt(schmidt):
    p = DoubleGaussianParams.for_schmidt(schmidt, 2.0)
    assert p.b * p.sigma <= 1
    assert schmidt_number_analytic(p) == pytest.approx(schmidt)


def test_for_schmidt_below_one():
    with pytest.raises(RegimeError):
        DoubleGaussianParams.for_schmidt(0.5, 1.0)


@pytest.mark.parametrize("schmidt", [1, 10, 100])
def test_svd_matches_analytic(schmidt):
    p = DoubleGaussianParams.for_schmidt(schmidt, 1.0)
    psi = build_double_gaussian(p, Grid(1000, 100.0))
    assert psi.is_normalized()
    assert schmidt_number_numeric(psi) == pytest.approx(schmidt, rel=0.01)
    assert schmidt_number_per_axis(psi) == pytest.approx(np.sqrt(schmidt), rel=0.01)
    weights = schmidt_coefficients(psi)
    assert weights.sum() == pytest.approx(1.0)
    assert np.all(np.diff(weights) <= 1e-15)


def test_double_gaussian_symmetric():
    psi = build_double_gaussian(DoubleGaussianParams.for_schmidt(10, 1.0), Grid(512, 64.0))
    assert psi.exchange_residual() < 1e-12
    assert psi.domain == ANGULAR


def test_double_gaussian_grid_checks():
    p = DoubleGaussianParams.for_schmidt(100, 1.0)
    # too narrow for 1/b = 20
    with pytest.raises(GridError):
        build_double_gaussian(p, Grid(256, 20.0))
    # too coarse for sigma
    with pytest.raises(GridError):
        build_double_gaussian(p, Grid(64, 100.0))


def test_position_and_angular_forms_agree():
    p = DoubleGaussianParams.for_schmidt(10, 1.0)
    grid = Grid(512, 40.0)
    pos = build_double_gaussian(p, grid, domain=POSITION)
    ang = to_angular(pos)
    direct = build_double_gaussian(p, ang.grid_s)
    assert np.allclose(np.abs(ang.values), np.abs(direct.values), atol=1e-6 * np.abs(direct.values).max())
    assert schmidt_number_numeric(pos) == pytest.approx(10, rel=0.01)


def test_local_unitaries_keep_schmidt_number():
    p = DoubleGaussianParams.for_schmidt(10, 1.0)
    psi = build_double_gaussian(p, Grid(512, 40.0), domain=POSITION)
    before = schmidt_number_numeric(psi)
    phase = np.exp(1j * np.random.default_rng(4).uniform(0, 2 * np.pi, 512))
    assert schmidt_number_numeric(apply_diffuser_joint(psi, phase)) == pytest.approx(before, rel=1e-6)
    assert schmidt_number_numeric(propagate_joint(psi, 50.0)) == pytest.approx(before, rel=1e-6)
    assert schmidt_number_numeric(to_angular(psi)) == pytest.approx(before, rel=1e-6)


def test_pi_step_splits_heralded_photon():
    grid = Grid(1024, 2e-3)
    psi = build_double_gaussian(DoubleGaussianParams.for_schmidt(200, 2 / 2.5e-4), grid, domain=POSITION)
    stepped = apply_diffuser_joint(psi, transmission_at(pi_step_mask(grid), PHOTON))
    plain, step = heralded_photon(psi), heralded_photon(stepped)
    assert plain.domain == POSITION
    assert plain.wavelength == PHOTON
    assert np.allclose(np.abs(step.values), np.abs(plain.values))
    assert np.allclose(heralded_photon(to_angular(psi)).values, plain.values)
    center = grid.n_points // 2
    # the step puts a null where the unstepped photon peaks
    far_plain, far_step = intensity(far_field(plain)), intensity(far_field(step))
    assert far_step.values[center] < 0.1 * far_plain.values[center]


def test_to_position_round_trip():
    psi = build_double_gaussian(DoubleGaussianParams.for_schmidt(5, 1.0), Grid(256, 40.0))
    back = to_angular(to_position(psi))
    assert back.grid_s == psi.grid_s
    assert np.allclose(back.values, psi.values)
    assert to_angular(psi) is psi


def test_normalization_required():
    g = Grid(16, 1.0)
    psi = JointAmplitude(g, g, 2 * np.ones((16, 16)), PHOTON)
    assert not psi.is_normalized()
    with pytest.raises(NormalizationError):
        schmidt_coefficients(psi)
    assert psi.normalized().is_normalized()
    with pytest.raises(FieldError):
        JointAmplitude(g, g, np.zeros((16, 16)), PHOTON).normalized()
    with pytest.raises(GridError):
        JointAmplitude(g, g, np.ones((16, 8)), PHOTON)


def test_build_state_eq1():
    crystal = CrystalSpec(2e-3, PUMP)
    photon = Grid(128, 2e5)
    pump_grid = Grid(128, 4e5)
    q = pump_grid.coords()
    pump = ComplexField(pump_grid, np.exp(-(q**2) / 2e4**2), PUMP, ANGULAR)
    psi = build_state_eq1(pump, crystal, photon)
    assert psi.is_normalized()
    assert psi.exchange_residual() < 1e-9
    assert schmidt_number_numeric(psi) > 1

    flat = ComplexField(Grid(128, 4e6), np.ones(128), PUMP, ANGULAR)
    with pytest.raises(GridError):
        build_state_eq1(flat, crystal, photon)
    with pytest.raises(FieldError):
        build_state_eq1(gaussian(photon, 1e4), crystal, photon)


def test_thin_crystal_oracle_equivalence():
    grid = cell_grid(256, 8)
    pump = gaussian(grid, 5 * 50e-6)
    for seed in range(10):
        a = transmission_at(diffuser(grid, seed), PHOTON)
        fast = thin_crystal_coincidence(pump, a)
        psi = apply_diffuser_joint(build_thin_crystal_state(pump), a)
        full = sum_coordinate_marginal(coincidence_pattern(psi))
        assert fast.grid == full.grid
        assert np.allclose(full.values, fast.values, rtol=1e-6, atol=1e-9 * fast.values.max())


def test_thin_crystal_without_medium_matches_pump():
    grid = cell_grid(128, 8)
    pump = gaussian(grid, 3 * 50e-6)
    coinc = thin_crystal_coincidence(pump, np.ones(128))
    pump_ff = far_field(pump)
    assert coinc.wavelength == PUMP
    assert np.allclose(coinc.values, (np.abs(pump_ff.values) ** 2 / pump_ff.power))


def test_finite_state_from_pump():
    grid = Grid(128, 2e-3)
    pump = gaussian(grid, 2.5e-4)
    psi = build_state_from_pump(pump, 5e-6)
    assert psi.domain == POSITION
    assert psi.photon_wavelength == PHOTON
    assert psi.is_normalized()
    assert psi.exchange_residual() < 1e-12
    with pytest.raises(FieldError):
        build_state_from_pump(far_field(pump), 5e-6)


def test_diffuser_loss_tracks_transmittance():
    grid = cell_grid(128, 8)
    psi = build_state_from_pump(gaussian(grid, 20 * 50e-6), 1e-6)
    lossy = diffuser(grid, 1, loss_strength=0.5)
    out = apply_diffuser_joint(psi, transmission_at(lossy, PHOTON))
    assert out.is_normalized()
    assert 0.5**4 <= out.transmittance < 1
    lossless = apply_diffuser_joint(psi, transmission_at(diffuser(grid, 1), PHOTON))
    assert lossless.transmittance == pytest.approx(1.0)
    with pytest.raises(FieldError):
        apply_diffuser_joint(to_angular(psi), np.ones(128))
    with pytest.raises(GridError):
        apply_diffuser_joint(psi, np.ones(64))


def test_propagate_joint_is_unitary():
    grid = Grid(128, 2e-3)
    psi = build_state_from_pump(gaussian(grid, 2e-4), 5e-6)
    out = propagate_joint(psi, 0.01)
    assert out.is_normalized()
    assert out.transmittance == pytest.approx(1.0)
    assert np.allclose(propagate_joint(out, -0.01).values, psi.values)
    assert propagate_joint(psi, 0) is psi


def test_patterns_are_normalized():
    psi = build_double_gaussian(DoubleGaussianParams.for_schmidt(10, 1.0), Grid(256, 32.0))
    for pattern in (coincidence_pattern(psi), coincidence_slice(psi), singles_pattern(psi), singles_pattern(psi, "idler")):
        assert pattern.total == pytest.approx(1.0)
    assert coincidence_pattern(psi).grid.ndim == 2
    with pytest.raises(ValueError):
        singles_pattern(psi, "pump")


def test_estimate_schmidt_680():
    p = DoubleGaussianParams.for_schmidt(680, 2.0)
    psi = build_double_gaussian(p, Grid(1024, 256.0))
    est = estimate_schmidt(psi)
    assert est.schmidt == pytest.approx(680, rel=0.1)
    assert est.sigma == pytest.approx(2.0, rel=0.05)
    assert est.uncertainty >= 0


def test_estimator_regime():
    with pytest.raises(RegimeError):
        estimate_schmidt_from_widths(1.0, 1.0)
    with pytest.raises(ValueError):
        estimate_schmidt_from_widths(0.0, 1.0)
    est = estimate_schmidt_from_widths(1.0, 10.0)
    assert est.schmidt == pytest.approx(100)
    assert est.b == pytest.approx(0.05)


def test_resample_sum_coordinate():
    grid = Grid(64, 10.0)
    rng = np.random.default_rng(0)
    pump_ff = RealField(grid, rng.random(64), PUMP)
    same, _ = resample_sum_coordinate(RealField(grid, pump_ff.values, PHOTON), pump_ff)
    assert np.allclose(same.values, pump_ff.normalized().values)
    # photon-wavelength pattern on a grid twice as wide maps back onto the pump grid
    wide = Grid(64, 20.0)
    q = wide.coords()
    coinc = RealField(wide, np.exp(-(q**2) / 4), PHOTON)
    out, _ = resample_sum_coordinate(coinc, pump_ff)
    assert out.grid == grid
    assert out.total == pytest.approx(1.0)
    with pytest.raises(GridError):
        resample_sum_coordinate(RealField(Grid(64, 2.0), np.ones(64), PHOTON), pump_ff)
    with pytest.raises(FieldError):
        resample_sum_coordinate(coinc, RealField(grid, np.ones(64)))
