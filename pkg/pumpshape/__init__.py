# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: wavefront shaping of entangled photon pairs through the classical pump"""
__version__ = "1.0.0"

from .errors import *
from .field import Grid, ComplexField, RealField, far_field, propagate_angular_spectrum, pearson_correlation
from .spdc import CrystalSpec, DoubleGaussianParams, JointAmplitude
from .media import DiffuserSpec, DiffuserRealization, VolumeDiffuser, synth_diffuser
from .turbulence import AtmosphereParams, PhaseScreen, PhaseScreenStack, synth_phase_screen
from .shaping import (
    SlmConfig,
    FeedbackChannel,
    OptimizationTrace,
    ThinCrystalForward,
    JointStateForward,
    target_cell,
    stepwise_optimize,
    partition_optimize,
)
from .config import ScenarioConfig, validate_config, list_scenarios
from .scenarios import Scenario
from .runner import RunManifest, run_scenario
from .plotgen import emit_plot_script
