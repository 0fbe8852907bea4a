# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: Public error classes"""


class PumpshapeError(RuntimeError):
    """Pumpshape base error class."""


class GridError(PumpshapeError, ValueError):
    """Grids don't match, are too small, or don't resolve the structure they carry."""


class FieldError(PumpshapeError, ValueError):
    """Field values are non-finite, negative where intensities are expected, or in the wrong domain."""


class StatisticsError(PumpshapeError, ValueError):
    """Statistic is undefined for the given data (zero variance, zero mean, zero baseline)."""


class NormalizationError(PumpshapeError, ValueError):
    """Joint amplitude is expected to be normalized, but isn't."""


class RegimeError(PumpshapeError, ValueError):
    """Estimator applied outside the regime where its approximation holds."""


class FitError(PumpshapeError):
    """Least-squares fit did not converge."""


class AliasingError(PumpshapeError):
    """Energy reached the grid guard band during propagation."""

    def __init__(self, msg, edge_fraction=None, step=None):
        super().__init__(msg)
        self.edge_fraction = edge_fraction
        self.step = step


class ConfigError(PumpshapeError, KeyError):
    """Scenario config is invalid.  The offending key is in .key"""

    def __init__(self, msg, key=None):
        super().__init__(msg)
        self.key = key

    def __str__(self):
        # KeyError quotes its argument, we want the message as-is
        return str(self.args[0])


class ScenarioError(PumpshapeError):
    """Error raised while running a scenario, with scenario context attached."""

    def __init__(self, msg, scenario_id=None, task=None):
        super().__init__(msg)
        self.scenario_id = scenario_id
        self.task = task


class ContainerError(PumpshapeError, ValueError):
    """Binary container is malformed or of the wrong kind."""


class PlotScriptError(PumpshapeError):
    """Plot script can't be generated from the manifest."""
