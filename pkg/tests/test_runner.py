# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

import json
import os
from unittest.mock import patch

import pytest

from pumpshape import __version__
from pumpshape.config import derive_seed, validate_config
from pumpshape.errors import ScenarioError
from pumpshape.runner import MANIFEST_NAME, RunManifest, run_scenario, with_seed
from pumpshape.scenarios import CorrelationVsSchmidt

from tests.helpers import small_fig4c


def _read(path):
    with open(path, "rb") as f:
        return f.read()


def test_run_writes_tables_and_manifest(tmp_path):
    cfg = validate_config(small_fig4c())
    manifest = run_scenario(cfg, str(tmp_path))
    assert [f.name for f in manifest.csv_files()] == ["correlation.csv", "corr_vs_K.csv"]
    assert manifest.files[-1].kind == "plot_script"
    assert manifest.seeds == [derive_seed(1, "fig4c_corr_vs_K", i) for i in range(4)]
    assert len(manifest.media) == 4

    with open(tmp_path / MANIFEST_NAME) as f:
        data = json.load(f)
    assert data["library_version"] == __version__
    assert data["config"] == small_fig4c()
    assert data["parameters"]["K_values"] == [1.0, 200.0]
    assert "out_dir" not in data

    lines = (tmp_path / "correlation.csv").read_text().splitlines()
    assert lines[0] == "# pumpshape schema_version: 1"
    assert lines[1] == "# scenario: fig4c_corr_vs_K"
    header = [line for line in lines if not line.startswith("#")][0]
    assert header == "schmidt,seed,corr"
    assert len(lines) - lines.index(header) - 1 == 4

    loaded = RunManifest.load(str(tmp_path / MANIFEST_NAME))
    assert loaded.out_dir == str(tmp_path)
    assert loaded.files == manifest.files


def test_outputs_independent_of_jobs(tmp_path):
    cfg = validate_config(small_fig4c())
    one = run_scenario(cfg, str(tmp_path / "one"), jobs=1)
    three = run_scenario(cfg, str(tmp_path / "three"), jobs=3)
    for f in one.csv_files():
        assert _read(one.path(f.name)) == _read(three.path(f.name))
    assert [f.sha256 for f in one.files] == [f.sha256 for f in three.files]


def test_rerun_is_byte_identical(tmp_path):
    cfg = validate_config(small_fig4c())
    first = run_scenario(cfg, str(tmp_path))
    data = {f.name: _read(first.path(f.name)) for f in first.files}
    second = run_scenario(cfg, str(tmp_path))
    assert {f.name: _read(second.path(f.name)) for f in second.files} == data
    assert not [n for n in os.listdir(tmp_path) if n.endswith(".tmp")]


def test_master_seed_changes_results(tmp_path):
    cfg = validate_config(small_fig4c())
    a = run_scenario(cfg, str(tmp_path / "a"))
    b = run_scenario(with_seed(cfg, 2), str(tmp_path / "b"))
    assert _read(a.path("correlation.csv")) != _read(b.path("correlation.csv"))
    assert with_seed(cfg, None) is cfg
    with pytest.raises(ValueError):
        with_seed(cfg, -1)


def test_task_failure_carries_context(tmp_path):
    cfg = validate_config(small_fig4c())
    with patch.object(CorrelationVsSchmidt, "run_task", side_effect=RuntimeError("boom")):
        with pytest.raises(ScenarioError) as err:
            run_scenario(cfg, str(tmp_path))
    assert err.value.scenario_id == "fig4c_corr_vs_K"
    assert err.value.task == 0
    assert isinstance(err.value.__cause__, RuntimeError)
    assert "boom" in str(err.value)


def test_jobs_must_be_positive(tmp_path):
    with pytest.raises(ValueError):
        run_scenario(validate_config(small_fig4c()), str(tmp_path), jobs=0)


def test_output_dir_from_env(tmp_path):
    cfg = validate_config(small_fig4c(K_values=[1], seeds=1))
    with patch.dict(os.environ, {"PUMPSHAPE_OUT_DIR": str(tmp_path)}):
        manifest = run_scenario(cfg)
    assert manifest.out_dir == os.path.join(str(tmp_path), "fig4c_corr_vs_K")
    assert os.path.exists(manifest.path(MANIFEST_NAME))


def test_schmidt_estimate_scenario(tmp_path):
    cfg = validate_config(dict(scenario_id="schmidt_estimate"))
    manifest = run_scenario(cfg, str(tmp_path))
    lines = [line for line in open(manifest.path("estimate.csv")) if not line.startswith("#")]
    header = lines[0].strip().split(",")
    row = dict(zip(header, lines[1].strip().split(",")))
    assert float(row["schmidt_true"]) == 680.0
    assert float(row["rel_error"]) < 0.1
    assert float(row["schmidt_svd"]) == pytest.approx(680, rel=0.05)


def test_pi_step_scenario(tmp_path):
    cfg = validate_config(dict(scenario_id="figS1_pi_step"))
    manifest = run_scenario(cfg, str(tmp_path))
    lines = [line for line in open(manifest.path("correlations.csv")) if not line.startswith("#")]
    corr = {q: float(c) for q, c in (line.strip().split(",") for line in lines[1:])}
    assert corr["coinc"] > 0.99
    assert corr["pump"] > 0.999
    # each heralded photon is split by the step, its unconditioned marginal is not
    assert corr["singles"] < 0.9
    assert corr["marginal"] > 0.99
    assert corr["beam"] < 0.9


def _rows(manifest, name):
    lines = [line for line in open(manifest.path(name + ".csv")) if not line.startswith("#")]
    header = lines[0].strip().split(",")
    return [{h: v for h, v in zip(header, line.strip().split(","))} for line in lines[1:]]


def test_correlation_grows_with_schmidt(tmp_path):
    cfg = validate_config(small_fig4c(K_values=[1, 10, 200], seeds=5))
    rows = _rows(run_scenario(cfg, str(tmp_path)), "corr_vs_K")
    medians = [float(r["corr_median"]) for r in sorted(rows, key=lambda r: float(r["schmidt"]))]
    assert medians == sorted(medians)
    assert medians[0] < 0.2


def test_dynamic_shaping_scenario(tmp_path):
    cfg = validate_config(dict(scenario_id="fig3_dynamic", parameters=dict(seeds=10)))
    arms = {r["arm"]: r for r in _rows(run_scenario(cfg, str(tmp_path), jobs=4), "arms")}
    pump = {k: float(v) for k, v in arms["pump"].items() if k != "arm"}
    assert pump["eta_sustained_pump"] > 0.5 * pump["eta_static"]
    assert pump["eta_sustained_coinc"] == pytest.approx(pump["eta_sustained_pump"], rel=0.2)
    # half a count per phase setting is below the shot noise
    assert float(arms["coincidence"]["eta_final_coinc"]) < 2


def test_zra_collapse_across_fried_parameters(tmp_path):
    params = dict(r0_values_m=[0.1, 0.4], zra_ratios=[0.1, 1.0, 2.0], seeds=4)
    cfg = validate_config(dict(scenario_id="figS4_zra_collapse", parameters=params))
    rows = _rows(run_scenario(cfg, str(tmp_path), jobs=4), "collapse")
    assert len(rows) == 6
    for g in (1.0, 2.0):
        rel = [float(r["beta_rel"]) for r in rows if float(r["z_over_zra"]) == g]
        assert len(rel) == 2
        assert abs(rel[0] - rel[1]) <= 0.25 * max(rel)


def test_scaling_sweep_fit(tmp_path):
    params = dict(
        n_points=768,
        extent_m=12.0,
        n_screens=4,
        n_segments=64,
        n_lengths=10,
        seeds=4,
        cn2_values=[1e-18, 5e-18, 2e-17, 1e-16],
    )
    cfg = validate_config(dict(scenario_id="figS7_scaling", parameters=params))
    manifest = run_scenario(cfg, str(tmp_path), jobs=4)
    ratios = [float(r["z_ratio"]) for r in _rows(manifest, "crossings")]
    assert sum(1 for z in ratios if z == z) >= 4
    fit = _rows(manifest, "scaling")[0]
    assert float(fit["r_squared"]) > 0.95
