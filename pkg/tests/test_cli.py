# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

import json
import os
from unittest.mock import patch

import pytest
import yaml

from pumpshape.cli import error_line, main
from pumpshape.errors import ConfigError, ScenarioError

from tests.helpers import small_fig4c


def _config(tmp_path, doc):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def _error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: ")
    return json.loads(err[len("error: ") :])


def test_list_scenarios(capsys):
    assert main(["--list-scenarios"]) == 0
    out = capsys.readouterr().out.split()
    assert "fig4c_corr_vs_K" in out
    assert out == sorted(out)
    assert main(["run", "--list-scenarios"]) == 0


def test_run(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = _config(tmp_path, small_fig4c(K_values=[1], seeds=1))
    assert main(["run", cfg, "--out", str(out), "-j", "2", "--seed", "5"]) == 0
    manifest = capsys.readouterr().out.strip()
    assert manifest == os.path.join(str(out), "manifest.json")
    with open(manifest) as f:
        assert json.load(f)["master_seed"] == 5

    assert main(["plot", manifest]) == 0
    assert capsys.readouterr().out.strip().endswith("plot_fig4c_corr_vs_K.py")


def test_run_from_env(tmp_path, capsys):
    cfg = _config(tmp_path, small_fig4c(K_values=[1], seeds=1))
    with patch.dict(os.environ, {"PUMPSHAPE_OUT_DIR": str(tmp_path / "env")}):
        assert main(["run", cfg]) == 0
    assert os.path.exists(tmp_path / "env" / "fig4c_corr_vs_K" / "manifest.json")


def test_unknown_key(tmp_path, capsys):
    doc = small_fig4c()
    doc["parameters"]["foo"] = 1
    assert main(["run", _config(tmp_path, doc), "--out", str(tmp_path)]) == 1
    err = _error(capsys)
    assert err["type"] == "ConfigError"
    assert err["key"] == "foo"


def test_missing_config(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 1
    assert _error(capsys)["type"] == "FileNotFoundError"


def test_usage_errors(capsys):
    assert main([]) == 2
    with pytest.raises(SystemExit):
        main(["run"])
    with pytest.raises(SystemExit):
        main(["run", "x.yaml", "--jobs", "0"])


def test_error_line():
    info = json.loads(error_line(ScenarioError("failed", scenario_id="fig2_speckle_identity", task=3))[7:])
    assert info == dict(type="ScenarioError", message="failed", key=None, scenario_id="fig2_speckle_identity", task=3)
    try:
        try:
            raise ConfigError("bad", key="seeds")
        except ConfigError as e:
            raise ScenarioError("wrapped") from e
    except ScenarioError as e:
        assert json.loads(error_line(e)[7:])["key"] == "seeds"


def test_main_reads_argv(capsys):
    with patch("sys.argv", ["pumpshape", "--list-scenarios"]):
        assert main() == 0
    assert "schmidt_estimate" in capsys.readouterr().out.split()
