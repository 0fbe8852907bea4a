# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: scenario runner, CSV tables and run manifest"""
import csv
import hashlib
import json
import logging as log
import os
import time
from dataclasses import asdict, dataclass, field, replace
from multiprocessing.pool import ThreadPool
from typing import Any, Dict, List, Optional

from . import __version__
from .config import ScenarioConfig, derive_seed, resolve_output_dir
from .errors import ScenarioError
from .plotgen import emit_plot_script
from .scenarios import Scenario, TaskResult
from .store import ResultStore, TableSpec
from .types import format_value

CSV_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ManifestFile:
    name: str
    sha256: str
    kind: str


@dataclass
class RunManifest:
    """Everything one run wrote, with enough context to reproduce it."""

    scenario_id: str
    out_dir: str
    master_seed: int
    parameters: Dict[str, Any]
    config: Dict[str, Any] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=list)
    library_version: str = ""
    wall_clock_s: float = 0.0
    files: List[ManifestFile] = field(default_factory=list)
    media: Dict[str, str] = field(default_factory=dict)

    def csv_files(self) -> List[ManifestFile]:
        return [f for f in self.files if f.kind == "csv"]

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("out_dir")
        return out

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        with open(path, "r", encoding="utf8") as f:
            data = json.load(f)
        data["files"] = [ManifestFile(**f) for f in data.get("files", [])]
        return cls(out_dir=os.path.dirname(os.path.abspath(path)), **data)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _replace_into(path: str, write):
    """Write through a temp file so readers never see a partial file."""
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf8", newline="") as f:
        write(f)
    os.replace(tmp_path, path)


def write_csv(path: str, scenario_id: str, spec: TableSpec, rows: List[dict], notes=()):
    """One table: '#' header (schema version, scenario, table, units, notes), column line, rows."""

    def write(f):
        print("# pumpshape schema_version: %d" % CSV_SCHEMA_VERSION, file=f)
        print("# scenario: %s" % scenario_id, file=f)
        print("# table: %s" % spec.name, file=f)
        print("# units: " + ", ".join("%s=%s" % (k, u or "1") for k, u in spec.units.items()), file=f)
        for note in notes:
            print("# note: " + note, file=f)
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(spec.column_names)
        for row in rows:
            writer.writerow([format_value(row[name]) for name in spec.column_names])

    _replace_into(path, write)


def _run_tasks(scenario: Scenario, tasks: List[dict], seeds: List[int], jobs: int) -> List[TaskResult]:
    def run(i):
        log.debug("%s: task %d %s", scenario.scenario_id, i, tasks[i])
        try:
            return scenario.run_task(tasks[i], seeds[i])
        except Exception as e:
            raise ScenarioError(
                "%s task %d (%s) failed: %s" % (scenario.scenario_id, i, tasks[i], e),
                scenario_id=scenario.scenario_id,
                task=i,
            ) from e

    if jobs > 1:
        with ThreadPool(jobs) as pool:
            return pool.map(run, range(len(tasks)))
    return [run(i) for i in range(len(tasks))]


def run_scenario(cfg: ScenarioConfig, out_dir: Optional[str] = None, jobs: int = 1) -> RunManifest:
    """Run every task of cfg's scenario and write tables, plot script and manifest.

    Results are keyed by task index, so outputs are the same for any number of jobs.
    """
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    started = time.monotonic()
    scenario_type = Scenario.get(cfg.scenario_id)
    scenario = scenario_type(cfg.parameters)
    out_dir = resolve_output_dir(cfg, out_dir)
    os.makedirs(out_dir, exist_ok=True)

    tasks = scenario.tasks()
    seeds = [derive_seed(cfg.master_seed, cfg.scenario_id, i) for i in range(len(tasks))]
    log.info("%s: %d tasks on %d worker(s), output in %s", cfg.scenario_id, len(tasks), jobs, out_dir)
    results = _run_tasks(scenario, tasks, seeds, jobs)

    store = ResultStore(scenario_type.all_tables())
    manifest = RunManifest(
        cfg.scenario_id,
        out_dir,
        cfg.master_seed,
        cfg.parameters,
        config=cfg.echo,
        seeds=seeds,
        library_version=__version__,
    )
    try:
        for i, res in enumerate(results):
            for table, rows in res.rows.items():
                store.insert(table, i, rows)
            for name, digest in sorted(res.media.items()):
                manifest.media["task%d.%s" % (i, name)] = digest
        try:
            summary = scenario.summarize(store)
        except Exception as e:
            raise ScenarioError("%s summary failed: %s" % (cfg.scenario_id, e), scenario_id=cfg.scenario_id) from e
        for table, rows in summary.items():
            store.insert(table, len(tasks), rows)

        for spec in scenario_type.all_tables():
            name = spec.name + ".csv"
            path = manifest.path(name)
            write_csv(path, cfg.scenario_id, spec, store.select(spec.name), scenario_type.notes.get(spec.name, ()))
            manifest.files.append(ManifestFile(name, _sha256(path), "csv"))
    finally:
        store.close()

    script = emit_plot_script(manifest)
    manifest.files.append(ManifestFile(os.path.basename(script), _sha256(script), "plot_script"))

    manifest.wall_clock_s = time.monotonic() - started
    _replace_into(manifest.path(MANIFEST_NAME), lambda f: json.dump(manifest.to_dict(), f, indent=2, sort_keys=True))
    log.info("%s: wrote %d files in %.1f s", cfg.scenario_id, len(manifest.files) + 1, manifest.wall_clock_s)
    return manifest


def with_seed(cfg: ScenarioConfig, master_seed: Optional[int]) -> ScenarioConfig:
    """cfg with its master seed overridden, if one is given."""
    if master_seed is None:
        return cfg
    if master_seed < 0:
        raise ValueError("master seed must be nonnegative")
    return replace(cfg, master_seed=master_seed)
