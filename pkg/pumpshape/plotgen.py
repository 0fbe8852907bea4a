# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: plot script generator

The generated script reads only the CSV files listed in a run manifest and needs only
matplotlib.  It writes <scenario_id>.png next to itself.
"""
import logging as log
import os

from .errors import PlotScriptError
from .scenarios import PlotSpec, Scenario


def script_name(scenario_id: str) -> str:
    return "plot_" + scenario_id + ".py"


def _panels(manifest):
    tables = {os.path.splitext(f.name)[0]: f.name for f in manifest.csv_files()}
    plots = Scenario.get(manifest.scenario_id).plots if manifest.scenario_id in Scenario.registry else ()
    panels = []
    for spec in plots:
        if spec.table not in tables:
            log.debug("%s: no CSV for plot of %s", manifest.scenario_id, spec.table)
            continue
        panels.append(spec)
    if not panels:
        # fall back to the first two columns of the first table
        first = manifest.csv_files()[0].name
        panels.append(PlotSpec(os.path.splitext(first)[0], "", ()))
    return tables, panels


def gen_header(out, manifest, tables):
    print("# generated by pumpshape for scenario %s; do not edit" % manifest.scenario_id, file=out)
    print("import csv\nimport os\n", file=out)
    print("import matplotlib\n", file=out)
    print('matplotlib.use("Agg")', file=out)
    print("import matplotlib.pyplot as plt  # noqa: E402\n", file=out)
    print("HERE = os.path.dirname(os.path.abspath(__file__))", file=out)
    print("CSV_FILES = {", file=out)
    for table, name in sorted(tables.items()):
        print("    %r: %r," % (table, name), file=out)
    print("}\n", file=out)


def gen_readers(out):
    print(
        '''
def read_table(table):
    with open(os.path.join(HERE, CSV_FILES[table]), newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def panel(ax, table, x, ys, group, logx, logy, title):
    rows = read_table(table)
    if not rows:
        ax.set_title(title + " (no data)")
        return
    names = list(rows[0])
    x = x or names[0]
    ys = ys or names[1:2]
    groups = sorted({r[group] for r in rows}) if group else [None]
    for g in groups:
        sel = [r for r in rows if g is None or r[group] == g]
        for y in ys:
            label = y if g is None else "%s, %s=%s" % (y, group, g)
            ax.plot([float(r[x]) for r in sel], [float(r[y]) for r in sel], marker=".", label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_title(title or table)
    ax.legend(fontsize="small")
''',
        file=out,
    )


def gen_panels(out, panels):
    print("PANELS = [", file=out)
    for p in panels:
        print(
            "    (%r, %r, %r, %r, %r, %r, %r)" % (p.table, p.x, list(p.y), p.group, p.logx, p.logy, p.title) + ",",
            file=out,
        )
    print("]\n", file=out)


def gen_main(out, manifest):
    print(
        '''
def main():
    fig, axes = plt.subplots(len(PANELS), 1, figsize=(7, 3.5 * len(PANELS)), squeeze=False)
    for ax, spec in zip(axes[:, 0], PANELS):
        panel(ax, *spec)
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, %r), dpi=120)


if __name__ == "__main__":
    main()'''
        % (manifest.scenario_id + ".png"),
        file=out,
    )


def emit_plot_script(manifest, out_path=None) -> str:
    """Write the plotting script for a run; returns its path.

    Raises PlotScriptError when the manifest lists no CSV, or lists one that is missing.
    Running it twice on the same manifest produces the same file.
    """
    csvs = manifest.csv_files()
    if not csvs:
        raise PlotScriptError("manifest for %s lists no CSV files" % manifest.scenario_id)
    for f in csvs:
        if not os.path.isfile(manifest.path(f.name)):
            raise PlotScriptError("CSV file %s listed in the manifest is missing" % f.name)
    tables, panels = _panels(manifest)

    dest_path = out_path or manifest.path(script_name(manifest.scenario_id))
    tmp_path = dest_path + ".tmp"
    with open(tmp_path, "w", encoding="utf8") as out:
        gen_header(out, manifest, tables)
        gen_readers(out)
        gen_panels(out, panels)
        gen_main(out, manifest)
    os.replace(tmp_path, dest_path)
    log.debug("wrote plot script %s", dest_path)
    return dest_path
