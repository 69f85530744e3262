"""CSV/JSON writers with stable, full-precision formatting."""
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__


def fmt(x):
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, columns):
    """Write equal-length columns with a header row; floats use 17 significant digits."""
    cols = [c if isinstance(c, (list, tuple)) and c and isinstance(c[0], str) else np.asarray(c)
            for c in columns]
    n = len(cols[0])
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(fmt(c[i]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    out = {}
    for k, name in enumerate(header):
        col = [r[k] for r in rows]
        try:
            out[name] = np.array([float(x) for x in col])
        except ValueError:
            out[name] = col
    return out


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(command, config, outdir, files, inputs=None, diagnostics=None):
    """Manifest recording the resolved config, tool version, inputs and output hashes.

    No timestamps or host details, so identical runs give identical bytes.
    """
    outdir = Path(outdir)
    return {
        "tool": "quickdetect",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": inputs or {},
        "outputs": {f: sha256_file(outdir / f) for f in sorted(files)},
        "diagnostics": diagnostics or {},
    }


def export_lump(solution, outdir):
    outdir = Path(outdir)
    files = []
    for n, (tab, bd) in enumerate(zip(solution.tables, solution.boundaries)):
        name = f"lump_n{n:02d}.csv"
        write_csv(outdir / name, ["phi", "value", "t_star", "barrier_time", "barrier_phi"],
                  [tab.grid, tab.values, bd.t_star, bd.barrier_time, bd.barrier_phi])
        files.append(name)
    return files


def export_continuous(solution, outdir):
    outdir = Path(outdir)
    write_csv(outdir / "continuous.csv", ["phi", "value"], [solution.table.grid, solution.table.values])
    return ["continuous.csv"]


def export_arrival(lattice, outdir, y_stride=1):
    from .arrival import KIND_NAMES
    outdir = Path(outdir)
    files = []
    for (j, k), tab in sorted(lattice.tables.items(), reverse=True):
        rows = np.arange(0, tab.s_grid.size, y_stride)
        y = np.repeat(tab.s_grid[rows], tab.psi_grid.size)
        phi = tab.odds[rows].ravel()
        kinds = [KIND_NAMES[int(x)] for x in tab.action_kind[rows].ravel()]
        name = f"arrival_j{j}_k{k}.csv"
        write_csv(outdir / name, ["y", "phi", "value", "action_time", "action_kind"],
                  [y, phi, tab.values[rows].ravel(), tab.action_time[rows].ravel(), kinds])
        files.append(name)
    return files


def export_episodes(path, episodes):
    write_csv(path, ["theta", "tau", "false_alarm", "delay", "observations_used"],
              [episodes["theta"], episodes["tau"],
               [str(int(x)) for x in episodes["false_alarm"]],
               episodes["delay"], [str(int(x)) for x in episodes["observations_used"]]])
