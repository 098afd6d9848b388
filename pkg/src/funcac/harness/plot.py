"""SVG line charts of logged columns, optionally aggregated over a seed group."""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..driver import LOG_COLUMNS  # noqa: E402
from ..errors import IoError, SchemaMismatch  # noqa: E402
from .io import read_log  # noqa: E402


def aggregate(csv_paths, col):
    """``(t, mean, std)`` of ``col`` over the ``t`` values common to every log."""
    if col not in LOG_COLUMNS or col == "t":
        raise SchemaMismatch(f"unknown log column {col!r}")
    logs = [read_log(p) for p in csv_paths]
    common = set(logs[0].column("t").tolist())
    for log in logs[1:]:
        common &= set(log.column("t").tolist())
    t = np.array(sorted(common), dtype=int)
    rows = []
    for log in logs:
        lookup = dict(zip(log.column("t").tolist(), log.column(col)))
        rows.append([lookup[k] for k in t])
    vals = np.array(rows, dtype=float).reshape(len(logs), len(t))
    return t, vals.mean(axis=0), vals.std(axis=0)


def read_manifest(path) -> list:
    try:
        with open(path) as f:
            paths = json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc.strerror}") from exc
    if not isinstance(paths, list) or not all(isinstance(p, str) for p in paths):
        raise SchemaMismatch(f"{path}: manifest must be a JSON list of paths")
    base = os.path.dirname(os.path.abspath(path))
    return [p if os.path.isabs(p) else os.path.join(base, p) for p in paths]


def emit_plot(csv_paths, col: str, out, manifest=None) -> None:
    """Line chart of ``col`` against ``t``; byte-identical output for identical inputs.

    Each CSV in ``csv_paths`` becomes one series. If ``manifest`` (a JSON list
    of CSV paths) is given, its logs are drawn as a mean curve with a
    +-1 std band instead.
    """
    if col not in LOG_COLUMNS or col == "t":
        raise SchemaMismatch(f"unknown log column {col!r}")
    with plt.rc_context({"svg.hashsalt": "funcac", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for path in csv_paths:
            log = read_log(path)
            ax.plot(log.column("t"), log.column(col), lw=1, label=os.path.basename(str(path)))
        if manifest is not None:
            t, mean, std = aggregate(read_manifest(manifest), col)
            band = ax.fill_between(t, mean - std, mean + std, alpha=0.3, color="C0", lw=0)
            band.set_gid("band")
            (line,) = ax.plot(t, mean, color="C0", lw=1.5, label="mean")
            line.set_gid("mean")
        ax.set_xlabel("t")
        ax.set_ylabel(col)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize="small")
        fig.tight_layout()
        try:
            fig.savefig(out, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise IoError(f"cannot write plot {out}: {exc.strerror}") from exc
        finally:
            plt.close(fig)
