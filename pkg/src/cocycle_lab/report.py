"""Report writers: CSV rows, JSON verdicts, two-column plot data and PNG figures.

Every writer is a pure function of its inputs, so reruns with the same
configuration produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .suites import Series, SuiteResult  # noqa: E402

CSV_COLUMNS = ["experiment_id", "fingerprint", "estimator", "cocycle", "n", "statistic", "value", "stderr", "samples", "seed"]

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "lines.markersize": 3.5,
    "legend.fontsize": 7,
    "legend.frameon": False,
    "svg.hashsalt": "cocycle-lab",
}


def _num(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _json_num(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._+-]+", "_", text).strip("_") or "series"


def write_csv(path: str, experiment: str, fingerprint: str, seed: int, res: SuiteResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in res.rows:
            w.writerow([experiment, fingerprint, r.estimator, r.cocycle, r.n, r.statistic, _num(r.value), _num(r.stderr), r.samples, seed])


def verdict(experiment: str, fingerprint: str, suite: str, res: SuiteResult) -> dict:
    return {
        "experiment_id": experiment,
        "fingerprint": fingerprint,
        "suite": suite,
        "incomplete": res.incomplete,
        "passed": res.passed,
        "notes": list(res.notes),
        "criteria": [
            {"name": c.name, "value": _json_num(c.value), "threshold": _json_num(c.threshold), "pass": c.passed} for c in res.criteria
        ],
    }


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def write_dat(directory: str, series: list[Series]) -> list[str]:
    """One ``x y`` file per series, named after its figure and label."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for s in series:
        path = os.path.join(directory, f"{slug(s.figure)}__{slug(s.label)}.dat")
        with open(path, "w") as fh:
            fh.write(f"# {s.xlabel} | {s.ylabel}\n")
            for x, y in zip(s.x, s.y):
                fh.write(f"{_num(x)} {_num(y)}\n")
        paths.append(path)
    return paths


def write_figures(directory: str, series: list[Series]) -> list[str]:
    """Series sharing a figure name are drawn on one set of axes."""
    os.makedirs(directory, exist_ok=True)
    groups: dict[str, list[Series]] = defaultdict(list)
    for s in series:
        groups[s.figure].append(s)
    paths = []
    with plt.rc_context(STYLE):
        for name, members in groups.items():
            fig, ax = plt.subplots()
            for s in members:
                xs = [x for x, y in zip(s.x, s.y) if math.isfinite(y) and (y > 0 or not s.logy)]
                ys = [y for x, y in zip(s.x, s.y) if math.isfinite(y) and (y > 0 or not s.logy)]
                ax.plot(xs, ys, marker="o", label=s.label)
            first = members[0]
            ax.set_xlabel(first.xlabel)
            ax.set_ylabel(first.ylabel)
            if first.logy:
                ax.set_yscale("log")
            if len(members) > 1:
                ax.legend(ncol=2 if len(members) > 4 else 1)
            ax.set_title(name.replace("_", " "))
            fig.tight_layout()
            path = os.path.join(directory, f"{slug(name)}.png")
            fig.savefig(path, metadata={"Software": None})
            plt.close(fig)
            paths.append(path)
    return paths
