"""Deterministic artifact emission: CSV tables, JSON manifests, SVG figures.

Floats are serialized with 12 significant digits everywhere, rows are
written with fixed newlines, and figures are rendered with a pinned hash
salt and no timestamp, so reruns of the same computation produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path


def fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".12g")
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")
    return path


def write_manifest(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, default=fmt_value) + "\n",
        encoding="utf-8",
        newline="",
    )
    return path


def sha256_hex(data) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def witness_hash(witness) -> str:
    if witness is None:
        return ""
    return sha256_hex(",".join(str(int(i)) for i in witness))


def render_series_svg(
    path,
    xs,
    ys,
    xlabel: str,
    ylabel: str,
    title: str,
    loglog: bool = True,
    fit_slope: bool = False,
) -> Path:
    """Render one data series; optionally annotate the log-log slope."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "metriclab"
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    plot = ax.loglog if loglog else ax.plot
    plot(xs, ys, "o-", color="#1f6fb2", label=ylabel)
    if fit_slope and len(xs) >= 2 and all(x > 0 for x in xs) and all(y > 0 for y in ys):
        import numpy as np

        lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
        slope, intercept = np.polyfit(lx, ly, 1)
        fit = np.exp(intercept) * np.asarray(xs, float) ** slope
        plot(xs, fit, "--", color="#b23a1f", label=f"slope {slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
