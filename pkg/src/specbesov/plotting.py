"""Collation of CSV tables into per-figure data files and PNG renderings."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

log = logging.getLogger(__name__)


@dataclass
class Series:
    name: str
    x_label: str
    columns: dict[str, list[float]]
    x: list[float]


def read_series(path: Path) -> Series | None:
    """First column is the abscissa, the rest are ordinates; ``None`` (with a warning) if malformed."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        log.warning("skipping %s: %s", path, exc)
        return None
    if len(rows) < 2 or len(rows[0]) < 2:
        log.warning("skipping %s: need a header and at least one data row with two columns", path)
        return None
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError:
        log.warning("skipping %s: non-numeric entries", path)
        return None
    if data.ndim != 2 or data.shape[1] != len(header):
        log.warning("skipping %s: ragged rows", path)
        return None
    cols = {h: data[:, k].tolist() for k, h in enumerate(header[1:], start=1)}
    return Series(path.stem, header[0], cols, data[:, 0].tolist())


def render(series: Series, path: Path) -> None:
    """Plot every column against the abscissa on log axes; symlog in y when some value is not positive."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.asarray(series.x)
    ys = {k: np.asarray(v) for k, v in series.columns.items()}
    for name, y in ys.items():
        ax.plot(x, y, marker="o", label=name)
    if np.all(x > 0):
        ax.set_xscale("log")
    if all(np.all(y > 0) for y in ys.values()):
        ax.set_yscale("log")
    else:
        nz = np.concatenate([np.abs(y[y != 0]) for y in ys.values()])
        ax.set_yscale("symlog", linthresh=float(nz.min()) if nz.size else 1.0)
    ax.set_xlabel(series.x_label)
    ax.set_title(series.name)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def collate(directory: str | Path, out: str | Path | None = None, png: bool = True) -> dict:
    """Turn every CSV in ``directory`` into ``<name>.json`` (and ``<name>.png``) under ``out``."""
    directory = Path(directory)
    out = Path(out) if out else directory / "bundle"
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for path in sorted(directory.glob("*.csv")):
        s = read_series(path)
        if s is None:
            continue
        entry = {"name": s.name, "source": path.name, "data": f"{s.name}.json"}
        (out / entry["data"]).write_text(json.dumps({"x_label": s.x_label, "x": s.x, "series": s.columns}, indent=1))
        if png:
            entry["figure"] = f"{s.name}.png"
            render(s, out / entry["figure"])
        index.append(entry)
    bundle = {"figures": index}
    (out / "index.json").write_text(json.dumps(bundle, indent=1))
    return bundle
