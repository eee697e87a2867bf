"""Render signal and spectrum heatmaps from simulator CSV output.

This package is a pure consumer: it reads the CSV matrices and the oracle
summary JSON emitted by the simulator CLI and never recomputes any physics.
Overlay curves arrive pre-sampled in the summary file and are drawn as
polylines; the only computation done here is locating measured ridge maxima
to report how far each overlay sits from the data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

OVERLAY_KEYS = {"target": "target", "pair": "excited_pair",
                "twophoton": "two_photon"}
OVERLAY_LABELS = {"target": "ground-to-target line",
                  "pair": "excited-pair line",
                  "twophoton": "two-photon line"}
OVERLAY_STYLES = {"target": {"color": "red", "linestyle": "-"},
                  "pair": {"color": "orange", "linestyle": ":"},
                  "twophoton": {"color": "lime", "linestyle": ":"}}


class SchemaError(ValueError):
    """CSV or summary file does not carry the expected columns."""


@dataclass
class Surface:
    """A value(x, y) matrix pivoted from long-form CSV rows."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # shape (len(y), len(x))


def read_matrix_csv(path: str | Path, columns: tuple[str, str, str]) -> Surface:
    """Pivot a long-form CSV (xcol, ycol, value) into a dense surface."""
    xs, ys, vs = [], [], []
    xcol, ycol, vcol = columns
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(columns) - set(reader.fieldnames or ())
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            xs.append(float(row[xcol]))
            ys.append(float(row[ycol]))
            vs.append(float(row[vcol]))
    if not xs:
        raise SchemaError(f"{path}: no data rows")
    x = np.unique(xs)
    y = np.unique(ys)
    values = np.full((len(y), len(x)), np.nan)
    xi = np.searchsorted(x, xs)
    yi = np.searchsorted(y, ys)
    values[yi, xi] = vs
    if np.isnan(values).any():
        raise SchemaError(f"{path}: rows do not form a complete grid")
    return Surface(x=x, y=y, values=values)


def load_summary(path: str | Path) -> dict:
    summary = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("gap_exact", "overlays"):
        if key not in summary:
            raise SchemaError(f"{path}: summary misses {key!r}")
    return summary


def overlay_curve(summary: dict, kind: str) -> np.ndarray:
    key = OVERLAY_KEYS[kind]
    pts = summary["overlays"].get(key) or []
    if not pts:
        raise SchemaError(f"summary has no overlay data for {kind!r}")
    return np.asarray(pts, dtype=float)


def ridge_distance_bins(spectrum: Surface, curve: np.ndarray,
                        others: list[np.ndarray], window_bins: float = 2.5,
                        ambiguity_bins: float = 3.0,
                        floor_fraction: float = 0.02) -> float:
    """Worst distance (in frequency bins) between an overlay curve and the
    measured ridge maximum near it.

    A column contributes only when the ridge is attributable there: the
    curve must not run within ``ambiguity_bins`` of another overlay (crossing
    ridges cannot be told apart), the in-window maximum must be an interior
    local peak rather than the sloping shoulder of a stronger line outside
    the window, and its power must reach ``floor_fraction`` of the strongest
    peak found anywhere along the curve (ridges fade into the background far
    from their resonance).
    """
    bin_width = float(spectrum.y[1] - spectrum.y[0])
    candidates: list[tuple[float, float]] = []  # (deviation_bins, peak_power)
    for col, omega in enumerate(spectrum.x):
        pred = float(np.interp(omega, curve[:, 0], curve[:, 1]))
        if not spectrum.y[0] <= pred <= spectrum.y[-1]:
            continue
        ambiguous = False
        for other in others:
            alt = float(np.interp(omega, other[:, 0], other[:, 1]))
            if abs(alt - pred) <= ambiguity_bins * bin_width:
                ambiguous = True
                break
        if ambiguous:
            continue
        mask = (spectrum.y > 0) & (np.abs(spectrum.y - pred) <= window_bins * bin_width)
        rows = np.where(mask)[0]
        if len(rows) < 3:
            continue
        col_power = spectrum.values[:, col]
        peak_row = int(rows[int(np.argmax(col_power[rows]))])
        if peak_row in (rows[0], rows[-1]):
            continue  # shoulder of something outside the window
        if not (col_power[peak_row] >= col_power[peak_row - 1]
                and col_power[peak_row] >= col_power[peak_row + 1]):
            continue
        candidates.append((abs(float(spectrum.y[peak_row]) - pred) / bin_width,
                           float(col_power[peak_row])))
    if not candidates:
        raise SchemaError("overlay has no unambiguous overlap with the spectrum")
    strongest = max(p for _, p in candidates)
    kept = [d for d, p in candidates if p >= floor_fraction * strongest]
    if not kept:
        raise SchemaError("overlay ridge is everywhere below the power floor")
    return max(kept)


def plot_signal(csv_path: str | Path, out_path: str | Path,
                summary_path: str | Path | None = None,
                raw_axes: bool = False) -> Path:
    """Heatmap of the measured observable: dwell time horizontal, drive
    frequency (gap-normalized by default) vertical."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    surf = read_matrix_csv(csv_path, ("omega", "tau", "expectation"))
    gap = 1.0
    ylabel = "drive frequency"
    if summary_path is not None and not raw_axes:
        gap = float(load_summary(summary_path)["gap_exact"])
        ylabel = "drive frequency / gap"
    fig, ax = plt.subplots(figsize=(7.2, 4.2), constrained_layout=True)
    mesh = ax.pcolormesh(surf.y, surf.x / gap, surf.values.T, shading="nearest",
                         cmap="viridis")
    ax.set_xlabel("dwell time")
    ax.set_ylabel(ylabel)
    fig.colorbar(mesh, ax=ax, label="expectation value")
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_spectrum(csv_path: str | Path, out_path: str | Path,
                  summary_path: str | Path | None = None,
                  overlays: tuple[str, ...] = (),
                  raw_axes: bool = False,
                  window_bins: float = 2.5) -> tuple[Path, dict[str, float]]:
    """Power-spectrum heatmap with optional analytic overlay polylines.

    Returns the output path and, per requested overlay, the worst measured
    ridge distance in frequency bins.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    surf = read_matrix_csv(csv_path, ("omega", "Omega", "power"))
    summary = None
    gap = 1.0
    xlabel = "drive frequency"
    if summary_path is not None:
        summary = load_summary(summary_path)
        if not raw_axes:
            gap = float(summary["gap_exact"])
            xlabel = "drive frequency / gap"
    if overlays and summary is None:
        raise SchemaError("overlays need --summary with overlay parameters")
    fig, ax = plt.subplots(figsize=(7.2, 4.2), constrained_layout=True)
    mesh = ax.pcolormesh(surf.x / gap, surf.y, surf.values, shading="nearest",
                         cmap="viridis")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("oscillation frequency")
    fig.colorbar(mesh, ax=ax, label="spectral power")
    distances: dict[str, float] = {}
    curves = {kind: overlay_curve(summary, kind) for kind in overlays}
    for kind, curve in curves.items():
        others = [c for k, c in curves.items() if k != kind]
        distances[kind] = ridge_distance_bins(surf, curve, others,
                                              window_bins=window_bins)
        inside = (curve[:, 1] >= surf.y[0]) & (curve[:, 1] <= surf.y[-1])
        ax.plot(curve[inside, 0] / gap, curve[inside, 1],
                label=OVERLAY_LABELS[kind], linewidth=1.3,
                **OVERLAY_STYLES[kind])
    if overlays:
        ax.legend(loc="upper right", fontsize=8)
    ax.set_ylim(surf.y[0], surf.y[-1])
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path, distances
