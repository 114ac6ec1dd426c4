"""File emission: CSV tables, JSON documents and SVG trajectory plots.

Floats are written with ``repr`` (shortest round-trip form) and non-finite
values become ``null`` in JSON and empty cells in CSV.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SAMPLES_SCHEMA = {
    "description": "samples.csv: one row per chain; columns chain, x0 .. x{d-1}",
}

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["config", "dimension", "label", "chains", "divergences",
                 "gap_profile", "quality"],
    "properties": {
        "config": {"type": "object"},
        "dimension": {"type": "integer", "minimum": 1},
        "label": {"type": "string"},
        "chains": {"type": "integer", "minimum": 1},
        "divergences": {"type": "integer", "minimum": 0},
        "quality": {
            "type": "object",
            "required": ["energy_distance", "mean_min_distance", "conditional_fraction"],
            "properties": {
                "energy_distance": {"type": "number", "minimum": 0},
                "mean_min_distance": {"type": "number", "minimum": 0},
                "conditional_fraction": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "gap_profile": {
            "type": "object",
            "required": ["times", "state_gap_mean", "state_gap_max", "final_gap_mean",
                         "final_gap_max", "r_mean", "r_count", "divergences",
                         "r_overall", "r_pairs"],
            "properties": {
                "times": {"type": "array", "items": {"type": "number"}},
                "state_gap_mean": {"type": "array", "items": {"type": ["number", "null"]}},
                "state_gap_max": {"type": "array", "items": {"type": ["number", "null"]}},
                "final_gap_mean": {"type": "array", "items": {"type": ["number", "null"]}},
                "final_gap_max": {"type": "array", "items": {"type": ["number", "null"]}},
                "r_mean": {"type": "array", "items": {"type": ["number", "null"]}},
                "r_count": {"type": "array", "items": {"type": "integer"}},
                "divergences": {"type": "array", "items": {"type": "integer"}},
                "r_overall": {"type": ["number", "null"]},
                "r_pairs": {"type": "integer"},
            },
        },
    },
}

_NUM_OR_NULL = {"type": ["number", "null"]}
_VEC = {"type": "array", "items": _NUM_OR_NULL}

RECORD_SCHEMA = {
    "type": "object",
    "required": ["chain", "noise", "final", "steps"],
    "properties": {
        "chain": {"type": "integer", "minimum": 0},
        "noise": _VEC,
        "final": _VEC,
        "steps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["i", "t", "state_gap", "diverged"],
                "properties": {
                    "i": {"type": "integer"},
                    "t": {"type": "number"},
                    "state": _VEC,
                    "velocity": _VEC,
                    "half_state": _VEC,
                    "next_state": _VEC,
                    "state_gap": _NUM_OR_NULL,
                    "gap_trace": _VEC,
                    "residual_trace": _VEC,
                    "diverged": {"type": "boolean"},
                    "diverged_at": {"type": "integer"},
                },
            },
        },
    },
}

TRAJECTORY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["config", "records"],
    "properties": {
        "config": {"type": "object"},
        "records": {"type": "array", "items": RECORD_SCHEMA},
    },
}

COMPARE_COLUMNS = ["method", "w", "N", "K", "m", "beta", "energy_distance",
                   "mean_min_distance", "mean_final_gap", "mean_r", "divergences",
                   "wall_time"]

COMPARE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["config", "rows"],
    "properties": {
        "config": {"type": "object"},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": COMPARE_COLUMNS,
                "properties": {
                    "method": {"type": "string"},
                    "w": {"type": "number"},
                    "N": {"type": "integer"},
                    "K": {"type": "integer"},
                    "m": {"type": ["integer", "null"]},
                    "beta": {"type": ["number", "null"]},
                    "energy_distance": {"type": "number"},
                    "mean_min_distance": {"type": "number"},
                    "mean_final_gap": _NUM_OR_NULL,
                    "mean_r": _NUM_OR_NULL,
                    "divergences": {"type": "integer"},
                    "wall_time": {"type": "number"},
                },
            },
        },
    },
}


def jsonable(value):
    """Recursively convert numpy values to JSON-safe Python objects."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def write_json(path, doc):
    text = json.dumps(jsonable(doc), indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ""
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_samples_csv(path, samples):
    samples = np.asarray(samples, dtype=float)
    header = ["chain"] + [f"x{j}" for j in range(samples.shape[1])]
    write_csv(path, header, ([c, *row] for c, row in enumerate(samples)))


def read_samples_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def record_to_json(rec):
    steps = []
    for i, t in enumerate(rec.times):
        step = {
            "i": i,
            "t": float(t),
            "state_gap": rec.state_gaps[i],
            "diverged": bool(rec.diverged[i]),
            "diverged_at": int(rec.diverged_at[i]),
        }
        if rec.states is not None:
            step["state"] = rec.states[i]
            step["velocity"] = rec.velocities[i]
            step["half_state"] = rec.half_states[i]
            step["next_state"] = rec.states[i + 1]
        if rec.gaps is not None:
            step["gap_trace"] = rec.gaps[i]
        if rec.residuals is not None:
            step["residual_trace"] = rec.residuals[i]
        steps.append(step)
    return jsonable({"chain": rec.chain, "noise": rec.noise, "final": rec.final, "steps": steps})


# ---------------------------------------------------------------------------
# SVG

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def trajectory_svg(cloud, records, label, size=480, margin=24, max_chains=16):
    """Render 2-D chain paths over the data cloud as an SVG string.

    The viewport is fixed by the cloud and the plotted paths, padded by
    10 percent.  Only records with full trajectories are drawn as paths;
    final samples are always drawn.
    """
    if cloud.dimension != 2:
        raise ValueError("trajectory plots need a 2-D world")
    shown = records[:max_chains]
    pts = [cloud.points] + [np.atleast_2d(r.final) for r in records]
    pts += [r.states for r in shown if r.states is not None]
    allp = np.vstack(pts)
    allp = allp[np.all(np.isfinite(allp), axis=1)]
    lo, hi = allp.min(0), allp.max(0)
    span = max(float(np.max(hi - lo)), 1e-9) * 1.1
    mid = (lo + hi) / 2.0
    scale = (size - 2 * margin) / span

    def xy(p):
        return (margin + (p[0] - mid[0]) * scale + (size - 2 * margin) / 2,
                margin + (mid[1] - p[1]) * scale + (size - 2 * margin) / 2)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    labels = list(cloud.label_names)
    for p, lab in zip(cloud.points, cloud.labels):
        x, y = xy(p)
        color = _COLORS[labels.index(lab) % len(_COLORS)]
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}" fill-opacity="0.5"/>')
    for r in shown:
        if r.states is None:
            continue
        path = " ".join("{:.2f},{:.2f}".format(*xy(s)) for s in r.states if np.all(np.isfinite(s)))
        out.append(f'<polyline points="{path}" fill="none" stroke="#555" stroke-width="0.8"/>')
    for r in records:
        x, y = xy(r.final)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2" fill="black"/>')
    out.append(f'<text x="{margin}" y="{margin - 8}" font-size="12" font-family="sans-serif">'
               f'condition {label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
