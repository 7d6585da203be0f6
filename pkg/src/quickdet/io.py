"""CSV, JSON, and raster export helpers.

All text output is UTF-8 with deterministic float formatting (shortest
round-trip repr), so identical inputs produce byte-identical files.
Raster files hold a 12-byte header of little-endian uint32
(width, height, frame count) followed by frame-major float32
little-endian pixels in row-major order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

_RASTER_HEADER = struct.Struct("<III")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_trajectory_csv(path, trajectory) -> None:
    rows = (
        (k, int(trajectory.states[k]), trajectory.observations[k - 1])
        for k in range(1, trajectory.length + 1)
    )
    write_csv(path, ("k", "state", "observation"), rows)


def write_filter_trace_csv(path, steps) -> None:
    rows = (
        (s.k, s.belief.p[0], s.belief.p[1], s.log_normalizer) for s in steps
    )
    write_csv(path, ("k", "belief_e1", "belief_e2", "log_normalizer"), rows)


def write_occupation_csv(path, estimates_by_target: Mapping[int, Sequence]) -> None:
    """One row per step with scalar and joint components per target."""
    targets = sorted(estimates_by_target)
    header = ["k"]
    for t in targets:
        header.append(f"occ_e{t}")
    for t in targets:
        header.extend(f"joint_e{t}_x{j}" for j in (1, 2))
    lengths = {len(v) for v in estimates_by_target.values()}
    if len(lengths) != 1:
        raise ValueError("per-target traces must have equal length")
    rows = []
    for i in range(lengths.pop()):
        row = [estimates_by_target[targets[0]][i].k]
        row.extend(estimates_by_target[t][i].scalar for t in targets)
        for t in targets:
            row.extend(estimates_by_target[t][i].joint)
        rows.append(row)
    write_csv(path, header, rows)


def write_stability_csv(path, diagnostics) -> None:
    write_csv(path, ("k", "rate"), ((d.k, d.rate) for d in diagnostics))


def write_alarms_csv(path, records, trial_ids=None) -> None:
    """records: AlarmRecord sequence; trial_ids aligns with it (0 default)."""
    if trial_ids is None:
        trial_ids = [0] * len(records)
    rows = (
        (
            tid,
            r.alarm_time,
            r.is_false_alarm,
            r.realized_occupation,
            r.occupation_estimate_at_alarm,
            r.episode_delay,
        )
        for tid, r in zip(trial_ids, records)
    )
    write_csv(
        path,
        (
            "trial_id",
            "alarm_time",
            "is_false_alarm",
            "realized_occupation",
            "occupation_estimate",
            "episode_delay",
        ),
        rows,
    )


def write_value_function_csv(path, grid, vf, stop_atol: float = 1e-6) -> None:
    gap = np.abs(vf.values - (1.0 - grid.points))
    rows = (
        (grid.points[i], vf.values[i], bool(gap[i] <= stop_atol))
        for i in range(grid.resolution)
    )
    write_csv(path, ("p", "value", "stop_flag"), rows)


SWEEP_COLUMNS = (
    "rule_variant",
    "sigma2",
    "threshold",
    "trials",
    "horizon",
    "n_alarms",
    "n_detections",
    "n_false_alarms",
    "censored_count",
    "mean_delay",
    "stderr_delay",
    "mean_episode_delay",
    "mean_occupation_estimate",
    "stderr_occupation_estimate",
    "mean_false_alarms",
    "stderr_false_alarms",
    "false_alarms_per_1e3_steps",
)


def write_sweep_csv(path, results) -> None:
    """results: one SweepResult or a sequence of them (rows concatenated)."""
    if not isinstance(results, (list, tuple)):
        results = [results]
    rows = []
    for result in results:
        for row in result.rows:
            rows.append([getattr(row, col) for col in SWEEP_COLUMNS])
    write_csv(path, SWEEP_COLUMNS, rows)


def write_zeta_csv(path, detection) -> None:
    alarm = detection.alarm_time
    rows = (
        (k, detection.zeta[k], detection.nva_mass[k], alarm is not None and k == alarm)
        for k in range(detection.zeta.size)
    )
    write_csv(path, ("k", "zeta", "nva_mass", "alarm"), rows)


def write_track_csv(path, track, gm) -> None:
    rows = []
    for k, state in enumerate(track):
        state = int(state)
        if state == gm.nva_state:
            rows.append((k, state, -1, -1))
        else:
            r, c = divmod(state - 1, gm.width)
            rows.append((k, state, r, c))
    write_csv(path, ("k", "state", "row", "col"), rows)


def write_raster(path, frames: np.ndarray) -> None:
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 3:
        raise ValueError("raster frames must be (frames, height, width)")
    n_frames, height, width = frames.shape
    with open(path, "wb") as fh:
        fh.write(_RASTER_HEADER.pack(width, height, n_frames))
        fh.write(frames.astype("<f4", copy=False).tobytes(order="C"))


def read_raster(path) -> np.ndarray:
    with open(path, "rb") as fh:
        width, height, n_frames = _RASTER_HEADER.unpack(fh.read(_RASTER_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f4")
    expected = n_frames * height * width
    if data.size != expected:
        raise ValueError(f"raster payload has {data.size} values, expected {expected}")
    return data.reshape(n_frames, height, width).astype(np.float64)


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=True)


def config_content_hash(resolved_config: Mapping) -> str:
    """Content hash of the resolved config, for provenance in summaries."""
    blob = json.dumps(resolved_config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_json_summary(path, payload: Mapping) -> None:
    Path(path).write_text(canonical_json(payload) + "\n", encoding="utf-8")
