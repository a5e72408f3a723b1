"""File formats: instance JSON, dataset CSV, experiment config, result CSV.

Instance files are JSON with either factorized or joint form::

    {"k": 2, "a": [a00, a01, a10, a11], "q": [[...], [...], [...], [...]]}
    {"p": [[...], [...], [...], [...]]}

rows in canonical group order (0,0), (0,1), (1,0), (1,1). Dataset CSVs have
header ``y,t,z`` (plus a leading ``x`` column for stratified data); an empty
z field marks a confounded record. Readers fail fast with the offending
row or field named, so nothing partially validated reaches the core types.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import DataFormatError, ValidationError
from .estimation import Dataset, StratifiedDataset
from .model import (
    ConditionalTable,
    ConfoundedDistribution,
    JointDistribution,
    joint_from_parts,
    parts_from_joint,
)
from .simulation import CurveRow, ErrorCurve, ExperimentConfig


@dataclass(frozen=True)
class LoadedInstance:
    """An instance file in both encodings, whichever was on disk."""

    a: ConfoundedDistribution
    q: ConditionalTable
    joint: JointDistribution
    form: str  # 'parts' or 'joint'


def read_instance(path) -> LoadedInstance:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise DataFormatError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise DataFormatError(f"{path}: expected a JSON object")

    try:
        if "p" in raw:
            joint = JointDistribution(np.asarray(raw["p"], dtype=float))
            parts = parts_from_joint(joint)
            return LoadedInstance(parts.a, parts.q, joint, "joint")
        if "a" in raw and "q" in raw:
            a = ConfoundedDistribution(np.asarray(raw["a"], dtype=float))
            q = ConditionalTable(np.asarray(raw["q"], dtype=float))
            if "k" in raw and int(raw["k"]) != q.k:
                raise ValidationError(
                    f"field k={raw['k']} does not match q row length {q.k}"
                )
            return LoadedInstance(a, q, joint_from_parts(a, q), "parts")
    except (ValidationError, ValueError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    raise DataFormatError(f"{path}: expected fields ('a', 'q') or 'p'")


def write_instance(path, a: ConfoundedDistribution, q: ConditionalTable) -> None:
    payload = {"k": q.k, "a": a.a.tolist(), "q": q.q.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_joint_instance(path, joint: JointDistribution) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"k": joint.k, "p": joint.p.tolist()}, fh, indent=2)
        fh.write("\n")


def _parse_bit(value: str, row: int, name: str) -> int:
    value = value.strip()
    if value not in ("0", "1"):
        raise DataFormatError(f"row {row}: {name} must be 0 or 1, got {value!r}")
    return int(value)


def _parse_z(value: str, row: int, k: int) -> int:
    value = value.strip()
    if value == "":
        return -1
    try:
        z = int(value)
    except ValueError:
        raise DataFormatError(f"row {row}: z must be an integer, got {value!r}") from None
    if not 0 <= z < k:
        raise DataFormatError(f"row {row}: z must lie in [0, {k}), got {z}")
    return z


def _open_rows(path, expected_headers) -> Tuple[List[List[str]], List[str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataFormatError(f"{path}: file not found") from None
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip().lower() for h in rows[0]]
    if header not in expected_headers:
        raise DataFormatError(
            f"{path}: header must be one of {expected_headers}, got {header}"
        )
    return rows[1:], header


def read_dataset_csv(path, k: int) -> Dataset:
    """Read ``y,t,z`` rows; rows with z revealed count on both sides."""
    body, _ = _open_rows(path, [["y", "t", "z"]])
    confounded = []
    deconfounded = []
    for i, cells in enumerate(body, start=2):
        if len(cells) != 3:
            raise DataFormatError(f"row {i}: expected 3 fields, got {len(cells)}")
        y = _parse_bit(cells[0], i, "y")
        t = _parse_bit(cells[1], i, "t")
        z = _parse_z(cells[2], i, k)
        confounded.append((y, t))
        if z >= 0:
            deconfounded.append((y, t, z))
    if not confounded:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(confounded), np.array(deconfounded), k)


def read_stratified_csv(path, k: int) -> StratifiedDataset:
    """Read ``x,y,t,z`` rows for the covariate-stratified estimator."""
    body, _ = _open_rows(path, [["x", "y", "t", "z"]])
    xs, ys, ts, zs = [], [], [], []
    for i, cells in enumerate(body, start=2):
        if len(cells) != 4:
            raise DataFormatError(f"row {i}: expected 4 fields, got {len(cells)}")
        try:
            x = int(cells[0].strip())
        except ValueError:
            raise DataFormatError(
                f"row {i}: x must be an integer, got {cells[0]!r}"
            ) from None
        if x < 0:
            raise DataFormatError(f"row {i}: x must be >= 0, got {x}")
        xs.append(x)
        ys.append(_parse_bit(cells[1], i, "y"))
        ts.append(_parse_bit(cells[2], i, "t"))
        zs.append(_parse_z(cells[3], i, k))
    if not xs:
        raise DataFormatError(f"{path}: no data rows")
    return StratifiedDataset(np.array(xs), np.array(ys), np.array(ts), np.array(zs), k)


def read_full_table_csv(path, k: int) -> np.ndarray:
    """Read a fully deconfounded ``y,t,z`` table (no empty z allowed)."""
    body, _ = _open_rows(path, [["y", "t", "z"]])
    records = []
    for i, cells in enumerate(body, start=2):
        if len(cells) != 3:
            raise DataFormatError(f"row {i}: expected 3 fields, got {len(cells)}")
        y = _parse_bit(cells[0], i, "y")
        t = _parse_bit(cells[1], i, "t")
        z = _parse_z(cells[2], i, k)
        if z < 0:
            raise DataFormatError(f"row {i}: ground-truth tables require z on every row")
        records.append((y, t, z))
    if not records:
        raise DataFormatError(f"{path}: no data rows")
    return np.array(records)


CURVE_HEADER = [
    "policy",
    "grid_kind",
    "grid_value",
    "mean_abs_error",
    "std_abs_error",
    "reps",
    "instances",
]


def write_error_curve_csv(curve: ErrorCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_HEADER)
        for row in curve.rows:  # already sorted by policy then grid value
            writer.writerow(
                [
                    row.policy,
                    row.grid_kind,
                    row.grid_value,
                    repr(row.mean_abs_error),
                    repr(row.std_abs_error),
                    row.reps,
                    row.instances,
                ]
            )


def read_error_curve_csv(path) -> ErrorCurve:
    body, _ = _open_rows(path, [CURVE_HEADER])
    rows = []
    for i, cells in enumerate(body, start=2):
        if len(cells) != 7:
            raise DataFormatError(f"row {i}: expected 7 fields, got {len(cells)}")
        rows.append(
            CurveRow(
                cells[0],
                cells[1],
                int(cells[2]),
                float(cells[3]),
                float(cells[4]),
                int(cells[5]),
                int(cells[6]),
            )
        )
    return ErrorCurve(tuple(rows))


_CONFIG_FIELDS = {
    "k",
    "instances",
    "policies",
    "include_baseline",
    "m_grid",
    "n_grid",
    "replications",
    "seed",
    "fallback",
    "shared_randomness",
    "dataset",
    "instance_files",
}


def read_experiment_config(path) -> Tuple[ExperimentConfig, dict]:
    """Load a config JSON; returns the config plus extras (dataset path, files)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise DataFormatError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise DataFormatError(f"{path}: expected a JSON object")
    unknown = set(raw) - _CONFIG_FIELDS
    if unknown:
        raise DataFormatError(f"{path}: unknown config fields {sorted(unknown)}")
    extras = {
        "dataset": raw.pop("dataset", None),
        "instance_files": raw.pop("instance_files", None),
        "has_seed": "seed" in raw,
    }
    if "policies" in raw:
        raw["policies"] = tuple(raw["policies"])
    for grid in ("m_grid", "n_grid"):
        if raw.get(grid) is not None:
            raw[grid] = tuple(raw[grid])
    try:
        config = ExperimentConfig(**raw)
    except (ValidationError, TypeError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    return config, extras
