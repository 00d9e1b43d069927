"""File formats: long-format sample CSVs, fitted-model JSON, depth CSVs,
and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dgp import SparseCurve, SparseSample
from .exceptions import SchemaError
from .numerics import Grid
from .smoothing import FittedModel

__all__ = [
    "read_sample_csv",
    "write_sample_csv",
    "write_model_json",
    "read_model_json",
    "write_depth_csv",
    "write_manifest",
]

SAMPLE_HEADER = ["subject_id", "time", "value"]
DEPTH_HEADER = ["subject_id", "method", "lambda", "K", "depth"]


def read_sample_csv(path) -> SparseSample:
    """Read a long-format sample CSV with header subject_id,time,value.

    Rows are grouped by subject in file order; times are sorted per subject.
    Malformed rows raise SchemaError naming the 1-based line number.
    """
    by_subject: dict[str, list[tuple[float, float]]] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != SAMPLE_HEADER:
            raise SchemaError(f"{path}: line 1: expected header {','.join(SAMPLE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}: line {lineno}: expected 3 columns, got {len(row)}")
            sid = row[0].strip()
            try:
                t = float(row[1])
                v = float(row[2])
            except ValueError as exc:
                raise SchemaError(f"{path}: line {lineno}: non-numeric time or value") from exc
            if not 0.0 <= t <= 1.0:
                raise SchemaError(f"{path}: line {lineno}: time {t} outside [0, 1]")
            if sid not in by_subject:
                by_subject[sid] = []
                order.append(sid)
            by_subject[sid].append((t, v))
    if not order:
        raise SchemaError(f"{path}: no observation rows")
    curves = []
    for sid in order:
        obs = sorted(by_subject[sid])
        times = np.array([t for t, _ in obs])
        values = np.array([v for _, v in obs])
        curves.append(SparseCurve(times=times, values=values, subject_id=sid))
    return SparseSample(curves=tuple(curves))


def write_sample_csv(path, sample: SparseSample) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SAMPLE_HEADER)
        for curve in sample:
            for t, v in zip(curve.times, curve.values):
                writer.writerow([curve.subject_id, repr(float(t)), repr(float(v))])


def write_model_json(path, model: FittedModel) -> None:
    payload = {
        "grid": model.grid.points.tolist(),
        "mu": model.mu.tolist(),
        "gamma": model.gamma.ravel().tolist(),
        "sigma2": model.sigma2,
        "eigenvalues": model.eigenvalues.tolist(),
        "eigenfunctions": model.eigenfunctions.tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def read_model_json(path) -> FittedModel:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    try:
        grid = Grid.from_points(np.array(payload["grid"], dtype=np.float64))
        m = len(grid)
        gamma = np.array(payload["gamma"], dtype=np.float64).reshape(m, m)
        eigenvalues = np.array(payload["eigenvalues"], dtype=np.float64)
        fve = np.cumsum(eigenvalues) / np.sum(eigenvalues)
        return FittedModel(
            grid=grid,
            mu=np.array(payload["mu"], dtype=np.float64),
            gamma=gamma,
            sigma2=float(payload["sigma2"]),
            eigenvalues=eigenvalues,
            eigenfunctions=np.array(payload["eigenfunctions"], dtype=np.float64),
            fve=fve,
            n_subjects=int(payload.get("n_subjects", 0)),
        )
    except KeyError as exc:
        raise SchemaError(f"{path}: missing model field {exc}") from exc


def write_depth_csv(path, rows) -> None:
    """Write depth rows as subject_id,method,lambda,K,depth."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DEPTH_HEADER)
        for row in rows:
            writer.writerow(
                [row.subject_id, row.method, repr(float(row.lam)), row.k, repr(float(row.depth))]
            )


def config_hash(config_dict: dict) -> str:
    canon = json.dumps(config_dict, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_manifest(path, config_dict: dict, timings: dict) -> None:
    """Run manifest: configuration, its hash, library versions, timings."""
    payload = {
        "config": config_dict,
        "config_hash": config_hash(config_dict),
        "versions": {
            "crhd": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "timings_s": timings,
    }
    Path(path).write_text(json.dumps(payload, indent=2, default=str))
