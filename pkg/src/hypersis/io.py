"""File formats: parameter JSON, trajectory CSV and ensemble CSV.

Agents are numbered from 1 in files; arrays are 0-based in memory. Floats are written
with ``repr`` so a written value reads back bit-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .dynamics import GeneralParams, SisParams, Trajectory
from .hypergraph import DirectedHypergraph

__all__ = [
    "params_document",
    "params_from_document",
    "load_params",
    "save_params",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_ensemble_csv",
]


def params_document(delta, h: float, mu2, mu3=None, muK: Mapping[int, object] | None = None) -> dict:
    doc = {"delta": [float(v) for v in delta], "h": float(h), "mu2": [float(v) for v in mu2]}
    if mu3 is not None:
        doc["mu3"] = [float(v) for v in mu3]
    if muK:
        doc["muK"] = {str(int(k)): [float(v) for v in vals] for k, vals in sorted(muK.items())}
    return doc


def params_from_document(doc: Mapping, hypergraph: DirectedHypergraph) -> GeneralParams:
    """Build rate tensors ``beta = mu * A`` from a parameter document and a hypergraph.

    Returns :class:`SisParams` when no order above three is involved.
    """
    try:
        delta = doc["delta"]
        h = float(doc["h"])
        mu2 = doc["mu2"]
    except KeyError as exc:
        raise ValueError(f"parameter document is missing {exc}") from None
    mu_higher = {int(k): v for k, v in (doc.get("muK") or {}).items()}
    if "mu3" in doc:
        mu_higher[3] = doc["mu3"]
    if max([hypergraph.max_order, *mu_higher]) <= 3:
        return SisParams.from_rates(hypergraph, delta, mu2, mu_higher.get(3), h)
    return GeneralParams.from_rates(hypergraph, delta, mu2, mu_higher, h)


def load_params(path, hypergraph: DirectedHypergraph) -> GeneralParams:
    return params_from_document(json.loads(Path(path).read_text()), hypergraph)


def save_params(path, doc: Mapping) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trajectory_csv(path, traj: Trajectory) -> None:
    n = traj.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if traj.is_bivirus:
            w.writerow(["t", *(f"v1_x{i + 1}" for i in range(n)), *(f"v2_x{i + 1}" for i in range(n))])
            for t, s in enumerate(traj.states):
                w.writerow([t, *map(_fmt, s[0]), *map(_fmt, s[1])])
        else:
            w.writerow(["t", *(f"x{i + 1}" for i in range(n))])
            for t, s in enumerate(traj.states):
                w.writerow([t, *map(_fmt, s)])


def read_trajectory_csv(path, h: float = 1.0) -> Trajectory:
    """Read a trajectory written by :func:`write_trajectory_csv`.

    The file does not store ``h``; pass it when the caller needs it.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trajectory file")
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t":
        raise ValueError(f"{path}: first column must be 't'")
    data = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
    if header[1:2] and header[1].startswith("v1_"):
        n = (len(header) - 1) // 2
        data = data.reshape(len(body), 2, n)
    return Trajectory(h, data)


def write_ensemble_csv(path, series: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "meanfield_avg", "mc_avg", "abs_error"])
        for t, row in enumerate(series):
            w.writerow([t, *map(_fmt, row)])
