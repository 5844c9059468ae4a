"""Trajectory text I/O: ``timestamp tx ty tz qx qy qz qw`` per line.

Lines starting with '#' are comments. Floats are written with 17 significant
digits so a write/read round trip is bit-exact. Entries are sorted by
timestamp on read. Quaternions off unit norm by more than 1e-3 are rejected;
smaller deviations are renormalized.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np

from ..errors import TrajectoryParseError
from .se3 import Pose

_QUAT_TOL = 1e-3


def read_tum_trajectory(path) -> list[tuple[float, Pose]]:
    entries: list[tuple[float, Pose]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise TrajectoryParseError(
                    path, lineno, f"expected 8 fields, got {len(parts)}"
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise TrajectoryParseError(path, lineno, f"non-numeric field: {exc}") from exc
            ts = vals[0]
            trans = np.array(vals[1:4])
            quat = np.array(vals[4:8])
            norm = float(np.linalg.norm(quat))
            if abs(norm - 1.0) > _QUAT_TOL:
                raise TrajectoryParseError(
                    path, lineno, f"quaternion norm {norm:.6g} deviates from 1 beyond {_QUAT_TOL}"
                )
            entries.append((ts, Pose.from_quat_trans(quat, trans, renormalize=True)))
    entries.sort(key=lambda e: e[0])
    return entries


def write_tum_trajectory(entries: Iterable[tuple[float, Pose]], path) -> None:
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for ts, pose in entries:
        fields: Sequence[float] = (ts, *pose.translation, *pose.rotation)
        lines.append(" ".join(f"{v:.17g}" for v in fields))
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
