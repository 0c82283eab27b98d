"""Arm keypoint frames and trajectories, plus their CSV form."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ARM_COLUMNS = ("t", "sx", "sy", "sz", "ex", "ey", "ez", "wx", "wy", "wz")
JOINTS = ("shoulder", "elbow", "wrist")


@dataclass(frozen=True)
class ArmFrame:
    """Shoulder/elbow/wrist positions (metres, camera frame) at time ``t``."""

    t: float
    shoulder: np.ndarray
    elbow: np.ndarray
    wrist: np.ndarray

    def __post_init__(self):
        for name in JOINTS:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))


@dataclass
class ArmTrajectory:
    """Time series of arm frames stored as arrays.

    ``points`` has shape (N, 3, 3): frame, joint (shoulder, elbow, wrist), xyz.
    Missing samples are NaN.
    """

    t: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3, 3)
        if len(self.t) != len(self.points):
            raise ValueError("t and points lengths differ")

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i) -> ArmFrame:
        p = self.points[i]
        return ArmFrame(float(self.t[i]), p[0], p[1], p[2])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def shoulder(self):
        return self.points[:, 0]

    @property
    def elbow(self):
        return self.points[:, 1]

    @property
    def wrist(self):
        return self.points[:, 2]

    @classmethod
    def from_frames(cls, frames) -> "ArmTrajectory":
        frames = list(frames)
        t = [f.t for f in frames]
        pts = [[f.shoulder, f.elbow, f.wrist] for f in frames]
        return cls(np.array(t), np.array(pts, dtype=float).reshape(-1, 3, 3))

    def copy(self) -> "ArmTrajectory":
        return ArmTrajectory(self.t.copy(), self.points.copy())


def fmt(x: float) -> str:
    """Shortest round-trip float repr; used everywhere files must be byte-stable."""
    return repr(float(x))


def write_arm_csv(path, traj: ArmTrajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ARM_COLUMNS)
        for t, p in zip(traj.t, traj.points):
            w.writerow([fmt(t)] + [fmt(v) for v in p.reshape(-1)])


def read_arm_csv(path) -> ArmTrajectory:
    rows = read_numeric_csv(path, ARM_COLUMNS)
    return ArmTrajectory(rows[:, 0], rows[:, 1:].reshape(-1, 3, 3))


def read_numeric_csv(path, columns) -> np.ndarray:
    """Read a headed CSV, checking the header, into a float array."""
    path = Path(path)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or tuple(h.strip() for h in header) != tuple(columns):
            raise ValueError(f"{path}: expected header {','.join(columns)}, got {header}")
        data = [[float(v) for v in row] for row in r if row]
    return np.array(data, dtype=float).reshape(-1, len(columns))
