"""Skeleton ingestion: lift keypoints to 3D, clean gaps, smooth and resample.

Input is pose-network output, either already in 3D (``{x, y, z}`` per
keypoint) or as pixels (``{u, v, confidence}``) plus per-frame depth maps.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AllNeighborsInvalid,
    EmptyTrajectory,
    NonFiniteDepth,
    ParseError,
    PersonNotFound,
    SideKeypointsAbsent,
    TooFewFrames,
)
from .frames import ArmTrajectory

logger = logging.getLogger(__name__)

# 25-point body model
BODY_25 = (
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow", "LWrist",
    "MidHip", "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle", "REye", "LEye",
    "REar", "LEar", "LBigToe", "LSmallToe", "LHeel", "RBigToe", "RSmallToe", "RHeel",
)
ARM_KEYPOINTS = {
    "right": ("RShoulder", "RElbow", "RWrist"),
    "left": ("LShoulder", "LElbow", "LWrist"),
}


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480
    rate: float = 20.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")


@dataclass(frozen=True)
class Keypoint2D:
    u: float
    v: float
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


def project(point, intr: CameraIntrinsics):
    x, y, z = np.asarray(point, dtype=float)
    return intr.cx + intr.fx * x / z, intr.cy + intr.fy * y / z


def deproject(kp: Keypoint2D, depth: float, intr: CameraIntrinsics) -> np.ndarray:
    if not np.isfinite(depth) or depth <= 0:
        raise NonFiniteDepth(f"invalid depth {depth}")
    return np.array([(kp.u - intr.cx) * depth / intr.fx, (kp.v - intr.cy) * depth / intr.fy, depth])


def lift_keypoint(kp: Keypoint2D, depthmap, intr: CameraIntrinsics, window: int = 5) -> np.ndarray:
    """Deproject a pixel using the mean valid depth in a square window around it."""
    dm = np.asarray(depthmap, dtype=float)
    h, w = dm.shape
    if not (0 <= kp.u <= w - 1 and 0 <= kp.v <= h - 1):
        raise ValueError(f"pixel ({kp.u}, {kp.v}) outside {w}x{h} image")
    col, row = int(round(kp.u)), int(round(kp.v))
    half = max(int(window), 1) // 2
    patch = dm[max(row - half, 0):row + half + 1, max(col - half, 0):col + half + 1]
    valid = patch[np.isfinite(patch) & (patch > 0)]
    if valid.size == 0:
        raise AllNeighborsInvalid(f"no valid depth around pixel ({col}, {row})")
    return deproject(kp, float(valid.mean()), intr)


def read_depth(path, intr: CameraIntrinsics) -> np.ndarray:
    """Row-major little-endian float32 depth map in metres; NaN marks invalid."""
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != intr.width * intr.height:
        raise ParseError(f"{path}: expected {intr.width * intr.height} floats, got {raw.size}")
    return raw.reshape(intr.height, intr.width).astype(float)


def write_depth(path, depthmap) -> None:
    np.asarray(depthmap, dtype="<f4").tofile(path)


# -- skeleton stream ----------------------------------------------------------

def load_skeleton(path) -> list[dict]:
    """Load and validate a skeleton JSON stream."""
    path = Path(path)
    try:
        frames = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(frames, list):
        raise ParseError(f"{path}: top level must be an array of frames")
    last_t = -np.inf
    for i, fr in enumerate(frames):
        if not isinstance(fr, dict) or "t" not in fr or "persons" not in fr:
            raise ParseError(f"{path}: frame {i}: needs keys 't' and 'persons'")
        t = fr["t"]
        if not isinstance(t, (int, float)) or not np.isfinite(t) or t <= last_t:
            raise ParseError(f"{path}: frame {i}: timestamp {t!r} not finite and increasing")
        last_t = t
        for person in fr["persons"]:
            if "id" not in person or not isinstance(person.get("keypoints"), dict):
                raise ParseError(f"{path}: frame {i}: person entries need 'id' and 'keypoints'")
            for name, kp in person["keypoints"].items():
                if name not in BODY_25:
                    raise ParseError(f"{path}: frame {i}: unknown keypoint {name!r}")
                if not (isinstance(kp, dict) and ({"x", "y", "z"} <= kp.keys() or {"u", "v"} <= kp.keys())):
                    raise ParseError(f"{path}: frame {i}: keypoint {name!r} needs x,y,z or u,v")
    return frames


@dataclass
class ArmTrack:
    """Raw arm samples before cleaning; NaN marks an unusable keypoint."""

    t: np.ndarray
    points: np.ndarray  # (N, 3, 3)
    confidence: np.ndarray  # (N, 3)
    frame_index: np.ndarray  # index into the source stream


def extract_arm(frames, person_id, side: str = "right", intr: CameraIntrinsics | None = None,
                depth_loader=None, window: int = 5) -> ArmTrack:
    """Pull one person's shoulder/elbow/wrist out of a multi-person stream.

    ``depth_loader(frame_index, frame)`` must return a depth map when pixel
    keypoints are present.
    """
    if side not in ARM_KEYPOINTS:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    names = ARM_KEYPOINTS[side]
    t, pts, conf, idx = [], [], [], []
    seen_side = False
    for i, fr in enumerate(frames):
        person = next((p for p in fr["persons"] if str(p["id"]) == str(person_id)), None)
        if person is None:
            continue
        kps = person["keypoints"]
        row = np.full((3, 3), np.nan)
        crow = np.zeros(3)
        depth = None
        for j, name in enumerate(names):
            kp = kps.get(name)
            if kp is None:
                continue
            seen_side = True
            crow[j] = float(kp.get("confidence", 1.0))
            if "x" in kp:
                row[j] = [kp["x"], kp["y"], kp["z"]]
                continue
            if intr is None or depth_loader is None:
                raise ParseError(f"frame {i}: pixel keypoints need camera intrinsics and depth maps")
            if depth is None:
                depth = depth_loader(i, fr)
            try:
                row[j] = lift_keypoint(Keypoint2D(kp["u"], kp["v"], crow[j]), depth, intr, window)
            except (AllNeighborsInvalid, NonFiniteDepth, ValueError) as exc:
                logger.debug("frame %d %s: %s", i, name, exc)
        t.append(float(fr["t"]))
        pts.append(row)
        conf.append(crow)
        idx.append(i)
    if len(t) < 2:
        raise PersonNotFound(f"person {person_id!r} found in {len(t)} frame(s); need at least 2")
    if not seen_side:
        raise SideKeypointsAbsent(f"person {person_id!r} has no {side} arm keypoints")
    return ArmTrack(np.array(t), np.array(pts), np.array(conf), np.array(idx))


# -- cleaning -----------------------------------------------------------------

@dataclass
class GapReport:
    interpolated: list = field(default_factory=list)  # (frame index, joint name)
    dropped: list = field(default_factory=list)  # frame indices

    def to_dict(self) -> dict:
        return {
            "interpolated": [[int(i), j] for i, j in self.interpolated],
            "dropped": [int(i) for i in self.dropped],
            "n_interpolated": len(self.interpolated),
            "n_dropped": len(self.dropped),
        }


def _runs(mask):
    """(start, stop) pairs of consecutive True entries."""
    padded = np.concatenate([[False], mask, [False]]).astype(int)
    d = np.diff(padded)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def fill_gaps(track: ArmTrack | ArmTrajectory, max_gap: int = 5, conf_min: float = 0.3):
    """Interpolate short keypoint dropouts and drop frames around long ones.

    Returns ``(ArmTrajectory, GapReport)``; report indices refer to the
    input samples.
    """
    t = np.asarray(track.t, dtype=float)
    pts = np.array(track.points, dtype=float)
    conf = getattr(track, "confidence", None)
    if conf is None:
        conf = np.ones(pts.shape[:2])
    missing = (conf < conf_min) | ~np.all(np.isfinite(pts), axis=2)
    n = len(t)
    drop = np.zeros(n, dtype=bool)
    report = GapReport()
    joints = ("shoulder", "elbow", "wrist")
    for j in range(3):
        for a, b in _runs(missing[:, j]):
            if a == 0 or b == n or b - a > max_gap:
                drop[a:b] = True
                continue
            for c in range(3):
                pts[a:b, j, c] = np.interp(t[a:b], [t[a - 1], t[b]], [pts[a - 1, j, c], pts[b, j, c]])
            report.interpolated.extend((i, joints[j]) for i in range(a, b))
    report.dropped = list(np.flatnonzero(drop))
    report.interpolated = [(i, j) for i, j in report.interpolated if not drop[i]]
    keep = ~drop
    if not keep.any():
        raise EmptyTrajectory("no frames survive gap filling")
    return ArmTrajectory(t[keep], pts[keep]), report


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centred moving average along axis 0, truncated at the edges."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be an odd count >= 1")
    if window == 1:
        return np.array(x, dtype=float)
    half = window // 2
    flat = np.asarray(x, dtype=float).reshape(len(x), -1)
    csum = np.vstack([np.zeros((1, flat.shape[1])), np.cumsum(flat, axis=0)])
    idx = np.arange(len(flat))
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, len(flat))
    out = (csum[hi] - csum[lo]) / (hi - lo)[:, None]
    return out.reshape(np.shape(x))


def resample_smooth(traj: ArmTrajectory, n_samples: int, window: int = 5) -> ArmTrajectory:
    """Smooth each coordinate then resample onto ``n_samples`` uniform times."""
    if len(traj) < 2:
        raise TooFewFrames(f"need at least 2 frames, got {len(traj)}")
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    smooth = moving_average(traj.points, window).reshape(len(traj), 9)
    tq = np.linspace(traj.t[0], traj.t[-1], n_samples)
    out = np.column_stack([np.interp(tq, traj.t, smooth[:, c]) for c in range(9)])
    return ArmTrajectory(tq, out.reshape(-1, 3, 3))


def split_demos(traj: ArmTrajectory, period: float | None) -> list[ArmTrajectory]:
    """Cut a continuous recording into consecutive windows of ``period`` seconds."""
    if not period:
        return [traj]
    t0 = traj.t[0]
    k = np.floor((traj.t - t0) / period + 1e-9).astype(int)
    demos = [ArmTrajectory(traj.t[k == i], traj.points[k == i]) for i in np.unique(k)]
    return [d for d in demos if len(d) >= 2]


@dataclass
class DemoDataset:
    subjects: dict  # subject id -> list[ArmTrajectory]
    samples_per_demo: int

    def concatenated(self, subject) -> ArmTrajectory:
        demos = self.subjects[subject]
        return ArmTrajectory(np.concatenate([d.t for d in demos]), np.concatenate([d.points for d in demos]))


def ingest_subject(frames, person_id, side="right", intr=None, depth_loader=None, window_px=5,
                   max_gap=5, conf_min=0.3, smooth_window=5, samples_per_demo=200, demo_period=None):
    """Full cleaning chain for one subject; returns ``(demos, GapReport)``."""
    track = extract_arm(frames, person_id, side, intr, depth_loader, window_px)
    clean, report = fill_gaps(track, max_gap=max_gap, conf_min=conf_min)
    report.interpolated = [(int(track.frame_index[i]), j) for i, j in report.interpolated]
    report.dropped = [int(track.frame_index[i]) for i in report.dropped]
    demos = [resample_smooth(d, samples_per_demo, smooth_window) for d in split_demos(clean, demo_period)]
    if not demos:
        raise EmptyTrajectory(f"person {person_id!r}: no demonstration left after splitting")
    return demos, report
