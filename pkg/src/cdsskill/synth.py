"""Synthetic two-person sawing skeletons (test substrate, not recorded data).

Each person is reported in their own body frame: origin at the resting
right shoulder, y toward the partner, z up. The hands hold a rigid saw, so
one person's push is the other's pull (anti-phase y in body frames) and both
wrists share a vertical loop: the blade rides up while A pushes and dips
while B pushes. Leaning the trunk into the push
shortens the pushing arm relative to the pulling one, which is what gives
the two subjects alternating stiffness roles.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .frames import fmt
from .ingest import BODY_25


@dataclass
class SyntheticDemoSpec:
    amplitude: float = 0.30  # m, wrist excursion along y
    period: float = 4.0  # s per push/pull cycle
    n_cycles: int = 5
    noise_std: float = 0.0  # m
    phase_offset: float = float(np.pi)  # rad, B relative to A
    rate: float = 20.0  # Hz
    reach: float = 0.35  # mean wrist distance ahead of the shoulder
    wrist_height: float = -0.25  # below the shoulder
    wrist_lateral: float = -0.05
    lift: float = 0.02  # vertical blade loop amplitude
    lean_forward: float = 0.05
    lean_down: float = 0.06
    upper_arm: float = 0.34
    forearm: float = 0.38
    swivel: float = 1.2  # rad, elbow plane rotation away from straight down
    sharpness: float = 0.3  # width of the push/pull transitions

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.n_cycles < 1 or not self.rate > 0:
            raise ValueError("n_cycles must be >= 1 and rate > 0")


# body-frame offsets from the right shoulder (x lateral, y forward, z up)
_UPPER = {
    "Nose": (0.18, 0.08, 0.25), "Neck": (0.18, 0.0, 0.02), "LShoulder": (0.36, 0.0, 0.0),
    "REye": (0.15, 0.1, 0.3), "LEye": (0.21, 0.1, 0.3), "REar": (0.1, 0.02, 0.28),
    "LEar": (0.26, 0.02, 0.28), "LElbow": (0.42, 0.05, -0.28), "LWrist": (0.38, 0.2, -0.42),
}
_LOWER = {
    "MidHip": (0.18, 0.0, -0.55), "RHip": (0.08, 0.0, -0.55), "LHip": (0.28, 0.0, -0.55),
    "RKnee": (0.06, 0.05, -0.98), "LKnee": (0.3, 0.05, -0.98), "RAnkle": (0.05, 0.0, -1.4),
    "LAnkle": (0.31, 0.0, -1.4), "RBigToe": (0.05, 0.18, -1.45), "RSmallToe": (0.0, 0.16, -1.45),
    "RHeel": (0.05, -0.05, -1.45), "LBigToe": (0.31, 0.18, -1.45), "LSmallToe": (0.36, 0.16, -1.45),
    "LHeel": (0.31, -0.05, -1.45),
}


def _soft_sign(c, w):
    return np.tanh(c / w) / np.tanh(1.0 / w)


def arm_keypoints(spec: SyntheticDemoSpec, theta, lift_phase):
    """Right-arm shoulder/elbow/wrist in the subject's own body frame.

    ``theta`` drives the stroke (wrist ahead of the mean at sin > 0, pushing
    while cos > 0); ``lift_phase`` drives the shared blade height.
    Returns an (N, 3, 3) array.
    """
    theta = np.asarray(theta, dtype=float)
    push = _soft_sign(np.cos(theta), spec.sharpness)
    zero = np.zeros_like(theta)
    wrist = np.stack([
        np.full_like(theta, spec.wrist_lateral),
        spec.reach + 0.5 * spec.amplitude * np.sin(theta),
        spec.wrist_height + spec.lift * _soft_sign(np.cos(lift_phase), spec.sharpness),
    ], axis=1)
    shoulder = np.stack([zero, spec.lean_forward * push, -spec.lean_down * push], axis=1)
    l = wrist - shoulder
    d1 = np.linalg.norm(l, axis=1)
    lhat = l / d1[:, None]
    a = (spec.upper_arm ** 2 - spec.forearm ** 2 + d1 ** 2) / (2 * d1)
    h = np.sqrt(np.clip(spec.upper_arm ** 2 - a ** 2, 1e-8, None))
    down = np.array([np.sin(spec.swivel), 0.0, -np.cos(spec.swivel)])
    q = down - (lhat @ down)[:, None] * lhat
    q /= np.linalg.norm(q, axis=1)[:, None]
    elbow = shoulder + a[:, None] * lhat + h[:, None] * q
    return np.stack([shoulder, elbow, wrist], axis=1)


def generate(spec: SyntheticDemoSpec, seed: int = 0) -> list[dict]:
    """Skeleton stream in the ingest JSON layout with persons ``A`` and ``B``."""
    rng = np.random.default_rng(seed)
    n = int(round(spec.n_cycles * spec.period * spec.rate)) + 1
    t = np.arange(n) / spec.rate
    theta_a = 2 * np.pi * t / spec.period
    people = {}
    for pid, theta in (("A", theta_a), ("B", theta_a + spec.phase_offset)):
        arm = arm_keypoints(spec, theta, theta_a)
        shoulder = arm[:, 0]
        kps = {"RShoulder": arm[:, 0], "RElbow": arm[:, 1], "RWrist": arm[:, 2]}
        for name, off in _UPPER.items():
            kps[name] = shoulder + np.asarray(off)
        for name, off in _LOWER.items():
            kps[name] = np.tile(np.asarray(off), (n, 1))
        people[pid] = kps
    frames = []
    for i in range(n):
        persons = []
        for pid in ("A", "B"):
            kp = {}
            for name in BODY_25:
                xyz = people[pid][name][i]
                if spec.noise_std > 0:
                    xyz = xyz + rng.normal(0.0, spec.noise_std, 3)
                kp[name] = {"x": float(xyz[0]), "y": float(xyz[1]), "z": float(xyz[2]), "confidence": 1.0}
            persons.append({"id": pid, "keypoints": kp})
        frames.append({"t": float(t[i]), "persons": persons})
    return frames


def write_skeleton(path, frames) -> None:
    """Compact, deterministic JSON (floats in shortest round-trip form)."""
    def enc(obj):
        if isinstance(obj, float):
            return fmt(obj)
        if isinstance(obj, dict):
            return "{" + ",".join(f"{json.dumps(k)}:{enc(v)}" for k, v in obj.items()) + "}"
        if isinstance(obj, list):
            return "[" + ",".join(enc(v) for v in obj) + "]"
        return json.dumps(obj)

    with open(path, "w") as fh:
        fh.write("[\n" + ",\n".join(enc(f) for f in frames) + "\n]\n")
