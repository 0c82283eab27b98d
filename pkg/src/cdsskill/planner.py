"""Rest-to-rest quintic strokes sequenced by a two-state sawing FSM."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveDuration

AXES = {"x": 0, "y": 1, "z": 2}


class Stroke(enum.IntEnum):
    FORWARD = 0
    BACKWARD = 1


@dataclass(frozen=True)
class QuinticSegment:
    x0: np.ndarray
    xT: np.ndarray
    T: float
    coefficients: np.ndarray  # (3, 6), ascending powers of t

    # evaluated in normalised time so the rest conditions hold to rounding for any T
    def _u(self, t: float) -> float:
        return min(max(t / self.T, 0.0), 1.0)

    def position(self, t: float) -> np.ndarray:
        return self.x0 + (self.xT - self.x0) * self.progress(t)

    def velocity(self, t: float) -> np.ndarray:
        u = self._u(t)
        return (self.xT - self.x0) * (30 * u * u * (1 - u) ** 2 / self.T)

    def acceleration(self, t: float) -> np.ndarray:
        u = self._u(t)
        return (self.xT - self.x0) * (60 * u * (1 - u) * (1 - 2 * u) / self.T ** 2)

    def progress(self, t: float) -> float:
        """Normalised path parameter 10u^3 - 15u^4 + 6u^5 with u = t/T."""
        u = self._u(t)
        return u ** 3 * (10 - 15 * u + 6 * u * u)


def quintic(x0, xT, T: float) -> QuinticSegment:
    if not T > 0:
        raise NonPositiveDuration(f"segment duration must be positive, got {T}")
    x0 = np.asarray(x0, dtype=float).reshape(3)
    xT = np.asarray(xT, dtype=float).reshape(3)
    dx = xT - x0
    c = np.zeros((3, 6))
    c[:, 0] = x0
    c[:, 3] = 10 * dx / T ** 3
    c[:, 4] = -15 * dx / T ** 4
    c[:, 5] = 6 * dx / T ** 5
    return QuinticSegment(x0, xT, float(T), c)


@dataclass
class PlannerConfig:
    stroke_length_m: float = 0.30
    period_s: float = 2.0
    axis: str = "y"
    z_height_m: float = 0.0
    goal_offset_m: float = 0.0
    loop_sharpness: float = 0.05  # shape of the stroke-phase loop, see phase_signal

    def __post_init__(self):
        if not self.stroke_length_m > 0:
            raise ValueError("stroke_length_m must be positive")
        if not self.period_s > 0:
            raise NonPositiveDuration("period_s must be positive")
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of x, y, z, got {self.axis!r}")
        if not self.loop_sharpness > 0:
            raise ValueError("loop_sharpness must be positive")


def loop_profile(s: float, w: float) -> float:
    """Flat-topped bump over stroke progress s in [0, 1]: zero at both ends, one midway."""
    g2 = 4.0 * s * (1.0 - s)
    if g2 <= 0.0:
        return 0.0
    return float(np.tanh(np.sqrt(g2) / w) / np.tanh(1.0 / w))


@dataclass
class SawFsm:
    waypoints: np.ndarray  # (2, 3): forward strokes run from row 0 to row 1
    period: float
    state: Stroke = Stroke.FORWARD
    stroke_count: int = 0
    loop_sharpness: float = 0.05
    t_start: float = 0.0
    segment: QuinticSegment = field(init=False)

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(2, 3)
        if np.allclose(self.waypoints[0], self.waypoints[1]):
            raise ValueError("stroke waypoints must be distinct")
        self.segment = self._make_segment()

    def _make_segment(self) -> QuinticSegment:
        a, b = self.waypoints if self.state == Stroke.FORWARD else self.waypoints[::-1]
        return quintic(a, b, self.period)

    def advance(self) -> None:
        self.t_start += self.period
        self.stroke_count += 1
        self.state = Stroke(1 - self.state)
        self.segment = self._make_segment()


def make_fsm(start, cfg: PlannerConfig, direction: float = 1.0, initial: Stroke = Stroke.FORWARD) -> SawFsm:
    """FSM whose forward stroke moves from ``start`` by ``stroke_length`` along ``direction * axis``."""
    axis = np.zeros(3)
    axis[AXES[cfg.axis]] = np.sign(direction) or 1.0
    start = np.asarray(start, dtype=float).reshape(3).copy()
    start[2] = cfg.z_height_m if cfg.axis != "z" else start[2]
    goal = start + (cfg.stroke_length_m + cfg.goal_offset_m) * axis
    return SawFsm(np.vstack([start, goal]), cfg.period_s, state=initial, loop_sharpness=cfg.loop_sharpness)


def fsm_step(fsm: SawFsm, t: float):
    """Desired position and velocity at time ``t``; switches strokes at segment ends."""
    while t >= fsm.t_start + fsm.period:
        fsm.advance()
    tau = t - fsm.t_start
    return fsm.segment.position(tau), fsm.segment.velocity(tau)


def phase_signal(fsm: SawFsm, t: float) -> float:
    """Signed stroke-phase loop in [-1, 1]: positive on forward strokes.

    It mirrors the vertical hand loop people trace while sawing (hands ride
    high on one stroke, low on the return) and lets a position-indexed
    stiffness model tell a push from a pull at the same point of the stroke.
    """
    while t >= fsm.t_start + fsm.period:
        fsm.advance()
    val = loop_profile(fsm.segment.progress(t - fsm.t_start), fsm.loop_sharpness)
    return val if fsm.state == Stroke.FORWARD else -val
