"""Two impedance-controlled point masses holding a rigid saw over a block of wood.

Frame: y is the sawing line pointing from endpoint A to endpoint B, z up.
Endpoint A pushes toward +y, endpoint B toward -y.

The environment model is deliberately small:

* an axial spring between the endpoints stands in for the saw blade;
* the blade rests on the kerf floor through a one-sided spring (with damping
  while in contact);
* sliding friction acts along y and is proportional to the effective normal
  load, which is the contact force plus a binding term from pushing forces
  (a pushed blade buckles and wedges in the kerf, a pulled one stays taut);
* the kerf deepens at a rate proportional to that same load and the blade
  speed.

Setting ``cut_rate`` and ``binding`` to zero leaves a fixed wood surface.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyLog, InstabilityDetected, NonFiniteState
from .frames import fmt
from .planner import PlannerConfig, fsm_step, make_fsm, phase_signal
from .skill import SkillModel, reproduce_cds

logger = logging.getLogger(__name__)

E_Y = np.array([0.0, 1.0, 0.0])


# -- stiffness sources ----------------------------------------------------------
# A source maps (desired position, stroke phase in [-1, 1]) to a 3x3 stiffness.

@dataclass
class ConstantStiffness:
    k: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        self.k = np.diag(k) if k.shape == (3,) else k.reshape(3, 3)

    def __call__(self, x_des, phase: float = 0.0) -> np.ndarray:
        return self.k


@dataclass
class SkillStiffness:
    """y-stiffness from a learned skill, x and z held constant.

    The skill input is ``(y, z)``: y comes from the desired position mapped
    affinely onto the skill's training range, z from the stroke-phase loop
    scaled to the skill's vertical range. Both are clipped to the training box.
    """

    skill: SkillModel
    robot_center_y: float
    gain_y: float
    k_x: float = 0.0
    k_z: float = 800.0

    def __post_init__(self):
        lo, hi = np.asarray(self.skill.input_min, float), np.asarray(self.skill.input_max, float)
        self._lo, self._hi = lo, hi
        self._center = 0.5 * (lo + hi)
        self._half = 0.5 * (hi - lo)

    def pose(self, x_des, phase: float = 0.0) -> np.ndarray:
        p = np.array([
            self._center[0] + self.gain_y * (float(x_des[1]) - self.robot_center_y),
            self._center[1] + self._half[1] * phase,
        ])
        return np.clip(p, self._lo, self._hi)

    def __call__(self, x_des, phase: float = 0.0) -> np.ndarray:
        k = reproduce_cds(self.skill, self.pose(x_des, phase))
        return np.diag([self.k_x, float(E_Y @ k @ E_Y), self.k_z])


def skill_source(skill: SkillModel, planner: PlannerConfig, robot_center_y: float, toward_partner: float,
                 k_x: float = 0.0, k_z: float = 800.0) -> SkillStiffness:
    """Map a robot's stroke onto the skill's training range.

    ``toward_partner`` is +1 when the robot pushes along +y. Skills are
    expressed with +y toward the partner, so the robot at the +y end is
    mirrored.
    """
    span = float(skill.input_max[0] - skill.input_min[0])
    gain = span / planner.stroke_length_m * (1.0 if toward_partner > 0 else -1.0)
    return SkillStiffness(skill, float(robot_center_y), gain, k_x, k_z)


# -- configuration --------------------------------------------------------------

@dataclass
class EndpointConfig:
    mass: float = 5.0
    damping_ratio: float = 1.0
    stiffness: object = field(default_factory=lambda: ConstantStiffness([0.0, 800.0, 800.0]))
    feedforward_force: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -10.0]))
    stiffness_limits: tuple = (0.0, 800.0)

    def __post_init__(self):
        self.feedforward_force = np.asarray(self.feedforward_force, dtype=float).reshape(3)
        lo, hi = self.stiffness_limits
        if not (self.mass > 0 and self.damping_ratio > 0 and hi >= lo >= 0):
            raise ValueError("need mass > 0, damping_ratio > 0 and k_max >= k_min >= 0")


@dataclass
class SawCouplingConfig:
    k_couple: float = 1e5
    c_couple: float = 200.0
    rest_length: float = 0.8
    mu: float = 0.8
    k_wood: float = 1e5
    c_wood: float = 500.0
    wood_top_z: float = 0.0
    v_eps: float = 1e-3
    cut_rate: float = 2e-3  # m of kerf per (N * m of blade travel) above the threshold
    cut_threshold: float = 10.0  # N of blade load below which the teeth do not bite
    binding: float = 0.5  # normal load per N of pushing force

    def __post_init__(self):
        if not (self.k_couple > 0 and self.k_wood > 0):
            raise ValueError("k_couple and k_wood must be positive")
        if min(self.mu, self.c_couple, self.c_wood, self.cut_rate, self.cut_threshold, self.binding) < 0 or not self.v_eps > 0:
            raise ValueError("mu, damping, cut_rate and binding must be >= 0, v_eps > 0")


@dataclass
class SimConfig:
    dt: float = 1e-3
    duration: float = 20.0
    error_bound: float = 0.15
    k_floor: float = 10.0
    phase_offset_s: float = 0.0  # B's planner runs ahead by this much

    def __post_init__(self):
        if not (self.dt > 0 and self.duration > 0 and self.error_bound > 0 and self.k_floor >= 0):
            raise ValueError("dt, duration and error_bound must be positive, k_floor >= 0")


@dataclass
class SimState:
    x: np.ndarray  # (2, 3)
    v: np.ndarray  # (2, 3)
    t: float = 0.0
    depth: float = 0.0


# -- force laws -------------------------------------------------------------------

def _is_diagonal(k) -> bool:
    return not np.any(k - np.diag(np.diagonal(k)))


def damping_matrix(k, mass: float, zeta: float = 1.0, k_floor: float = 10.0) -> np.ndarray:
    """Critical-style damping along each stiffness eigen-direction."""
    k = np.asarray(k, dtype=float)
    if _is_diagonal(k):
        return np.diag(2.0 * zeta * np.sqrt(mass * np.maximum(np.diagonal(k), k_floor)))
    w, v = np.linalg.eigh(0.5 * (k + k.T))
    c = 2.0 * zeta * np.sqrt(mass * np.maximum(w, k_floor))
    return (v * c) @ v.T


def clamp_stiffness(k, limits) -> np.ndarray:
    """Clip the stiffness eigenvalues into ``[k_min, k_max]``."""
    lo, hi = limits
    k = np.asarray(k, dtype=float)
    if _is_diagonal(k):
        return np.diag(np.clip(np.diagonal(k), lo, hi))
    w, v = np.linalg.eigh(0.5 * (k + k.T))
    if w.min() >= lo and w.max() <= hi:
        return np.asarray(k, dtype=float)
    return (v * np.clip(w, lo, hi)) @ v.T


def impedance_force(k, d, x_des, x, v_des, v, f_ff) -> np.ndarray:
    return k @ (np.asarray(x_des) - x) + d @ (np.asarray(v_des) - v) + f_ff


@dataclass
class EnvForces:
    couple: np.ndarray  # (2, 3)
    friction: np.ndarray  # (2, 3)
    contact: np.ndarray  # (2, 3)
    normal: float  # contact normal load, N
    load: float  # normal plus binding, N


def environment_forces(state: SimState, cfg: SawCouplingConfig, pushing: float = 0.0) -> EnvForces:
    """Coupling, friction and contact forces on both endpoints.

    ``pushing`` is the total pushing force the controllers apply (N, >= 0);
    it only loads the blade while the blade sits in the kerf.
    """
    xa, xb = state.x
    va, vb = state.v
    sep = xb - xa
    dist = np.linalg.norm(sep)
    u = sep / dist if dist > 0 else E_Y
    rate = u @ (vb - va)
    f = (cfg.k_couple * (dist - cfg.rest_length) + cfg.c_couple * rate) * u
    couple = np.vstack([f, -f])

    z_saw = 0.5 * (xa[2] + xb[2])
    vz_saw = 0.5 * (va[2] + vb[2])
    pen = cfg.wood_top_z - state.depth - z_saw
    normal = 0.0
    load = 0.0
    if pen > 0:
        normal = max(cfg.k_wood * pen - cfg.c_wood * vz_saw, 0.0)
        load = normal + cfg.binding * pushing
    contact = np.zeros((2, 3))
    contact[:, 2] = 0.5 * normal
    vy_saw = 0.5 * (va[1] + vb[1])
    friction = np.zeros((2, 3))
    friction[:, 1] = -0.5 * cfg.mu * load * np.tanh(vy_saw / cfg.v_eps)
    return EnvForces(couple, friction, contact, normal, load)


def step_dynamics(state: SimState, forces, mass, dt: float, depth_rate: float = 0.0) -> SimState:
    """Semi-implicit Euler: velocity first, then position with the new velocity."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    m = np.asarray(mass, dtype=float).reshape(-1, 1)
    v = state.v + forces / m * dt
    x = state.x + v * dt
    new = SimState(x, v, state.t + dt, state.depth + depth_rate * dt)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise NonFiniteState(f"state became non-finite at t={new.t:.6f}")
    return new


# -- log ------------------------------------------------------------------------

LOG_FIELDS = ("x_des", "x", "E", "F", "F_couple", "F_fric", "k")


@dataclass
class SimLog:
    t: np.ndarray
    stroke: np.ndarray  # stroke index of A's planner
    phase: np.ndarray  # 0 forward, 1 backward
    depth: np.ndarray
    endpoints: dict  # "A"/"B" -> {field: (N, 3)}

    def __len__(self):
        return len(self.t)

    def columns(self) -> list[str]:
        cols = ["t", "stroke", "phase", "depth"]
        for ep in ("A", "B"):
            for f in LOG_FIELDS:
                cols += [f"{ep}_{f}_{a}" for a in "xyz"]
        return cols

    def rows(self) -> np.ndarray:
        blocks = [self.t[:, None], self.stroke[:, None], self.phase[:, None], self.depth[:, None]]
        for ep in ("A", "B"):
            blocks += [self.endpoints[ep][f] for f in LOG_FIELDS]
        return np.hstack(blocks)


def write_log_csv(path, log: SimLog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(log.columns())
        for row in log.rows():
            w.writerow([fmt(v) for v in row])


def read_log_csv(path) -> SimLog:
    from .frames import read_numeric_csv

    with open(path) as fh:
        header = tuple(fh.readline().strip().split(","))
    rows = read_numeric_csv(path, header)
    col = {c: i for i, c in enumerate(header)}
    eps = {ep: {f: rows[:, [col[f"{ep}_{f}_{a}"] for a in "xyz"]] for f in LOG_FIELDS} for ep in ("A", "B")}
    return SimLog(rows[:, col["t"]], rows[:, col["stroke"]].astype(int), rows[:, col["phase"]].astype(int),
                  rows[:, col["depth"]], eps)


# -- runner ---------------------------------------------------------------------

def _start_positions(planner: PlannerConfig, coupling: SawCouplingConfig):
    half = 0.5 * coupling.rest_length
    a = np.array([0.0, -half - 0.5 * planner.stroke_length_m, planner.z_height_m])
    b = np.array([0.0, half - 0.5 * planner.stroke_length_m, planner.z_height_m])
    return a, b


def run_sawing(endpoint_a: EndpointConfig, endpoint_b: EndpointConfig, coupling: SawCouplingConfig | None = None,
               planner: PlannerConfig | None = None, sim: SimConfig | None = None) -> SimLog:
    """Fixed-step simulation of the sawing cycle; see the module docstring."""
    coupling = coupling or SawCouplingConfig()
    planner = planner or PlannerConfig()
    sim = sim or SimConfig()
    start_a, start_b = _start_positions(planner, coupling)
    # B's forward stroke is its pull, so both planners move along +y together;
    # a goal offset perturbs A's planner only
    fsm_a = make_fsm(start_a, planner)
    fsm_b = make_fsm(start_b, replace(planner, goal_offset_m=0.0))
    eps = (endpoint_a, endpoint_b)
    masses = np.array([e.mass for e in eps])

    n = int(round(sim.duration / sim.dt))
    log_t = np.empty(n)
    log_stroke = np.empty(n, dtype=int)
    log_phase = np.empty(n, dtype=int)
    log_depth = np.empty(n)
    rec = {ep: {f: np.empty((n, 3)) for f in LOG_FIELDS} for ep in ("A", "B")}

    x0a, _ = fsm_step(fsm_a, 0.0)
    x0b, _ = fsm_step(fsm_b, sim.phase_offset_s)
    state = SimState(np.vstack([x0a, x0b]), np.zeros((2, 3)))

    def partial(i):
        return SimLog(log_t[:i], log_stroke[:i], log_phase[:i], log_depth[:i],
                      {ep: {f: a[:i] for f, a in rec[ep].items()} for ep, _ in rec.items()})

    cache = [None, None]
    for i in range(n):
        t = i * sim.dt
        state.t = t
        des = [fsm_step(fsm_a, t), fsm_step(fsm_b, t + sim.phase_offset_s)]
        phases = (phase_signal(fsm_a, t), phase_signal(fsm_b, t + sim.phase_offset_s))
        f_ctrl = np.empty((2, 3))
        ks = np.empty((2, 3))
        for j, (cfg, (xd, vd)) in enumerate(zip(eps, des)):
            raw = cfg.stiffness(xd, phases[j])
            if cache[j] is None or not np.array_equal(raw, cache[j][0]):
                k = clamp_stiffness(raw, cfg.stiffness_limits)
                cache[j] = (np.array(raw), k, damping_matrix(k, cfg.mass, cfg.damping_ratio, sim.k_floor))
            _, k, d = cache[j]
            f_ctrl[j] = impedance_force(k, d, xd, state.x[j], vd, state.v[j], cfg.feedforward_force)
            ks[j] = np.diag(k)
        pushing = max(f_ctrl[0, 1], 0.0) + max(-f_ctrl[1, 1], 0.0)
        env = environment_forces(state, coupling, pushing)
        total = f_ctrl + env.couple + env.friction + env.contact

        log_t[i] = t
        log_stroke[i] = fsm_a.stroke_count
        log_phase[i] = int(fsm_a.state)
        log_depth[i] = state.depth
        for j, ep in enumerate(("A", "B")):
            r = rec[ep]
            r["x_des"][i] = des[j][0]
            r["x"][i] = state.x[j]
            r["E"][i] = des[j][0] - state.x[j]
            r["F"][i] = f_ctrl[j]
            r["F_couple"][i] = env.couple[j]
            r["F_fric"][i] = env.friction[j]
            r["k"][i] = ks[j]
            err = float(np.linalg.norm(r["E"][i]))
            if err > sim.error_bound:
                msg = f"endpoint {ep} tracking error {err:.4f} m exceeds {sim.error_bound} m at t={t:.3f} s"
                logger.error("InstabilityDetected: %s", msg)
                raise InstabilityDetected(msg, log=partial(i + 1))

        vy = 0.5 * (state.v[0, 1] + state.v[1, 1])
        depth_rate = coupling.cut_rate * max(env.load - coupling.cut_threshold, 0.0) * abs(vy)
        try:
            state = step_dynamics(state, total, masses, sim.dt, depth_rate)
        except NonFiniteState as exc:
            raise InstabilityDetected(str(exc), log=partial(i + 1)) from exc
    return partial(n)


# -- metrics --------------------------------------------------------------------

def _tie(a, b):
    return np.abs(a - b) <= np.maximum(1e-6 * np.maximum(a, b), 1e-9)


def leader_fraction(fa, fb) -> float:
    """Share of samples where |fa| > |fb|; numerical ties count half."""
    fa, fb = np.abs(fa), np.abs(fb)
    tie = _tie(fa, fb)
    return float(np.mean(np.where(tie, 0.5, (fa > fb).astype(float))))


def metrics(log: SimLog) -> dict:
    if len(log) == 0:
        raise EmptyLog("simulation log is empty")
    out = {"duration": float(log.t[-1] - log.t[0] + (log.t[1] - log.t[0] if len(log) > 1 else 0.0)),
           "samples": len(log), "max_depth": float(np.max(log.depth)), "endpoints": {}}
    for ep in ("A", "B"):
        r = log.endpoints[ep]
        out["endpoints"][ep] = {
            f"{a}": {
                "max_abs_E": float(np.max(np.abs(r["E"][:, i]))),
                "rms_E": float(np.sqrt(np.mean(r["E"][:, i] ** 2))),
                "max_abs_F": float(np.max(np.abs(r["F"][:, i]))),
            }
            for i, a in enumerate("xyz")
        }
    strokes = []
    fa, fb = log.endpoints["A"]["F"][:, 1], log.endpoints["B"]["F"][:, 1]
    ka, kb = log.endpoints["A"]["k"][:, 1], log.endpoints["B"]["k"][:, 1]
    for s in np.unique(log.stroke):
        m = log.stroke == s
        lf = leader_fraction(fa[m], fb[m])
        strokes.append({
            "stroke": int(s),
            "phase": int(log.phase[m][0]),
            "mean_abs_Fy": {"A": float(np.mean(np.abs(fa[m]))), "B": float(np.mean(np.abs(fb[m])))},
            "mean_ky": {"A": float(np.mean(ka[m])), "B": float(np.mean(kb[m]))},
            "leader_fraction_A": lf,
            "leader_fraction_B": 1.0 - lf,
        })
    out["strokes"] = strokes
    return out


__all__ = [
    "ConstantStiffness", "SkillStiffness", "skill_source", "EndpointConfig", "SawCouplingConfig",
    "SimConfig", "SimState", "SimLog", "EnvForces", "damping_matrix", "clamp_stiffness",
    "impedance_force", "environment_forces", "step_dynamics", "run_sawing", "metrics",
    "leader_fraction", "write_log_csv", "read_log_csv",
]
