import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdsskill import sim
from cdsskill.errors import EmptyLog, InstabilityDetected, NonFiniteState
from cdsskill.planner import PlannerConfig
from cdsskill.sim import (
    ConstantStiffness,
    EndpointConfig,
    SawCouplingConfig,
    SimConfig,
    SimState,
    clamp_stiffness,
    damping_matrix,
    environment_forces,
    impedance_force,
    step_dynamics,
)

Z3 = np.zeros(3)


def short(duration=8.0, **kw):
    return SimConfig(duration=duration, **kw)


def endpoint(k, f_ff=(0.0, 0.0, -10.0)):
    src = k if callable(k) else ConstantStiffness(k)
    return EndpointConfig(stiffness=src, feedforward_force=f_ff)


def max_ez(log):
    return max(np.max(np.abs(log.endpoints[e]["E"][:, 2])) for e in "AB")


# -- force laws ----------------------------------------------------------------------

def test_hooke_example():
    f = impedance_force(np.diag([0.0, 800, 800]), np.zeros((3, 3)), [0, 0.0125, 0], Z3, Z3, Z3, Z3)
    assert np.allclose(f, [0, 10, 0], atol=1e-12)


def test_equilibrium_gives_feedforward():
    k = np.diag([100.0, 200, 300])
    x = np.array([0.1, 0.2, 0.3])
    v = np.array([1.0, -1.0, 0.5])
    f = impedance_force(k, damping_matrix(k, 5.0), x, x, v, v, [1.0, 2.0, 3.0])
    assert np.array_equal(f, [1.0, 2.0, 3.0])


def test_doubling_k_doubles_spring_term_only():
    rng = np.random.default_rng(0)
    k = np.diag([100.0, 800, 300])
    d = damping_matrix(k, 5.0)
    args = rng.normal(size=(4, 3))
    f1 = impedance_force(k, d, *args, Z3)
    f2 = impedance_force(2 * k, d, *args, Z3)
    assert np.allclose(f2 - f1, k @ (args[0] - args[1]))


def test_damping_design():
    d = damping_matrix(np.diag([0.0, 800.0, 200.0]), 5.0)
    assert np.allclose(np.diag(d), [2 * np.sqrt(50.0), 2 * np.sqrt(4000.0), 2 * np.sqrt(1000.0)])
    q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(3, 3)))
    k = (q * [0.0, 800.0, 200.0]) @ q.T
    assert np.allclose(damping_matrix(k, 5.0), (q * np.diag(d)) @ q.T, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-2000, 2000), min_size=6, max_size=6))
def test_clamp_keeps_eigenvalues_in_limits(vals):
    k = np.zeros((3, 3))
    k[np.triu_indices(3)] = vals
    k = k + np.triu(k, 1).T
    w = np.linalg.eigvalsh(clamp_stiffness(k, (0.0, 800.0)))
    assert w.min() >= -1e-9 and w.max() <= 800.0 * (1 + 1e-12)


def state(xa, xb, va=Z3, vb=Z3, depth=0.0):
    return SimState(np.array([xa, xb], float), np.array([va, vb], float), 0.0, depth)


def test_coupling_zero_at_rest_length_and_balanced():
    cfg = SawCouplingConfig(wood_top_z=-1.0)
    env = environment_forces(state([0, -0.4, 0], [0, 0.4, 0]), cfg)
    assert np.array_equal(env.couple, np.zeros((2, 3)))
    env = environment_forces(state([0, -0.41, 0.01], [0.02, 0.4, 0], [0, 1, 0], [0, -2, 1]), cfg)
    assert np.max(np.abs(env.couple.sum(axis=0))) <= 1e-10
    assert np.linalg.norm(env.couple[0]) > 0


def test_saw_above_wood_has_no_contact_or_friction():
    env = environment_forces(state([0, -0.4, 0.01], [0, 0.4, 0.01], [0, 1, 0], [0, 1, 0]), SawCouplingConfig(),
                             pushing=50.0)
    assert env.normal == 0 and env.load == 0
    assert not env.contact.any() and not env.friction.any()


def test_one_millimetre_penetration():
    env = environment_forces(state([0, -0.4, -1e-3], [0, 0.4, -1e-3]), SawCouplingConfig(k_wood=1e5))
    assert env.contact[:, 2].sum() == pytest.approx(100.0)
    assert np.allclose(env.contact[0], env.contact[1])


def test_friction_opposes_sliding_and_splits():
    cfg = SawCouplingConfig(mu=0.5, binding=0.0)
    env = environment_forces(state([0, -0.4, -1e-3], [0, 0.4, -1e-3], [0, 0.2, 0], [0, 0.2, 0]), cfg)
    assert env.friction[0, 1] == env.friction[1, 1]
    assert env.friction[:, 1].sum() == pytest.approx(-0.5 * 100.0, rel=1e-9)


def test_step_zero_force_is_uniform_motion():
    s = state([0, 0, 0], [1, 1, 1], [1, 2, 3], [-1, 0, 0.5])
    n = step_dynamics(s, np.zeros((2, 3)), [5.0, 5.0], 0.01)
    assert np.allclose(n.x, s.x + s.v * 0.01) and np.array_equal(n.v, s.v)


def test_step_constant_force_recurrence_exact():
    s = state(Z3, Z3)
    f = np.array([[2.0, 0, 0], [0, -2.0, 0]])
    for i in range(1, 101):
        s = step_dynamics(s, f, [4.0, 4.0], 0.25)
        assert s.v[0, 0] == i * 0.5 * 0.25 and s.v[1, 1] == -i * 0.5 * 0.25


def test_step_non_finite():
    with pytest.raises(NonFiniteState):
        step_dynamics(state(Z3, Z3), np.full((2, 3), np.inf), [1.0, 1.0], 0.1)


def test_harmonic_oscillator_energy_drift():
    # m = 1, k = 1: semi-implicit Euler keeps the energy bounded
    dt = 1e-3
    s = state([1.0, 0, 0], Z3)
    energies = []
    for _ in range(10_000):
        s = step_dynamics(s, -np.vstack([s.x[0], Z3]), [1.0, 1.0], dt)
        energies.append(0.5 * s.v[0, 0] ** 2 + 0.5 * s.x[0, 0] ** 2)
    assert np.max(np.abs(np.array(energies) / 0.5 - 1)) < 0.01
    assert s.x[0, 0] == pytest.approx(np.cos(10.0), abs=1e-2)


def test_passive_without_feedforward_or_friction():
    cfg = SawCouplingConfig(mu=0.0, wood_top_z=-10.0)
    k = np.diag([0.0, 800.0, 800.0])
    d = damping_matrix(k, 5.0)
    des = np.array([[0, -0.4, 0.0], [0, 0.4, 0.0]])
    s = state([0.01, -0.42, 0.03], [0, 0.38, -0.02], [0.1, 0, 0], [0, 0.3, 0])
    energy = []
    for _ in range(10_000):
        f = np.array([impedance_force(k, d, des[j], s.x[j], Z3, s.v[j], Z3) for j in range(2)])
        env = environment_forces(s, cfg)
        dist = np.linalg.norm(s.x[1] - s.x[0])
        e = 0.5 * 5.0 * np.sum(s.v ** 2) + 0.5 * 1e5 * (dist - 0.8) ** 2
        e += sum(0.5 * (des[j] - s.x[j]) @ k @ (des[j] - s.x[j]) for j in range(2))
        energy.append(e)
        s = step_dynamics(s, f + env.couple + env.friction + env.contact, [5.0, 5.0], 1e-3)
    energy = np.array(energy)
    assert np.max(energy - np.minimum.accumulate(energy)) <= 0.01 * energy[0]
    assert energy[-1] < 0.01 * energy[0]


# -- runs -------------------------------------------------------------------------------

def test_regulation_without_disturbance():
    cfg = SawCouplingConfig(wood_top_z=-10.0)
    a = endpoint([800.0] * 3, (0, 0, 0))
    log = sim.run_sawing(a, a, cfg, PlannerConfig(period_s=1e6), short(2.0))
    late = log.t > 1.0
    for e in "AB":
        assert np.max(np.abs(log.endpoints[e]["E"][late])) < 1e-4


def test_run_is_deterministic():
    a = endpoint([0, 800.0, 800.0])
    l1 = sim.run_sawing(a, a, sim=short(2.0))
    l2 = sim.run_sawing(a, a, sim=short(2.0))
    assert np.array_equal(l1.rows(), l2.rows())


def test_log_invariants():
    log = sim.run_sawing(endpoint([0.0, 800, 2000]), endpoint([0.0, 800, 2000]), sim=short(4.0))
    n = len(log)
    assert n == 4000 and np.allclose(np.diff(log.t), 1e-3)
    couple = log.endpoints["A"]["F_couple"] + log.endpoints["B"]["F_couple"]
    assert np.max(np.abs(couple)) <= 1e-10
    for e in "AB":
        r = log.endpoints[e]
        assert all(len(v) == n for v in r.values())
        assert r["k"].min() >= 0 and r["k"].max() <= 800
        assert np.all(r["F"][:, 0] == 0.0)


def test_zero_z_stiffness_tracks_worse():
    zero = sim.run_sawing(endpoint([0, 800, 0]), endpoint([0, 800, 0]), sim=short())
    stiff = sim.run_sawing(endpoint([0, 800, 800]), endpoint([0, 800, 800]), sim=short())
    assert max_ez(zero) > max_ez(stiff)


def test_instability_preserves_partial_log():
    with pytest.raises(InstabilityDetected) as info:
        sim.run_sawing(endpoint([0, 800, 0]), endpoint([0, 800, 0]), sim=short(error_bound=0.01))
    log = info.value.log
    assert 0 < len(log) < 8000
    assert np.linalg.norm(log.endpoints["A"]["E"][-1]) > 0.01 or np.linalg.norm(log.endpoints["B"]["E"][-1]) > 0.01


def scheduled(high_forward):
    def source(x_des, phase):
        high = phase > 0 if high_forward else phase < 0
        return np.diag([0.0, 800.0 if high else 200.0, 800.0])
    return source


def test_scheduled_stiffness_leads():
    log = sim.run_sawing(endpoint(scheduled(True)), endpoint(scheduled(False)), sim=short())
    for s in sim.metrics(log)["strokes"]:
        leader = "A" if s["mean_ky"]["A"] > s["mean_ky"]["B"] else "B"
        assert s[f"leader_fraction_{leader}"] >= 0.9


def test_learned_profiles_alternate(trained_skills):
    pl = PlannerConfig()
    a = sim.skill_source(trained_skills["A"], pl, -0.4, 1.0)
    b = sim.skill_source(trained_skills["B"], pl, 0.4, -1.0)
    log = sim.run_sawing(endpoint(a), endpoint(b), planner=pl, sim=short())
    leaders = ["A" if s["mean_ky"]["A"] > s["mean_ky"]["B"] else "B" for s in sim.metrics(log)["strokes"]]
    assert all(x != y for x, y in zip(leaders, leaders[1:]))


def test_skill_source_mapping(trained_skills):
    m = trained_skills["A"]
    pl = PlannerConfig()
    a = sim.skill_source(m, pl, -0.4, 1.0)
    b = sim.skill_source(m, pl, 0.4, -1.0)
    mid = 0.5 * (m.input_min + m.input_max)
    assert np.allclose(a.pose([0, -0.4, 0], 0.0), mid)
    assert np.allclose(a.pose([0, -0.4 + 0.15, 0], 1.0), [m.input_max[0], m.input_max[1]])
    assert np.allclose(b.pose([0, 0.4 + 0.15, 0], -1.0), [m.input_min[0], m.input_min[1]])
    assert np.allclose(a.pose([0, 5.0, 0], 9.0), m.input_max)
    k = a([0, -0.4, 0], 0.0)
    assert k[0, 0] == 0 and k[2, 2] == 800 and k[1, 1] > 0


# -- metrics ------------------------------------------------------------------------------

def synthetic_log(ea, eb, fa, fb, stroke=None):
    n = len(ea)
    z = np.zeros((n, 3))
    stroke = np.zeros(n, int) if stroke is None else np.asarray(stroke)
    eps = {}
    for name, e, f in (("A", ea, fa), ("B", eb, fb)):
        eps[name] = {fld: z.copy() for fld in sim.LOG_FIELDS}
        eps[name]["E"] = np.asarray(e, float)
        eps[name]["F"] = np.asarray(f, float)
    return sim.SimLog(np.arange(n) * 1e-3, stroke, stroke % 2, np.zeros(n), eps)


def test_constant_error_metrics():
    e = np.tile([0.0, 0.0, 0.02], (100, 1))
    m = sim.metrics(synthetic_log(e, e, e, e))
    assert m["endpoints"]["A"]["z"]["max_abs_E"] == pytest.approx(0.02)
    assert m["endpoints"]["A"]["z"]["rms_E"] == pytest.approx(0.02)


def test_symmetric_forces_give_half():
    f = np.tile([0.0, 5.0, 0.0], (50, 1))
    m = sim.metrics(synthetic_log(f, f, f, -f))
    assert m["strokes"][0]["leader_fraction_A"] == 0.5


def test_leader_fraction_counts():
    fa = np.array([[0, 3.0, 0], [0, 1.0, 0], [0, -4.0, 0], [0, 2.0, 0]])
    fb = np.array([[0, 1.0, 0], [0, 2.0, 0], [0, 1.0, 0], [0, 2.0, 0]])
    m = sim.metrics(synthetic_log(fa, fb, fa, fb))
    assert m["strokes"][0]["leader_fraction_A"] == pytest.approx((1 + 0 + 1 + 0.5) / 4)
    assert m["strokes"][0]["mean_abs_Fy"]["A"] == pytest.approx(2.5)


def test_metrics_empty():
    empty = synthetic_log(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(EmptyLog):
        sim.metrics(empty)


def test_log_csv_round_trip(tmp_path):
    log = sim.run_sawing(endpoint([0, 800.0, 800.0]), endpoint([0, 800.0, 800.0]), sim=short(0.5))
    sim.write_log_csv(tmp_path / "log.csv", log)
    back = sim.read_log_csv(tmp_path / "log.csv")
    assert np.array_equal(back.rows(), log.rows())
    header = (tmp_path / "log.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["t", "stroke", "phase", "depth"] and "B_k_z" in header


def test_config_validation():
    with pytest.raises(ValueError):
        EndpointConfig(mass=0.0)
    with pytest.raises(ValueError):
        EndpointConfig(stiffness_limits=(500.0, 100.0))
    with pytest.raises(ValueError):
        SawCouplingConfig(k_couple=0.0)
    with pytest.raises(ValueError):
        SawCouplingConfig(mu=-1.0)
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
