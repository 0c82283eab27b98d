import numpy as np
import pytest

from cdsskill import skill


def rel_frobenius(a, b):
    return np.linalg.norm(a - b, axis=(1, 2)) / np.linalg.norm(b, axis=(1, 2))


def test_constant_dataset_reproduces_constant():
    rng = np.random.default_rng(0)
    poses = rng.uniform([-0.2, -0.3], [0.2, -0.2], size=(200, 2))
    k0 = np.array([[300.0, 20, -5], [20, 500, 10], [-5, 10, 200]])
    model, _ = skill.learn_stiffness_skill(poses, np.tile(k0, (200, 1, 1)), k=3, seed=0)
    q = rng.uniform([-0.2, -0.3], [0.2, -0.2], size=(100, 2))
    assert np.allclose(skill.reproduce_many(model, q), k0, rtol=0, atol=1e-6)


def test_training_set_reproduction(synthetic_training):
    for s, (poses, k) in synthetic_training.items():
        model, rep = skill.learn_stiffness_skill(poses, k, k=5, seed=0)
        assert rel_frobenius(skill.reproduce_many(model, poses), k).max() < 0.05, s
        assert np.all(np.diff(rep.loglik_trace) >= -1e-9)


def test_subjects_are_independent(synthetic_training):
    (pa, ka), (pb, kb) = synthetic_training["A"], synthetic_training["B"]
    first = skill.learn_stiffness_skill(pa, ka, k=4, seed=2)[0]
    skill.learn_stiffness_skill(pb, kb, k=4, seed=2)
    again = skill.learn_stiffness_skill(pa, ka, k=4, seed=2)[0]
    assert skill.skill_to_dict(first) == skill.skill_to_dict(again)


def test_outputs_spd_on_random_poses(trained_skills):
    m = trained_skills["A"]
    rng = np.random.default_rng(1)
    q = rng.uniform(m.input_min, m.input_max, size=(10_000, 2))
    w = np.linalg.eigvalsh(skill.reproduce_many(m, q))
    assert w.min() > 0


def test_acc_scaling(trained_skills):
    m = trained_skills["B"]
    q = np.random.default_rng(2).uniform(m.input_min, m.input_max, size=(20, 2))
    k1 = skill.reproduce_many(m, q)
    k2 = skill.reproduce_many(m.scaled(2.0), q)
    assert np.allclose(k2, 2 * k1, rtol=1e-14)
    v1 = np.linalg.eigh(k1)[1]
    v2 = np.linalg.eigh(k2)[1]
    assert np.allclose(np.abs(np.einsum("nij,nij->nj", v1, v2)), 1.0, atol=1e-9)


def test_acc_calibrated_to_peak(synthetic_training, trained_skills):
    poses, _ = synthetic_training["A"]
    ks = skill.reproduce_many(trained_skills["A"], poses)
    assert np.max(np.diagonal(ks, axis1=1, axis2=2)) == pytest.approx(800.0, rel=1e-12)


def test_model_file_round_trip(tmp_path, trained_skills):
    m = trained_skills["A"]
    skill.save_skill(tmp_path / "m.json", m)
    back = skill.load_skill(tmp_path / "m.json")
    q = np.array([[m.input_min[0], m.input_max[1]], 0.5 * (m.input_min + m.input_max)])
    assert np.array_equal(skill.reproduce_many(back, q), skill.reproduce_many(m, q))
    skill.save_skill(tmp_path / "m2.json", back)
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_model_file_keys(trained_skills):
    d = skill.skill_to_dict(trained_skills["A"])
    assert {"dim_I", "dim_O", "normalization", "components", "a_cc", "seed", "K"} <= d.keys()
    assert d["dim_I"] == 2 and d["dim_O"] == 6 and len(d["components"]) == d["K"] == 5


def test_rejects_foreign_model_file(trained_skills):
    d = skill.skill_to_dict(trained_skills["A"])
    d["version"] = 99
    with pytest.raises(ValueError):
        skill.skill_from_dict(d)


def test_training_csv_round_trip(tmp_path, synthetic_training):
    poses, k = synthetic_training["B"]
    data = skill.training_matrix(poses[:10], k[:10])
    skill.write_training_csv(tmp_path / "t.csv", data)
    assert np.array_equal(skill.read_training_csv(tmp_path / "t.csv"), data)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "y,z,l11,l21,l22,l31,l32,l33"
