import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"
SYNTHETIC = DATA / "synthetic_sawing.json"


@pytest.fixture(scope="session")
def synthetic_training():
    """Per-subject (poses, stiffness) pairs from the bundled synthetic sawing stream."""
    from cdsskill import ingest, stiffness
    from cdsskill.config import PipelineConfig

    cfg = PipelineConfig()
    frames = ingest.load_skeleton(SYNTHETIC)
    out = {}
    for s in ("A", "B"):
        demos, _ = ingest.ingest_subject(
            frames, s, samples_per_demo=cfg.ingest.samples_per_demo, demo_period=cfg.ingest.demo_period_s,
        )
        traj = ingest.DemoDataset({s: demos}, cfg.ingest.samples_per_demo).concatenated(s)
        _, k, _, _, keep = stiffness.extract_trajectory(traj, stiffness.StiffnessParams())
        out[s] = (traj.wrist[keep][:, 1:], k)
    return out


@pytest.fixture(scope="session")
def trained_skills(synthetic_training):
    from cdsskill import skill

    return {s: skill.learn_stiffness_skill(p, k, k=5, seed=0, k_max=800.0)[0] for s, (p, k) in synthetic_training.items()}
