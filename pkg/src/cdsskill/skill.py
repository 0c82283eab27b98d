"""Learned stiffness skill: pose -> Cholesky vector mixture, and its JSON form."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import spd
from .frames import fmt, read_numeric_csv
from .gmm import GmmModel, Normalization, TrainReport, em_fit, gmr_predict, select_k

logger = logging.getLogger(__name__)

MODEL_FORMAT = "cdsskill.model"
MODEL_VERSION = 1
TRAIN_COLUMNS = ("y", "z", "l11", "l21", "l22", "l31", "l32", "l33")


@dataclass
class SkillModel:
    gmm: GmmModel
    a_cc: float = 1.0
    seed: int = 0
    delta_min: float = spd.DELTA_MIN
    input_min: np.ndarray = field(default_factory=lambda: np.full(2, -np.inf))
    input_max: np.ndarray = field(default_factory=lambda: np.full(2, np.inf))

    @property
    def k(self) -> int:
        return self.gmm.n_components

    def scaled(self, factor: float) -> "SkillModel":
        return SkillModel(self.gmm, self.a_cc * factor, self.seed, self.delta_min,
                          self.input_min, self.input_max)


def training_matrix(poses, stiffness) -> np.ndarray:
    """Stack (y, z) poses with the Cholesky vectors of the matching matrices."""
    poses = np.asarray(poses, dtype=float).reshape(-1, 2)
    vecs = spd.encode_many(stiffness)
    if len(vecs) != len(poses):
        raise ValueError("pose and stiffness series differ in length")
    return np.hstack([poses, vecs])


def learn_stiffness_skill(poses, stiffness, k: int | None = 5, seed: int = 0, a_cc: float | None = None,
                          k_max: float | None = None, tol: float = 1e-6, max_iter: int = 300,
                          reg: float = 1e-6, bic_range=range(2, 11)):
    """Fit a pose -> stiffness mixture for one subject.

    ``k=None`` picks the component count by BIC over ``bic_range``.
    The output scale ``a_cc`` is taken as given, or calibrated so that the
    largest reproduced axis stiffness over the training poses equals
    ``k_max``, or left at 1.

    Returns ``(SkillModel, TrainReport)``.
    """
    data = training_matrix(poses, stiffness)
    kw = dict(seed=seed, tol=tol, max_iter=max_iter, reg=reg, dim_i=2, standardize=True)
    if k is None:
        gmm, report = select_k(data, bic_range, **kw)
    else:
        gmm, report = em_fit(data, k=k, **kw)
    skill = SkillModel(gmm, 1.0, seed, input_min=data[:, :2].min(axis=0), input_max=data[:, :2].max(axis=0))
    if a_cc is not None:
        skill.a_cc = float(a_cc)
    elif k_max is not None:
        ks = reproduce_many(skill, data[:, :2])
        peak = float(np.max(np.diagonal(ks, axis1=1, axis2=2)))
        skill.a_cc = float(k_max) / peak
    return skill, report


def reproduce_many(skill: SkillModel, poses) -> np.ndarray:
    poses = np.asarray(poses, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(poses)):
        raise ValueError("poses must be finite")
    vecs = gmr_predict(skill.gmm, poses)
    ks, _ = spd.decode_many(vecs, skill.delta_min)
    return skill.a_cc * ks


def reproduce_cds(skill: SkillModel, pose) -> np.ndarray:
    """Stiffness matrix reproduced at a (y, z) pose; always SPD."""
    return reproduce_many(skill, pose)[0]


# -- files --------------------------------------------------------------------

def skill_to_dict(skill: SkillModel) -> dict:
    g = skill.gmm
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dim_I": g.dim_i,
        "dim_O": g.dim_o,
        "K": g.n_components,
        "seed": skill.seed,
        "a_cc": skill.a_cc,
        "delta_min": skill.delta_min,
        "normalization": {
            "shift": g.normalization.shift.tolist(),
            "scale": g.normalization.scale.tolist(),
            "input_min": np.asarray(skill.input_min).tolist(),
            "input_max": np.asarray(skill.input_max).tolist(),
        },
        "components": [
            {"prior": c.prior, "mean": c.mean.tolist(), "cov": c.cov.tolist()} for c in g.components
        ],
    }


def skill_from_dict(d: dict) -> SkillModel:
    if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model file: format={d.get('format')} version={d.get('version')}")
    comps = d["components"]
    if len(comps) != d["K"]:
        raise ValueError("component count does not match K")
    norm = d["normalization"]
    gmm = GmmModel(
        [c["prior"] for c in comps],
        [c["mean"] for c in comps],
        [c["cov"] for c in comps],
        dim_i=d["dim_I"],
        dim_o=d["dim_O"],
        normalization=Normalization(np.array(norm["shift"], float), np.array(norm["scale"], float)),
    )
    return SkillModel(gmm, float(d["a_cc"]), int(d["seed"]), float(d.get("delta_min", spd.DELTA_MIN)),
                      np.array(norm["input_min"], float), np.array(norm["input_max"], float))


def save_skill(path, skill: SkillModel) -> None:
    with open(path, "w") as fh:
        json.dump(skill_to_dict(skill), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_skill(path) -> SkillModel:
    with open(path) as fh:
        return skill_from_dict(json.load(fh))


def save_report(path, report: TrainReport) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_training_csv(path, data) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAIN_COLUMNS)
        for row in np.asarray(data):
            w.writerow([fmt(v) for v in row])


def read_training_csv(path) -> np.ndarray:
    return read_numeric_csv(path, TRAIN_COLUMNS)
