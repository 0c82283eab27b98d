"""Configuration-dependent endpoint stiffness of the human arm.

The stiffness ellipsoid is built from three keypoints only. Its major axis
runs from the shoulder to the hand, its minor axis is normal to the arm
triangle, and the axis ratios depend on hand distance (``d1``) and on how far
the elbow sits from the major axis (``d2``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import NonUnitAxis, SingularConfiguration
from .frames import ArmFrame, ArmTrajectory, fmt

EPS_SING = 1e-6

STIFFNESS_COLUMNS = ("t", "k11", "k12", "k13", "k22", "k23", "k33", "d1", "d2")
_UPPER = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


@dataclass(frozen=True)
class StiffnessParams:
    alpha1: float = 0.4  # m
    alpha2: float = 5.0  # 1/m
    a_cc: float = 1.0  # N/m

    def __post_init__(self):
        if not (self.alpha1 > 0 and self.alpha2 > 0 and self.a_cc > 0):
            raise ValueError("alpha1, alpha2 and a_cc must be positive")


@dataclass(frozen=True)
class ArmGeometry:
    l: np.ndarray  # shoulder -> hand
    r: np.ndarray  # shoulder -> elbow
    n: np.ndarray  # r x l
    d1: float
    d2: float


@dataclass(frozen=True)
class EllipsoidDecomposition:
    v: np.ndarray  # columns are principal axes
    d: np.ndarray  # normalised axis ratios, product 1


def arm_geometry(frame: ArmFrame, eps: float = EPS_SING) -> ArmGeometry:
    l = frame.wrist - frame.shoulder
    r = frame.elbow - frame.shoulder
    if not (np.all(np.isfinite(l)) and np.all(np.isfinite(r))):
        raise SingularConfiguration("non-finite keypoints")
    n = np.cross(r, l)
    nl, nr = np.linalg.norm(l), np.linalg.norm(r)
    if nl == 0 or nr == 0 or np.linalg.norm(n) < eps * nr * nl:
        raise SingularConfiguration("shoulder, elbow and wrist are collinear")
    lhat = l / nl
    d2 = float(np.linalg.norm(r - (r @ lhat) * lhat))
    return ArmGeometry(l=l, r=r, n=n, d1=float(nl), d2=d2)


def cds_frame(geom: ArmGeometry) -> np.ndarray:
    """Principal axes as columns: major (along l), median, minor (normal)."""
    n = geom.n
    m = np.cross(n, geom.l)
    return np.column_stack([
        geom.l / np.linalg.norm(geom.l),
        m / np.linalg.norm(m),
        n / np.linalg.norm(n),
    ])


def cds_shape(geom: ArmGeometry, p: StiffnessParams) -> np.ndarray:
    if geom.d1 <= 0 or geom.d2 <= 0:
        raise SingularConfiguration("d1 and d2 must be positive")
    raw = np.array([1.0, p.alpha1 / geom.d1, p.alpha2 * geom.d2])
    return raw / np.cbrt(raw.prod())


def decompose(frame: ArmFrame, p: StiffnessParams) -> EllipsoidDecomposition:
    g = arm_geometry(frame)
    return EllipsoidDecomposition(v=cds_frame(g), d=cds_shape(g, p))


def endpoint_stiffness(frame: ArmFrame, p: StiffnessParams) -> np.ndarray:
    """Full 3x3 endpoint stiffness ``V (a_cc D_s) V^T``."""
    g = arm_geometry(frame)
    v = cds_frame(g)
    k = (v * (p.a_cc * cds_shape(g, p))) @ v.T
    return 0.5 * (k + k.T)


def endpoint_stiffness_batch(points: np.ndarray, p: StiffnessParams, eps: float = EPS_SING):
    """Vectorised :func:`endpoint_stiffness` over (N, 3, 3) keypoint arrays.

    Returns ``(K, d1, d2, ok)`` where rows with ``ok == False`` are singular
    and hold NaN.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3, 3)
    l = pts[:, 2] - pts[:, 0]
    r = pts[:, 1] - pts[:, 0]
    n = np.cross(r, l)
    nl = np.linalg.norm(l, axis=1)
    nr = np.linalg.norm(r, axis=1)
    nn = np.linalg.norm(n, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ok = np.isfinite(nn) & (nl > 0) & (nr > 0) & (nn >= eps * nr * nl)
        lhat = l / nl[:, None]
        rperp = r - np.sum(r * lhat, axis=1)[:, None] * lhat
        d2 = np.linalg.norm(rperp, axis=1)
        m = np.cross(n, l)
        v = np.stack([lhat, m / np.linalg.norm(m, axis=1)[:, None], n / nn[:, None]], axis=2)
        raw = np.stack([np.ones_like(nl), p.alpha1 / nl, p.alpha2 * d2], axis=1)
        ds = raw / np.cbrt(raw.prod(axis=1))[:, None]
        k = np.einsum("nij,nj,nkj->nik", v, p.a_cc * ds, v)
    ok &= d2 > 0
    k = 0.5 * (k + np.swapaxes(k, 1, 2))
    k[~ok] = np.nan
    return k, nl, d2, ok


def project_stiffness(k: np.ndarray, axis) -> float:
    """Stiffness felt along a unit direction, ``axis^T K axis``."""
    e = np.asarray(axis, dtype=float).reshape(3)
    if abs(np.linalg.norm(e) - 1.0) > 1e-9:
        raise NonUnitAxis(f"axis norm {np.linalg.norm(e)} is not 1")
    return float(e @ np.asarray(k) @ e)


def extract_trajectory(traj: ArmTrajectory, p: StiffnessParams):
    """Stiffness for every non-singular frame of ``traj``.

    Returns ``(t, K, d1, d2, keep)``; ``keep`` indexes the surviving frames.
    """
    k, d1, d2, ok = endpoint_stiffness_batch(traj.points, p)
    keep = np.flatnonzero(ok)
    return traj.t[keep], k[keep], d1[keep], d2[keep], keep


def write_stiffness_csv(path, t, k, d1, d2) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STIFFNESS_COLUMNS)
        for ti, ki, a, b in zip(t, k, d1, d2):
            w.writerow([fmt(ti)] + [fmt(ki[i, j]) for i, j in _UPPER] + [fmt(a), fmt(b)])


def read_stiffness_csv(path):
    from .frames import read_numeric_csv

    rows = read_numeric_csv(path, STIFFNESS_COLUMNS)
    k = np.empty((len(rows), 3, 3))
    for c, (i, j) in enumerate(_UPPER):
        k[:, i, j] = rows[:, 1 + c]
        k[:, j, i] = rows[:, 1 + c]
    return rows[:, 0], k, rows[:, 7], rows[:, 8]
