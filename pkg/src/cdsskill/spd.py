"""Cholesky vectorisation of 3x3 SPD matrices.

A stiffness matrix ``K = L L^T`` is stored as the six free entries of ``L`` in
row order ``(l11, l21, l22, l31, l32, l33)``. Decoding clamps the diagonal of
``L`` so that every finite vector maps back to an SPD matrix. A clamped
diagonal next to large off-diagonal entries gives ``L L^T`` a condition
number beyond double precision; such products get a ridge of
``RIDGE * trace / 3`` so the returned matrix is SPD in floating point too.
"""
from __future__ import annotations

import logging

import numpy as np

from .errors import NonFiniteInput, NotSPD

logger = logging.getLogger(__name__)

DELTA_MIN = 1e-3  # sqrt(N/m)
SYM_RTOL = 1e-8

_ROWS = np.array([0, 1, 1, 2, 2, 2])
_COLS = np.array([0, 0, 1, 0, 1, 2])
_DIAG = np.array([0, 2, 5])
RIDGE = 1e-12
_SPD_TOL = 64 * np.finfo(float).eps


def _ensure_spd(ks: np.ndarray) -> np.ndarray:
    """Add a tiny ridge to products that lost positive definiteness to rounding."""
    w = np.linalg.eigvalsh(ks)
    weak = w[:, 0] <= _SPD_TOL * np.abs(w).max(axis=1)
    if np.any(weak):
        logger.debug("adding ridge to %d numerically semidefinite matrices", int(weak.sum()))
        lam = RIDGE * np.trace(ks[weak], axis1=1, axis2=2) / 3.0
        ks[weak] += lam[:, None, None] * np.eye(3)
    return ks


def _cholesky(k):
    try:
        return np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        return None


def encode(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.shape != (3, 3) or not np.all(np.isfinite(k)):
        raise NotSPD("expected a finite 3x3 matrix")
    scale = max(np.abs(k).max(), np.finfo(float).tiny)
    if np.abs(k - k.T).max() > SYM_RTOL * scale:
        raise NotSPD("matrix is not symmetric")
    k = 0.5 * (k + k.T)
    low = _cholesky(k)
    if low is None:
        lam = 1e-9 * np.trace(k) / 3.0
        low = _cholesky(k + lam * np.eye(3)) if lam > 0 else None
        if low is None:
            raise NotSPD("Cholesky factorisation failed after jitter")
    return low[_ROWS, _COLS].copy()


def encode_many(ks) -> np.ndarray:
    return np.array([encode(k) for k in ks]).reshape(-1, 6)


def decode(v, delta_min: float = DELTA_MIN) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(6)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("Cholesky vector has non-finite entries")
    low = np.zeros((3, 3))
    low[_ROWS, _COLS] = v
    diag = np.diag(low)
    if np.any(diag < delta_min):
        logger.warning("ClampTriggered: Cholesky diagonal %s clamped to >= %g", diag, delta_min)
        low[np.diag_indices(3)] = np.maximum(diag, delta_min)
    return _ensure_spd((low @ low.T)[None])[0]


def decode_many(vs, delta_min: float = DELTA_MIN) -> np.ndarray:
    """Vectorised decode; returns ``(K, n_clamped)``."""
    vs = np.asarray(vs, dtype=float).reshape(-1, 6)
    if not np.all(np.isfinite(vs)):
        raise NonFiniteInput("Cholesky vectors have non-finite entries")
    low = np.zeros((len(vs), 3, 3))
    low[:, _ROWS, _COLS] = vs
    bad = vs[:, _DIAG] < delta_min
    n_clamped = int(bad.any(axis=1).sum())
    if n_clamped:
        logger.warning("ClampTriggered: %d Cholesky vectors clamped", n_clamped)
        idx = np.arange(3)
        low[:, idx, idx] = np.maximum(low[:, idx, idx], delta_min)
    return _ensure_spd(low @ np.swapaxes(low, 1, 2)), n_clamped
