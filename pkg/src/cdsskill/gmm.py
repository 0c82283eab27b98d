"""Gaussian mixture model fitted by EM, and Gaussian mixture regression.

Component parameters live in a *model space* obtained from raw data by a
per-dimension affine map ``(x - shift) / scale`` (identity unless the fit
was asked to standardise). Every public function takes raw vectors and applies
that map itself.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateComponent, EmptyCluster, IllConditionedBlock, SingularData

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
MAX_BLOCK_COND = 1e12
MAX_RESTARTS = 3


@dataclass(frozen=True)
class GaussianComponent:
    prior: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass
class Normalization:
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, d: int) -> "Normalization":
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def fit(cls, data: np.ndarray) -> "Normalization":
        shift = data.mean(axis=0)
        scale = data.std(axis=0)
        flat = scale <= 1e-12 * (np.abs(shift) + 1.0)
        scale = np.where(flat, 1.0, scale)
        return cls(shift, scale)

    def apply(self, x, dims=slice(None)):
        return (np.asarray(x, dtype=float) - self.shift[dims]) / self.scale[dims]

    def invert(self, z, dims=slice(None)):
        return np.asarray(z, dtype=float) * self.scale[dims] + self.shift[dims]


@dataclass
class GmmModel:
    priors: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    covs: np.ndarray  # (K, d, d)
    dim_i: int = 0
    dim_o: int = 0
    normalization: Normalization | None = None
    _gmr: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=float).reshape(-1)
        k = len(self.priors)
        self.means = np.asarray(self.means, dtype=float).reshape(k, -1)
        d = self.means.shape[1]
        self.covs = np.asarray(self.covs, dtype=float).reshape(k, d, d)
        if self.dim_i == 0 and self.dim_o == 0:
            self.dim_o = d
        if self.dim_i + self.dim_o != d:
            raise ValueError(f"block sizes {self.dim_i}+{self.dim_o} do not match dimension {d}")
        if self.normalization is None:
            self.normalization = Normalization.identity(d)
        if k < 1:
            raise ValueError("a mixture needs at least one component")
        if abs(self.priors.sum() - 1.0) > 1e-9:
            raise ValueError("priors must sum to 1")

    @property
    def n_components(self) -> int:
        return len(self.priors)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(float(p), m, c) for p, m, c in zip(self.priors, self.means, self.covs)]

    def permuted(self, order) -> "GmmModel":
        order = np.asarray(order)
        return GmmModel(self.priors[order], self.means[order], self.covs[order],
                        self.dim_i, self.dim_o, self.normalization)


@dataclass
class TrainReport:
    loglik_trace: list
    iterations: int
    converged: bool
    restarts: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "loglik_trace": [float(v) for v in self.loglik_trace],
            "iterations": self.iterations,
            "converged": self.converged,
            "restarts": self.restarts,
            "seed": self.seed,
        }


def _chol(cov, k=None):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DegenerateComponent(f"covariance of component {k} is not positive definite") from None


def _log_gauss(z, mean, cov, k=None) -> np.ndarray:
    """Log density of N(mean, cov) at the rows of ``z``."""
    low = _chol(cov, k)
    sol = np.linalg.solve(low, (z - mean).T)
    maha = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.log(np.diag(low)).sum()
    return -0.5 * (z.shape[1] * LOG_2PI + logdet + maha)


def _weighted_log_dens(model: GmmModel, z) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logp = np.log(model.priors)
    out = np.empty((len(z), model.n_components))
    for k in range(model.n_components):
        out[:, k] = logp[k] + _log_gauss(z, model.means[k], model.covs[k], k)
    return out


def _as_rows(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return x.reshape(-1, d), single


def responsibilities(model: GmmModel, x) -> np.ndarray:
    """Posterior component weights for one point (K,) or many (N, K)."""
    z, single = _as_rows(x, model.dim)
    wl = _weighted_log_dens(model, model.normalization.apply(z))
    gamma = np.exp(wl - logsumexp(wl, axis=1, keepdims=True))
    return gamma[0] if single else gamma


def loglik(model: GmmModel, data) -> float:
    """Total log-likelihood of ``data`` under the model (model space)."""
    z, _ = _as_rows(data, model.dim)
    return float(logsumexp(_weighted_log_dens(model, model.normalization.apply(z)), axis=1).sum())


def bic(model: GmmModel, data) -> float:
    z, _ = _as_rows(data, model.dim)
    k, d = model.n_components, model.dim
    n_params = (k - 1) + k * d + k * d * (d + 1) / 2
    return -2.0 * loglik(model, z) + n_params * np.log(len(z))


# -- EM -----------------------------------------------------------------------

def _kmeanspp(z, k, rng, n_lloyd=20):
    n = len(z)
    centers = [z[rng.integers(n)]]
    d2 = np.sum((z - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(z[idx])
        d2 = np.minimum(d2, np.sum((z - z[idx]) ** 2, axis=1))
    centers = np.array(centers)
    for _ in range(n_lloyd):
        dist = ((z[:, None, :] - centers[None]) ** 2).sum(axis=2)
        labels = dist.argmin(axis=1)
        new = np.array([z[labels == j].mean(axis=0) if np.any(labels == j) else centers[j]
                        for j in range(k)])
        if np.array_equal(new, centers):
            break
        centers = new
    dist = ((z[:, None, :] - centers[None]) ** 2).sum(axis=2)
    return centers, dist.argmin(axis=1)


def _floor_cov(cov, floor):
    cov = 0.5 * (cov + cov.T)
    if floor <= 0:
        return cov
    w, v = np.linalg.eigh(cov)
    if w.min() >= floor:
        return cov
    cov = (v * np.maximum(w, floor)) @ v.T
    return 0.5 * (cov + cov.T)


def _init_params(z, k, rng, floor):
    n, d = z.shape
    centers, labels = _kmeanspp(z, k, rng)
    glob = np.cov(z, rowvar=False, bias=True).reshape(d, d)
    priors = np.empty(k)
    covs = np.empty((k, d, d))
    for j in range(k):
        members = z[labels == j]
        priors[j] = max(len(members), 1) / n
        if len(members) > d:
            c = np.cov(members, rowvar=False, bias=True).reshape(d, d)
        else:
            c = glob
        covs[j] = _floor_cov(c, floor)
    return priors / priors.sum(), centers, covs


def _em_once(z, k, rng, tol, max_iter, floor, dim_i, dim_o, norm):
    n, d = z.shape
    priors, means, covs = _init_params(z, k, rng, floor)
    model = GmmModel(priors, means, covs, dim_i, dim_o, Normalization.identity(d))
    trace = []
    converged = False
    iterations = 0
    for it in range(max_iter + 1):
        wl = _weighted_log_dens(model, z)
        lse = logsumexp(wl, axis=1)
        trace.append(float(lse.sum()))
        if it > 0 and trace[-1] - trace[-2] < tol:
            converged = True
            break
        if it == max_iter:
            break
        gamma = np.exp(wl - lse[:, None])
        nk = gamma.sum(axis=0)
        if np.any(nk <= 1e-8 * n):
            raise EmptyCluster(f"component weight collapsed at iteration {it}")
        means = (gamma.T @ z) / nk[:, None]
        covs = np.empty((k, d, d))
        for j in range(k):
            diff = z - means[j]
            covs[j] = _floor_cov((gamma[:, j, None] * diff).T @ diff / nk[j], floor)
        model = GmmModel(nk / n, means, covs, dim_i, dim_o, Normalization.identity(d))
        iterations += 1
    model.normalization = norm
    return model, TrainReport(trace, iterations, converged)


def em_fit(data, k: int = 5, seed: int = 0, tol: float = 1e-6, max_iter: int = 300,
           reg: float = 1e-6, dim_i: int = 0, standardize: bool = False, n_init: int = 1):
    """Fit a ``k``-component mixture by expectation-maximisation.

    ``reg`` sets the covariance eigenvalue floor as a fraction of the mean
    data variance (in model space). The floor only acts on eigenvalues that
    fall below it, so well-conditioned fits are plain EM. With ``n_init > 1``
    EM runs from that many k-means++ starts and the highest final
    log-likelihood wins.

    Returns ``(model, report)``.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be an (N, d) array")
    n, d = x.shape
    if not np.all(np.isfinite(x)):
        raise SingularData("data contains non-finite values")
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if n <= k * (d + 1):
        raise SingularData(f"need more than {k * (d + 1)} points for k={k}, d={d}; got {n}")
    norm = Normalization.fit(x) if standardize else Normalization.identity(d)
    z = norm.apply(x)
    var = np.var(z, axis=0)
    if not np.any(var > 0):
        raise SingularData("all data points are identical")
    floor = reg * float(var.mean())
    dim_o = d - dim_i
    best = None
    for init in range(n_init):
        fit = _fit_with_restarts(z, k, seed, init, tol, max_iter, floor, dim_i, dim_o, norm)
        if best is None or fit[1].loglik_trace[-1] > best[1].loglik_trace[-1]:
            best = fit
    return best


def _fit_with_restarts(z, k, seed, init, tol, max_iter, floor, dim_i, dim_o, norm):
    last = None
    for attempt in range(MAX_RESTARTS + 1):
        rng = np.random.default_rng([seed, init, attempt])
        try:
            model, report = _em_once(z, k, rng, tol, max_iter, floor, dim_i, dim_o, norm)
        except EmptyCluster as exc:
            logger.warning("EM restart %d after empty cluster: %s", attempt + 1, exc)
            last = exc
            continue
        report.restarts = attempt
        report.seed = seed
        return model, report
    raise EmptyCluster(f"empty cluster persisted after {MAX_RESTARTS} restarts") from last


def select_k(data, ks=range(2, 11), **kw):
    """Fit each candidate component count and keep the lowest BIC."""
    x = np.asarray(data, dtype=float)
    best = None
    for k in ks:
        try:
            model, report = em_fit(x, k=k, **kw)
        except (EmptyCluster, SingularData):
            continue
        score = bic(model, x)
        if best is None or score < best[0]:
            best = (score, model, report)
    if best is None:
        raise SingularData("no candidate component count could be fitted")
    return best[1], best[2]


# -- regression ---------------------------------------------------------------

def _gmr_cache(model: GmmModel) -> dict:
    if model._gmr is not None:
        return model._gmr
    di = model.dim_i
    if di < 1 or model.dim_o < 1:
        raise ValueError("model has no input/output block split")
    gains, offsets, chols, logdets, cond_covs = [], [], [], [], []
    for k in range(model.n_components):
        s = model.covs[k]
        sii, soi, soo = s[:di, :di], s[di:, :di], s[di:, di:]
        if np.linalg.cond(sii) > MAX_BLOCK_COND:
            raise IllConditionedBlock(f"input covariance block of component {k} is ill-conditioned")
        low = _chol(sii, k)
        gain = np.linalg.solve(sii, soi.T).T
        gains.append(gain)
        offsets.append(model.means[k, di:] - gain @ model.means[k, :di])
        chols.append(low)
        logdets.append(2.0 * np.log(np.diag(low)).sum())
        cond_covs.append(soo - gain @ soi.T)
    model._gmr = {
        "gain": np.array(gains),
        "offset": np.array(offsets),
        "chol": np.array(chols),
        "logdet": np.array(logdets),
        "cond_cov": np.array(cond_covs),
    }
    return model._gmr


def gates(model: GmmModel, inputs) -> np.ndarray:
    """Input-only responsibilities ``h_k`` used to blend component regressions."""
    di = model.dim_i
    zi, single = _as_rows(inputs, di)
    zi = model.normalization.apply(zi, slice(0, di))
    c = _gmr_cache(model)
    with np.errstate(divide="ignore"):
        logp = np.log(model.priors)
    wl = np.empty((len(zi), model.n_components))
    for k in range(model.n_components):
        sol = np.linalg.solve(c["chol"][k], (zi - model.means[k, :di]).T)
        wl[:, k] = logp[k] - 0.5 * (di * LOG_2PI + c["logdet"][k] + np.sum(sol * sol, axis=0))
    h = np.exp(wl - logsumexp(wl, axis=1, keepdims=True))
    return h[0] if single else h


def gmr_predict(model: GmmModel, inputs, return_cov: bool = False):
    """Conditional mean of the output block given the input block.

    With ``return_cov`` the conditional covariance of the mixture (model
    space) is returned as well; it is a diagnostic only.
    """
    di = model.dim_i
    zi, single = _as_rows(inputs, di)
    if not np.all(np.isfinite(zi)):
        raise ValueError("inputs must be finite")
    h = gates(model, zi)
    z = model.normalization.apply(zi, slice(0, di))
    c = _gmr_cache(model)
    mu_k = np.einsum("koi,ni->nko", c["gain"], z) + c["offset"][None]
    mu = np.einsum("nk,nko->no", h, mu_k)
    out = model.normalization.invert(mu, slice(di, None))
    if not return_cov:
        return out[0] if single else out
    second = np.einsum("nk,koq->noq", h, c["cond_cov"]) + np.einsum("nk,nko,nkq->noq", h, mu_k, mu_k)
    cov = second - np.einsum("no,nq->noq", mu, mu)
    return (out[0], cov[0]) if single else (out, cov)
