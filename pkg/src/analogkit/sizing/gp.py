"""Gaussian process regression with a squared-exponential ARD kernel.

Zero prior mean.  With K = k(X, X) + (noise + jitter) I, the posterior at
x* is

    mu*     = k(x*, X)^T K^-1 y
    sigma*^2 = k(x*, x*) - k(x*, X)^T K^-1 k(x*, X)

computed through a Cholesky factorization.  If factorization fails the
jitter is escalated multiplicatively up to a ceiling before giving up.
Hyperparameters (per-dimension lengthscales, signal variance, noise
variance) are either supplied, derived from a median-distance heuristic,
or tuned by marginal-likelihood ascent with analytic gradients.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize


class GPError(Exception):
    pass


@dataclass(frozen=True)
class Hyperparams:
    lengthscales: tuple[float, ...]
    signal_var: float = 1.0
    noise_var: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lengthscales",
                           tuple(float(l) for l in self.lengthscales))
        if any(l <= 0 for l in self.lengthscales):
            raise GPError("lengthscales must be positive")
        if self.signal_var <= 0:
            raise GPError("signal variance must be positive")
        if self.noise_var < 0:
            raise GPError("noise variance must be non-negative")


def kernel(a: np.ndarray, b: np.ndarray, hyper: Hyperparams) -> np.ndarray:
    """SE-ARD covariance between row sets a (n,d) and b (m,d)."""
    ls = np.asarray(hyper.lengthscales)
    diff = a[:, None, :] / ls - b[None, :, :] / ls
    sq = np.sum(diff * diff, axis=-1)
    return hyper.signal_var * np.exp(-0.5 * sq)


@dataclass(frozen=True)
class GPModel:
    X: np.ndarray
    y: np.ndarray
    hyper: Hyperparams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float


def median_heuristic(X: np.ndarray, y: np.ndarray,
                     noise_var: float = 1e-6) -> Hyperparams:
    """Per-dimension median pairwise distance lengthscales."""
    n, d = X.shape
    ls = []
    for j in range(d):
        col = X[:, j]
        dist = np.abs(col[:, None] - col[None, :])
        vals = dist[np.triu_indices(n, k=1)]
        vals = vals[vals > 0]
        ls.append(float(np.median(vals)) if vals.size else 1.0)
    sv = float(np.var(y)) or 1.0
    return Hyperparams(tuple(ls), sv, noise_var)


def _factor(X: np.ndarray, hyper: Hyperparams, jitter: float,
            max_jitter: float):
    K = kernel(X, X, hyper)
    n = X.shape[0]
    j = jitter
    while True:
        try:
            c, low = cho_factor(K + (hyper.noise_var + j) * np.eye(n),
                                lower=True)
            return np.tril(c), j
        except np.linalg.LinAlgError:
            j = j * 100 if j > 0 else 1e-12
            if j > max_jitter:
                raise GPError(
                    f"covariance not positive definite even with jitter "
                    f"{max_jitter:g}") from None


def gp_fit(X, y, hyper: Hyperparams | None = None, optimize: bool = False,
           jitter: float = 1e-12, max_jitter: float = 1e-2) -> GPModel:
    """Fit the GP; duplicate input rows are rejected up front."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n == 0:
        raise GPError("need at least one observation")
    if y.shape[0] != n:
        raise GPError(f"X has {n} rows but y has {y.shape[0]} entries")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise GPError("inputs and outputs must be finite")
    if np.unique(X, axis=0).shape[0] != n:
        raise GPError("duplicate input rows")
    if hyper is None:
        hyper = median_heuristic(X, y)
    if len(hyper.lengthscales) != d:
        raise GPError(f"{len(hyper.lengthscales)} lengthscales for "
                      f"{d}-dimensional inputs")
    if optimize and n >= 3:
        hyper = _optimize_mll(X, y, hyper, jitter, max_jitter)
    L, used = _factor(X, hyper, jitter, max_jitter)
    alpha = cho_solve((L, True), y)
    return GPModel(X=X, y=y, hyper=hyper, chol=L, alpha=alpha, jitter=used)


def gp_predict(model: GPModel, Xstar) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query rows.

    Variance is clamped at zero; a clamp beyond numerical dust (-1e-10)
    triggers a warning because it points at an ill-conditioned fit.
    """
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    kstar = kernel(Xstar, model.X, model.hyper)
    mu = kstar @ model.alpha
    v = cho_solve((model.chol, True), kstar.T)
    # latent-function posterior: prior variance is k(x*, x*) = signal_var
    var = model.hyper.signal_var - np.sum(kstar * v.T, axis=1)
    worst = float(np.min(var)) if var.size else 0.0
    if worst < -1e-10:
        warnings.warn(f"negative posterior variance {worst:g} clamped; "
                      "the fit is ill-conditioned")
    return mu, np.maximum(var, 0.0)


def log_marginal_likelihood(model: GPModel) -> float:
    n = model.X.shape[0]
    return float(-0.5 * model.y @ model.alpha
                 - np.sum(np.log(np.diag(model.chol)))
                 - 0.5 * n * math.log(2.0 * math.pi))


# ---------------------------------------------------------------------------
# marginal-likelihood ascent

_LOG_LS_BOUNDS = (math.log(1e-2), math.log(1e1))
_LOG_SV_BOUNDS = (math.log(1e-3), math.log(1e3))
_LOG_NV_BOUNDS = (math.log(1e-9), math.log(1e-1))


def _mll_and_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray,
                  jitter: float) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood and gradient in log-parameters."""
    n, d = X.shape
    ls = np.exp(theta[:d])
    sv = math.exp(theta[d])
    nv = math.exp(theta[d + 1])
    scaled = X / ls
    sq = np.sum(scaled * scaled, axis=1)
    sqdist = sq[:, None] + sq[None, :] - 2.0 * scaled @ scaled.T
    np.maximum(sqdist, 0.0, out=sqdist)
    K0 = sv * np.exp(-0.5 * sqdist)
    K = K0 + (nv + jitter) * np.eye(n)
    try:
        c, low = cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    L = np.tril(c)
    alpha = cho_solve((L, True), y)
    nll = 0.5 * y @ alpha + np.sum(np.log(np.diag(L))) \
        + 0.5 * n * math.log(2.0 * math.pi)
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv  # d(logML)/dK = W/2
    grad = np.empty_like(theta)
    for j in range(d):
        colj = X[:, j]
        Dj = (colj[:, None] - colj[None, :]) ** 2
        dK = K0 * (Dj / ls[j] ** 2)
        grad[j] = -0.5 * np.sum(W * dK)
    grad[d] = -0.5 * np.sum(W * K0)
    grad[d + 1] = -0.5 * np.trace(W) * nv
    return float(nll), grad


def _optimize_mll(X: np.ndarray, y: np.ndarray, init: Hyperparams,
                  jitter: float, max_jitter: float) -> Hyperparams:
    d = X.shape[1]
    theta0 = np.concatenate([
        np.log(np.clip(init.lengthscales, math.exp(_LOG_LS_BOUNDS[0]),
                       math.exp(_LOG_LS_BOUNDS[1]))),
        [math.log(min(max(init.signal_var, math.exp(_LOG_SV_BOUNDS[0])),
                      math.exp(_LOG_SV_BOUNDS[1])))],
        [math.log(min(max(init.noise_var, math.exp(_LOG_NV_BOUNDS[0])),
                      math.exp(_LOG_NV_BOUNDS[1])))],
    ])
    bounds = [_LOG_LS_BOUNDS] * d + [_LOG_SV_BOUNDS, _LOG_NV_BOUNDS]
    res = minimize(_mll_and_grad, theta0, args=(X, y, jitter), jac=True,
                   method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 40})
    theta = res.x
    return Hyperparams(tuple(np.exp(theta[:d])),
                       float(math.exp(theta[d])),
                       float(math.exp(theta[d + 1])))
