"""Gaussian mixture fitting by expectation-maximization.

Shared by the per-feature density estimator (1-D) and the likelihood
fitness metric (full covariance). Initialization is k-means++ without
Lloyd refinement; EM runs until the mean log-likelihood improves by
less than ``tol`` or ``max_iter`` is reached.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmDegenerateError
from .seeding import rng as derive_rng

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GmmFit:
    weights: np.ndarray  # [k]
    means: np.ndarray  # [k, d]
    covariances: np.ndarray  # [k, d, d]
    mean_loglik: float
    n_iter: int


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    for _ in range(1, k):
        d2 = ((x[:, None, :] - np.asarray(centers)[None, :, :]) ** 2).sum(-1).min(1)
        total = d2.sum()
        if total <= 0.0:
            # All points coincide with a chosen center; fall back to uniform.
            centers.append(x[rng.integers(n)])
        else:
            centers.append(x[rng.choice(n, p=d2 / total)])
    return np.asarray(centers)


def _component_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise EmDegenerateError(f"singular covariance: {exc}") from exc
    diff = x - mean
    sol = np.linalg.solve(chol, diff.T)
    maha = (sol**2).sum(0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (d * _LOG_2PI + logdet + maha)


def _log_joint(x, weights, means, covs) -> np.ndarray:
    cols = [
        np.log(weights[j]) + _component_logpdf(x, means[j], covs[j])
        for j in range(len(weights))
    ]
    return np.stack(cols, axis=1)  # [n, k]


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def fit_gmm(
    x: np.ndarray,
    n_components: int,
    seed: int,
    *,
    tol: float = 1e-6,
    max_iter: int = 200,
    var_floor: float = 1e-6,
) -> GmmFit:
    """Fit a ``n_components``-component full-covariance mixture to ``x`` [n, d].

    The per-iteration mean log-likelihood must never decrease; a decrease
    beyond float tolerance raises EmDegenerateError rather than returning
    a silently broken fit.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise EmDegenerateError(f"expected a 2-D sample matrix, got shape {x.shape}")
    n, d = x.shape
    if n_components < 1:
        raise EmDegenerateError("n_components must be >= 1")
    if n < n_components:
        raise EmDegenerateError(f"{n} rows cannot support {n_components} components")

    rng = derive_rng(seed, "gmm-init")
    means = _kmeanspp_centers(x, n_components, rng).copy()
    base_cov = np.atleast_2d(np.cov(x.T)) if n > 1 else np.zeros((d, d))
    floor_eye = var_floor * np.eye(d)
    covs = np.stack([base_cov + floor_eye for _ in range(n_components)])
    weights = np.full(n_components, 1.0 / n_components)

    prev = -np.inf
    ll = prev
    it = 0
    for it in range(1, max_iter + 1):
        log_joint = _log_joint(x, weights, means, covs)
        norm = _logsumexp_rows(log_joint)
        ll = float(norm.mean())
        if not np.isfinite(ll):
            raise EmDegenerateError("non-finite log-likelihood during EM")
        if ll < prev - 1e-8:
            raise EmDegenerateError(
                f"log-likelihood decreased at iteration {it}: {prev} -> {ll}"
            )
        if ll - prev < tol and it > 1:
            break
        prev = ll

        resp = np.exp(log_joint - norm[:, None])
        nk = np.maximum(resp.sum(0), 1e-12)
        weights = resp.sum(0) / n
        weights = weights / weights.sum()
        means = (resp.T @ x) / nk[:, None]
        new_covs = np.empty_like(covs)
        for j in range(n_components):
            diff = x - means[j]
            new_covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j] + floor_eye
        covs = new_covs

    return GmmFit(weights=weights, means=means, covariances=covs, mean_loglik=ll, n_iter=it)


def gmm_score(fit: GmmFit, x: np.ndarray) -> np.ndarray:
    """Per-row log-density under the fitted mixture."""
    x = np.asarray(x, dtype=np.float64)
    return _logsumexp_rows(_log_joint(x, fit.weights, fit.means, fit.covariances))


def gmm_sample(fit: GmmFit, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points: component by weight, then the component Gaussian."""
    k, d = fit.means.shape
    comps = rng.choice(k, size=n, p=fit.weights / fit.weights.sum())
    out = np.empty((n, d))
    for j in range(k):
        mask = comps == j
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        chol = np.linalg.cholesky(fit.covariances[j])
        out[mask] = fit.means[j] + rng.standard_normal((cnt, d)) @ chol.T
    return out
