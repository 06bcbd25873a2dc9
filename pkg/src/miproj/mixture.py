"""Class-conditional Gaussian mixture signal model.

Each class label ``m`` carries its own Gaussian mixture over the signal
space; the global signal density is the prior-weighted mixture of those
mixtures.  This module owns the model types, log-density evaluation,
joint sampling of (label, signal, measurement) triples, and per-class
EM fitting with covariance regularization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "NonPositiveDefiniteError",
    "GaussianComponent",
    "ClassGmm",
    "SignalModel",
    "EmConfig",
    "gaussian_logpdf",
    "fit_class_gmm",
    "sample_joint",
]

_LOG_2PI = math.log(2.0 * math.pi)

# Fixed partition size for chunked RNG streams.  Each chunk draws from an
# independent stream keyed by (seed, chunk index), so results do not depend
# on how chunks are distributed over workers.
SAMPLE_CHUNK = 1024


class NonPositiveDefiniteError(ValueError):
    """A covariance that must be positive definite failed its factorization.

    ``class_id`` and ``component_id`` identify the offending mixture
    component when the matrix belongs to a model; both are None for
    free-standing matrices.
    """

    def __init__(self, message, class_id=None, component_id=None):
        super().__init__(message)
        self.class_id = class_id
        self.component_id = component_id


def _flat_entropy(seed):
    """Flatten a seed (int or arbitrarily nested int tuples) to a list."""
    if isinstance(seed, (tuple, list)):
        out = []
        for part in seed:
            out.extend(_flat_entropy(part))
        return out
    return [int(seed)]


def rng_stream(seed, *key):
    """Independent generator for partition ``key`` of the stream ``seed``.

    All stochastic operations in this package derive their generators here,
    so a (seed, partition index) pair always maps to the same stream
    regardless of worker count.  ``seed`` may be an int or a nested tuple
    of ints (composed seeds flatten to one entropy sequence).
    """
    return np.random.default_rng(
        np.random.SeedSequence(entropy=_flat_entropy(seed), spawn_key=tuple(key))
    )


def _as_matrix(a, name):
    a = np.array(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _check_symmetric(cov, name, rtol=1e-12):
    scale = max(1.0, float(np.abs(cov).max()))
    skew = float(np.abs(cov - cov.T).max())
    if skew > rtol * scale:
        raise ValueError(f"{name} is not symmetric (max asymmetry {skew:.3e})")


def _cholesky(cov, class_id=None, component_id=None):
    """Lower Cholesky factor, raising a structured error when not PD."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        where = ""
        if class_id is not None:
            where = f" (class {class_id}" + (
                f", component {component_id})" if component_id is not None else ")"
            )
        raise NonPositiveDefiniteError(
            f"covariance is not positive definite{where}",
            class_id=class_id,
            component_id=component_id,
        ) from None


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One Gaussian component: mean vector and symmetric PD covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = _as_matrix(self.covariance, "covariance")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        _check_symmetric(cov, "covariance")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self):
        return self.mean.size


@dataclass(frozen=True, eq=False)
class ClassGmm:
    """Gaussian mixture for one class: weights and components."""

    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        comps = tuple(self.components)
        if len(comps) < 1 or w.size != len(comps):
            raise ValueError("need at least one component and one weight per component")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1 within 1e-12")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValueError("components disagree on dimension")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def n_components(self):
        return len(self.components)

    @property
    def dim(self):
        return self.components[0].dim

    def mean(self):
        """Mixture mean of the class."""
        return np.einsum("o,op->p", self.weights, np.stack([c.mean for c in self.components]))

    def moment_covariance(self):
        """Mixture covariance of the class (law of total covariance)."""
        mu = self.mean()
        cov = np.zeros((self.dim, self.dim))
        for w, c in zip(self.weights, self.components):
            dm = c.mean - mu
            cov += w * (c.covariance + np.outer(dm, dm))
        return cov


@dataclass(frozen=True, eq=False)
class SignalModel:
    """Prior over (class, signal): class priors and per-class mixtures."""

    class_priors: np.ndarray
    classes: tuple
    dim: int = field(default=0)

    def __post_init__(self):
        w = np.array(self.class_priors, dtype=float).reshape(-1)
        classes = tuple(self.classes)
        if len(classes) < 1 or w.size != len(classes):
            raise ValueError("need at least one class and one prior per class")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("class priors must be nonnegative and sum to 1 within 1e-12")
        dims = {g.dim for g in classes}
        if len(dims) != 1:
            raise ValueError("classes disagree on signal dimension")
        p = dims.pop()
        if self.dim not in (0, p):
            raise ValueError(f"declared dim {self.dim} does not match component dim {p}")
        w.setflags(write=False)
        object.__setattr__(self, "class_priors", w)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "dim", p)

    @property
    def n_classes(self):
        return len(self.classes)

    def class_mean(self, m):
        return self.classes[m].mean()

    def grand_mean(self):
        means = np.stack([g.mean() for g in self.classes])
        return self.class_priors @ means


@dataclass(frozen=True)
class EmConfig:
    """EM fitting controls.

    ``reg_floor`` is the minimum covariance eigenvalue enforced after every
    M-step; None selects 1e-6 times the mean per-feature variance of the
    training sample.
    """

    max_iters: int = 200
    loglik_tol: float = 1e-7
    reg_floor: float | None = None
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.reg_floor is not None and self.reg_floor <= 0:
            raise ValueError("reg_floor must be > 0")


def gaussian_logpdf(x, mean, covariance):
    """Log density of N(mean, covariance) at ``x``.

    Evaluated through the Cholesky factor; the quadratic form and the
    log-determinant are never exponentiated.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = _as_matrix(covariance, "covariance")
    if x.size != mean.size or cov.shape != (x.size, x.size):
        raise ValueError("dimension mismatch between x, mean, and covariance")
    chol = _cholesky(cov)
    z = linalg.solve_triangular(chol, x - mean, lower=True)
    logdet = 2.0 * float(np.log(np.diag(chol)).sum())
    return -0.5 * (x.size * _LOG_2PI + logdet + float(z @ z))


def _logpdf_rows(X, mean, chol):
    """Row-wise log N(x; mean, L L^T) for X of shape (n, p)."""
    z = linalg.solve_triangular(chol, (X - mean).T, lower=True)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (X.shape[1] * _LOG_2PI + logdet + np.einsum("ij,ij->j", z, z))


def _logsumexp_rows(a):
    """Log-sum-exp over the last axis, safe against -inf rows."""
    amax = np.max(a, axis=-1, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - amax), axis=-1)) + amax[..., 0]
    return out


def _floor_eigenvalues(cov, floor):
    """Symmetrize and raise eigenvalues of ``cov`` to at least ``floor``."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] >= floor:
        return cov
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def _kmeanspp_centers(X, k, rng):
    """k-means++ seeding: spread initial centers by squared distance."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    idx = int(rng.integers(n))
    centers[0] = X[idx]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))
    return centers


def _em_run(X, k, floor, max_iters, tol, rng):
    """One EM run; returns (weights, means, covs, loglik_trace)."""
    n, p = X.shape
    means = _kmeanspp_centers(X, k, rng)
    base_cov = _floor_eigenvalues(np.cov(X, rowvar=False, bias=True).reshape(p, p), floor)
    covs = np.repeat(base_cov[None, :, :], k, axis=0)
    weights = np.full(k, 1.0 / k)
    trace = []
    log_resp = np.empty((n, k))
    for _ in range(max_iters):
        for j in range(k):
            chol = _cholesky(covs[j])
            log_resp[:, j] = np.log(weights[j]) + _logpdf_rows(X, means[j], chol)
        log_norm = _logsumexp_rows(log_resp)
        loglik = float(log_norm.sum())
        resp = np.exp(log_resp - log_norm[:, None])

        counts = resp.sum(axis=0)
        dead = set(np.flatnonzero(counts < 1e-8 * n).tolist())
        if dead:
            # Re-seed starved components at the worst-explained point.
            worst = int(np.argmin(log_norm))
            for j in dead:
                means[j] = X[worst]
                covs[j] = base_cov
                counts[j] = 1.0
        weights = counts / counts.sum()
        for j in range(k):
            if j in dead:
                continue
            r = resp[:, j]
            nj = counts[j]
            means[j] = (r @ X) / nj
            D = X - means[j]
            covs[j] = _floor_eigenvalues((D.T * r) @ D / nj, floor)

        trace.append(loglik)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= tol * (1.0 + abs(trace[-2])):
            break
    return weights, means, covs, trace


def fit_class_gmm(samples, n_components, cfg, return_info=False):
    """Fit a Gaussian mixture to one class's samples by restarted EM.

    The best restart by final training log-likelihood wins.  Every M-step
    covariance is symmetrized and eigenvalue-floored at ``cfg.reg_floor``.
    With ``return_info=True`` also returns a dict with the per-restart
    log-likelihood traces and the resolved floor.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n < 1:
        raise ValueError("empty sample set")
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if n_components > n:
        raise ValueError(f"n_components={n_components} exceeds sample count {n}: cannot initialize distinct centers")

    floor = cfg.reg_floor
    if floor is None:
        floor = max(1e-6 * float(np.mean(np.var(X, axis=0))), 1e-12)

    if n_components == 1:
        # Closed form: EM converges in one step.
        mean = X.mean(axis=0)
        D = X - mean
        cov = D.T @ D / n + floor * np.eye(p)
        gmm = ClassGmm(weights=[1.0], components=(GaussianComponent(mean, cov),))
        if return_info:
            chol = _cholesky(cov)
            ll = float(_logpdf_rows(X, mean, chol).sum())
            return gmm, {"loglik_traces": [[ll]], "reg_floor": floor}
        return gmm

    best = None
    traces = []
    for r in range(cfg.restarts):
        rng = rng_stream(cfg.seed, r)
        weights, means, covs, trace = _em_run(X, n_components, floor, cfg.max_iters, cfg.loglik_tol, rng)
        traces.append(trace)
        if best is None or trace[-1] > best[3][-1]:
            best = (weights, means, covs, trace)

    weights, means, covs, _ = best
    comps = tuple(GaussianComponent(means[j], covs[j]) for j in range(n_components))
    gmm = ClassGmm(weights=weights / weights.sum(), components=comps)
    if return_info:
        return gmm, {"loglik_traces": traces, "reg_floor": floor}
    return gmm


def model_cholesky_factors(model):
    """Lower Cholesky factors of every component covariance, flattened.

    Components are ordered class-major; errors carry (class, component) ids.
    """
    factors = []
    for m, gmm in enumerate(model.classes):
        for o, comp in enumerate(gmm.components):
            factors.append(_cholesky(comp.covariance, class_id=m, component_id=o))
    return factors


def sample_joint(model, meas, n, seed):
    """Draw n joint samples: labels ~ priors, x ~ class mixture, y = Phi x + noise.

    Sampling is partitioned into fixed-size chunks with per-chunk RNG
    streams, so the result is identical for any worker layout.
    """
    phi = meas.projection
    if phi.shape[1] != model.dim:
        raise ValueError(f"projection has {phi.shape[1]} columns but model dim is {model.dim}")
    if n < 1:
        raise ValueError("n must be >= 1")
    d = phi.shape[0]
    M = model.n_classes
    chols = model_cholesky_factors(model)
    offsets = np.cumsum([0] + [g.n_components for g in model.classes])
    chol_r = _cholesky(meas.noise_precision)

    labels = np.empty(n, dtype=np.int64)
    x = np.empty((n, model.dim))
    y = np.empty((n, d))
    for ci, start in enumerate(range(0, n, SAMPLE_CHUNK)):
        stop = min(start + SAMPLE_CHUNK, n)
        nc = stop - start
        rng = rng_stream(seed, ci)
        lab = rng.choice(M, size=nc, p=model.class_priors)
        comp = np.empty(nc, dtype=np.int64)
        for m in range(M):
            sel = np.flatnonzero(lab == m)
            if sel.size:
                comp[sel] = rng.choice(model.classes[m].n_components, size=sel.size, p=model.classes[m].weights)
        z = rng.standard_normal((nc, model.dim))
        xc = np.empty((nc, model.dim))
        for m in range(M):
            for o in range(model.classes[m].n_components):
                sel = np.flatnonzero((lab == m) & (comp == o))
                if sel.size:
                    c = model.classes[m].components[o]
                    xc[sel] = c.mean + z[sel] @ chols[offsets[m] + o].T
        ze = rng.standard_normal((nc, d))
        # noise covariance is R^{-1} = L^{-T} L^{-1} for R = L L^T
        eps = linalg.solve_triangular(chol_r, ze.T, lower=True, trans="T").T
        labels[start:stop] = lab
        x[start:stop] = xc
        y[start:stop] = xc @ phi.T + eps
    return labels, x, y
