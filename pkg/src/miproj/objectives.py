"""Information objectives for projection design.

Covers the Monte-Carlo Shannon mutual information with its error bounds,
the closed-form quadratic-Renyi surrogate built from Gaussian overlap
integrals, and the single-Gaussian-per-class log-det surrogates (the
information-discriminant and Fisher-discriminant objectives) with
analytic gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .mixture import NonPositiveDefiniteError, sample_joint, _logsumexp_rows
from .posterior import ProjectedModel

__all__ = [
    "GaussStats",
    "FanoBounds",
    "estimate_shannon_mi",
    "fano_bounds",
    "renyi_quadratic_mi",
    "renyi_mi_gradient",
    "ida_objective",
    "ida_gradient",
    "lda_objective",
]

_LOG_2PI = math.log(2.0 * math.pi)
_LN_2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class GaussStats:
    """Single-Gaussian-per-class summary: means, covariances, priors.

    pooled_cov is the covariance of the full mixture (within plus
    between); grand_mean its mean.  Both must reproduce their defining
    formulas from the per-class fields.
    """

    class_means: np.ndarray
    class_covs: np.ndarray
    priors: np.ndarray
    pooled_cov: np.ndarray
    grand_mean: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.class_means, dtype=float)
        covs = np.asarray(self.class_covs, dtype=float)
        priors = np.asarray(self.priors, dtype=float)
        grand = priors @ means
        pooled = np.einsum("m,mpq->pq", priors, covs)
        dm = means - grand
        pooled = pooled + np.einsum("m,mp,mq->pq", priors, dm, dm)
        scale = max(1.0, float(np.abs(pooled).max()))
        if np.abs(pooled - self.pooled_cov).max() > 1e-10 * scale:
            raise ValueError("pooled_cov does not reproduce its defining formula")
        if np.abs(grand - self.grand_mean).max() > 1e-10 * max(1.0, float(np.abs(grand).max())):
            raise ValueError("grand_mean does not reproduce its defining formula")

    @classmethod
    def from_moments(cls, class_means, class_covs, priors):
        means = np.asarray(class_means, dtype=float)
        covs = np.asarray(class_covs, dtype=float)
        priors = np.asarray(priors, dtype=float)
        grand = priors @ means
        dm = means - grand
        pooled = np.einsum("m,mpq->pq", priors, covs) + np.einsum("m,mp,mq->pq", priors, dm, dm)
        return cls(means, covs, priors, pooled, grand)

    @classmethod
    def from_model(cls, model):
        """Moment-match each class mixture to a single Gaussian."""
        means = np.stack([g.mean() for g in model.classes])
        covs = np.stack([g.moment_covariance() for g in model.classes])
        return cls.from_moments(means, covs, model.class_priors)

    @property
    def n_classes(self):
        return self.class_means.shape[0]

    @property
    def dim(self):
        return self.class_means.shape[1]

    def within_cov(self):
        return np.einsum("m,mpq->pq", self.priors, self.class_covs)

    def between_cov(self):
        dm = self.class_means - self.grand_mean
        return np.einsum("m,mp,mq->pq", self.priors, dm, dm)


@dataclass(frozen=True)
class FanoBounds:
    """Bayes-error bounds from the conditional entropy H(C|Y).

    cond_entropy is in nats; the bounds follow the binary-entropy
    normalization, so they divide the conditional entropy in bits.
    ``clamped`` reports whether the supplied MI was pulled into [0, H(C)].
    """

    cond_entropy: float
    lower: float
    upper: float
    clamped: bool = False


def estimate_shannon_mi(model, meas, n_particles, seed):
    """Monte-Carlo Shannon mutual information between class and measurement.

    Averages log p(y|c) - log p(y) over joint draws; returns the mean and
    its standard error, both in nats.
    """
    if n_particles < 2:
        raise ValueError("n_particles must be >= 2")
    labels, _, Y = sample_joint(model, meas, n_particles, seed)
    work = ProjectedModel(model, meas)
    terms = np.empty(n_particles)
    chunk = 4096
    for start in range(0, n_particles, chunk):
        Yc = Y[start : start + chunk]
        log_cls = work.log_class_pred(Yc)
        log_marg = _logsumexp_rows(work.log_w + log_cls)
        rows = np.arange(Yc.shape[0])
        terms[start : start + chunk] = log_cls[rows, labels[start : start + chunk]] - log_marg
    mi = float(np.mean(terms))
    std_err = float(np.std(terms, ddof=1) / math.sqrt(n_particles))
    return mi, std_err


def fano_bounds(mi, class_priors):
    """Bounds on the Bayes error from MI (nats) and the class priors.

    The upper bound halves the conditional entropy in bits; the lower
    bound is the conservative linearization that replaces the binary
    entropy of the error rate by its 1-bit maximum.
    """
    w = np.asarray(class_priors, dtype=float)
    pos = w[w > 0]
    h_prior = float(-(pos * np.log(pos)).sum())
    clamped = False
    mi = float(mi)
    if mi < 0.0:
        mi, clamped = 0.0, True
    if mi > h_prior:
        mi, clamped = h_prior, True
    cond = h_prior - mi
    cond_bits = cond / _LN_2
    upper = cond_bits / 2.0
    if w.size >= 2:
        lower = max(0.0, (cond_bits - 1.0) / math.log2(w.size))
    else:
        lower = 0.0
    return FanoBounds(cond_entropy=cond, lower=lower, upper=upper, clamped=clamped)


def _flatten_components(model, meas):
    """Projected per-component quantities for the overlap identity."""
    phi = meas.projection
    mus = []
    log_q = []
    class_slices = []
    covs = []
    start = 0
    for m, gmm in enumerate(model.classes):
        with np.errstate(divide="ignore"):
            log_q.append(np.log(model.class_priors[m]) + np.log(gmm.weights))
        for comp in gmm.components:
            mus.append(comp.mean)
            covs.append(comp.covariance)
        class_slices.append(slice(start, start + gmm.n_components))
        start += gmm.n_components
    mu = np.stack(mus)
    covs = np.stack(covs)
    B = covs @ phi.T
    pcov = phi @ B
    pcov = 0.5 * (pcov + pcov.transpose(0, 2, 1))
    return {
        "mu": mu,
        "phi_mu": mu @ phi.T,
        "pcov": pcov,
        "phiom": B.transpose(0, 2, 1),
        "log_q": np.concatenate(log_q),
        "class_slices": class_slices,
        "rinv2": 2.0 * meas.noise_covariance(),
        "d": phi.shape[0],
    }


def _log_overlap_rows(flat, a, idx):
    """log of the Gaussian overlap integral between component a and idx."""
    cov = flat["pcov"][a] + flat["pcov"][idx] + flat["rinv2"]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NonPositiveDefiniteError("singular overlap covariance") from None
    diff = flat["phi_mu"][a] - flat["phi_mu"][idx]
    z = np.linalg.solve(chol, diff[:, :, None])[:, :, 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    return -0.5 * (flat["d"] * _LOG_2PI + logdet + np.einsum("kd,kd->k", z, z))


def _pairset_logz(flat, idx, log_w):
    rows = np.empty((idx.size, idx.size))
    for i, a in enumerate(idx):
        rows[i] = _log_overlap_rows(flat, a, idx)
    return float(_logsumexp_rows((log_w[:, None] + log_w[None, :] + rows).reshape(-1)[None, :])[0]), rows


def _pairset_grad(flat, idx, log_w, log_rows, log_z):
    """Gradient of log of the summed pairwise overlaps."""
    grad = np.zeros((flat["d"], flat["phiom"].shape[2]))
    for i, a in enumerate(idx):
        cov = flat["pcov"][a] + flat["pcov"][idx] + flat["rinv2"]
        v = flat["phi_mu"][a] - flat["phi_mu"][idx]
        delta = flat["mu"][a] - flat["mu"][idx]
        pa = flat["phiom"][a] + flat["phiom"][idx]
        u = np.linalg.solve(cov, v[:, :, None])[:, :, 0]
        t1 = -np.linalg.solve(cov, pa)
        t = np.einsum("kdp,kd->kp", pa, u)
        omega = np.exp(log_w[i] + log_w + log_rows[i] - log_z)
        contrib = t1 - np.einsum("kd,kp->kdp", u, delta) + np.einsum("kd,kp->kdp", u, t)
        grad += np.einsum("k,kdp->dp", omega, contrib)
    return grad


def renyi_quadratic_mi(model, meas):
    """Closed-form quadratic-Renyi mutual information.

    Every squared-density integral reduces to a double sum of Gaussian
    overlap evaluations; no sampling is involved.
    """
    flat = _flatten_components(model, meas)
    all_idx = np.arange(flat["mu"].shape[0])
    log_z_marg, _ = _pairset_logz(flat, all_idx, flat["log_q"])
    total = -log_z_marg
    for m, s in enumerate(flat["class_slices"]):
        idx = all_idx[s]
        with np.errstate(divide="ignore"):
            log_pi = np.log(model.classes[m].weights)
        log_z_m, _ = _pairset_logz(flat, idx, log_pi)
        total += float(model.class_priors[m]) * log_z_m
    return total


def renyi_mi_gradient(model, meas):
    """Analytic gradient of the quadratic-Renyi objective in Phi.

    Differentiates each overlap term through its covariance and mean;
    assembled as overlap-weighted sums per pair set so that identical
    class conditionals cancel exactly.
    """
    flat = _flatten_components(model, meas)
    all_idx = np.arange(flat["mu"].shape[0])
    log_z_marg, rows = _pairset_logz(flat, all_idx, flat["log_q"])
    grad = -_pairset_grad(flat, all_idx, flat["log_q"], rows, log_z_marg)
    for m, s in enumerate(flat["class_slices"]):
        idx = all_idx[s]
        with np.errstate(divide="ignore"):
            log_pi = np.log(model.classes[m].weights)
        log_z_m, rows_m = _pairset_logz(flat, idx, log_pi)
        grad += float(model.class_priors[m]) * _pairset_grad(flat, idx, log_pi, rows_m, log_z_m)
    return grad


def _chol_logdet(mat, what):
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise NonPositiveDefiniteError(f"singular {what}") from None
    return chol, 2.0 * float(np.log(np.diag(chol)).sum())


def _projected(stats, meas, cov):
    phi = meas.projection
    return phi @ cov @ phi.T + meas.noise_covariance()


def ida_objective(stats, meas):
    """Log-det surrogate with a single-Gaussian marginal entropy."""
    _, logdet_tot = _chol_logdet(_projected(stats, meas, stats.pooled_cov), "projected pooled covariance")
    total = 0.5 * logdet_tot
    for w, cov in zip(stats.priors, stats.class_covs):
        _, logdet_m = _chol_logdet(_projected(stats, meas, cov), "projected class covariance")
        total -= 0.5 * float(w) * logdet_m
    return total


def ida_gradient(stats, meas):
    """Gradient of ida_objective from log-det matrix calculus."""
    phi = meas.projection
    s_tot = _projected(stats, meas, stats.pooled_cov)
    chol, _ = _chol_logdet(s_tot, "projected pooled covariance")
    grad = linalg.cho_solve((chol, True), phi @ stats.pooled_cov)
    for w, cov in zip(stats.priors, stats.class_covs):
        s_m = _projected(stats, meas, cov)
        chol_m, _ = _chol_logdet(s_m, "projected class covariance")
        grad -= float(w) * linalg.cho_solve((chol_m, True), phi @ cov)
    return grad


def lda_objective(stats, meas):
    """Log-det Fisher surrogate: total versus within-class projected scatter."""
    _, logdet_tot = _chol_logdet(_projected(stats, meas, stats.pooled_cov), "projected pooled covariance")
    _, logdet_w = _chol_logdet(_projected(stats, meas, stats.within_cov()), "projected within-class covariance")
    return 0.5 * (logdet_tot - logdet_w)
