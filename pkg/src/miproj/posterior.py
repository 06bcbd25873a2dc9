"""Exact Bayesian inference for linearly projected mixture signals.

Given a measurement y = Phi x + noise, the posterior over (class,
component, signal) is available in closed form: component posteriors stay
Gaussian, and the mixture weights update through the projected predictive
densities.  The heavy lifting happens in d-space via the Matrix Inversion
Lemma whenever d < p; the direct p-space form is used when d = p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .mixture import NonPositiveDefiniteError, _cholesky, _logsumexp_rows

__all__ = [
    "MeasurementModel",
    "Posterior",
    "ProjectedModel",
    "class_log_likelihood",
    "infer_posterior",
    "class_posterior",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """Linear measurement: projection Phi (d x p) and noise precision R (d x d)."""

    projection: np.ndarray
    noise_precision: np.ndarray

    def __post_init__(self):
        phi = np.array(self.projection, dtype=float)
        if phi.ndim != 2:
            raise ValueError("projection must be a d x p matrix")
        d, p = phi.shape
        if d < 1 or d > p:
            raise ValueError(f"need 1 <= d <= p, got d={d}, p={p}")
        r = np.array(self.noise_precision, dtype=float)
        if r.shape != (d, d):
            raise ValueError(f"noise_precision must be {d} x {d}")
        if np.abs(r - r.T).max() > 1e-12 * max(1.0, np.abs(r).max()):
            raise ValueError("noise_precision must be symmetric")
        _cholesky(r)
        phi.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "projection", phi)
        object.__setattr__(self, "noise_precision", r)

    @property
    def d(self):
        return self.projection.shape[0]

    @property
    def p(self):
        return self.projection.shape[1]

    def noise_covariance(self):
        chol = np.linalg.cholesky(self.noise_precision)
        eye = np.eye(self.d)
        return linalg.cho_solve((chol, True), eye)


def isotropic_noise(d, nu):
    """Measurement noise precision for covariance nu * I_d."""
    if nu <= 0:
        raise ValueError("noise variance must be positive")
    return (1.0 / nu) * np.eye(d)


@dataclass(frozen=True, eq=False)
class Posterior:
    """All per-measurement posterior quantities for one y."""

    class_weights: np.ndarray
    component_weights: tuple
    component_means: tuple
    component_covs: tuple
    class_means: np.ndarray
    global_mean: np.ndarray
    log_marginal: float


class ProjectedModel:
    """Cached per-(model, measurement) factors for repeated inference.

    Flattens all mixture components class-major and precomputes, per
    component: the projected mean, the d-space predictive covariance with
    its Cholesky factor, and the affine map y -> posterior mean.  ``path``
    selects the Matrix Inversion Lemma route ('mil', default for d < p) or
    the direct p-space route ('direct', default for d = p); both compute
    the same quantities and are cross-checked in tests.
    """

    def __init__(self, model, meas, path=None):
        phi = meas.projection
        d, p = phi.shape
        if p != model.dim:
            raise ValueError(f"projection has {p} columns but model dim is {model.dim}")
        if path is None:
            path = "mil" if d < p else "direct"
        if path not in ("mil", "direct"):
            raise ValueError("path must be 'mil' or 'direct'")
        self.model = model
        self.meas = meas
        self.path = path
        self.d = d
        self.p = p

        comps = []
        slices = []
        log_pi = []
        start = 0
        for gmm in model.classes:
            comps.extend(gmm.components)
            slices.append(slice(start, start + gmm.n_components))
            with np.errstate(divide="ignore"):
                log_pi.append(np.log(gmm.weights))
            start += gmm.n_components
        self.n_comp = len(comps)
        self.class_slices = slices
        self.comp_class = np.concatenate(
            [np.full(s.stop - s.start, m, dtype=np.int64) for m, s in enumerate(slices)]
        )
        self.log_pi = np.concatenate(log_pi)
        with np.errstate(divide="ignore"):
            self.log_w = np.log(model.class_priors)

        self.mu = np.stack([c.mean for c in comps])
        covs = np.stack([c.covariance for c in comps])
        self._covs = covs
        self.phi_mu = self.mu @ phi.T
        rinv = meas.noise_covariance()
        self.rinv = rinv

        # Predictive covariance in measurement space, shared by both paths.
        B = covs @ phi.T
        S = phi @ B + rinv
        S = 0.5 * (S + S.transpose(0, 2, 1))
        self.chol_s = self._batched_cholesky(S, "predictive covariance")
        self.logdet_s = 2.0 * np.sum(np.log(np.diagonal(self.chol_s, axis1=1, axis2=2)), axis=1)

        if path == "mil":
            gain = np.linalg.solve(S, B.transpose(0, 2, 1)).transpose(0, 2, 1)
            self.mean_gain = gain
            self.mean_offset = self.mu - np.einsum("kpd,kd->kp", gain, self.phi_mu)
            self._B = B
        else:
            rphi = meas.noise_precision @ phi
            quad = phi.T @ rphi
            eye = np.eye(p)
            post_cov = np.empty_like(covs)
            gain = np.empty((self.n_comp, p, d))
            offset = np.empty((self.n_comp, p))
            for k in range(self.n_comp):
                chol_om = self._component_chol(covs[k], k)
                prec = quad + linalg.cho_solve((chol_om, True), eye)
                chol_prec = self._batched_cholesky(prec[None], "posterior precision", k)[0]
                post_cov[k] = linalg.cho_solve((chol_prec, True), eye)
                gain[k] = linalg.cho_solve((chol_prec, True), rphi.T)
                offset[k] = linalg.cho_solve(
                    (chol_prec, True), linalg.cho_solve((self._component_chol(covs[k], k), True), self.mu[k])
                )
            self.mean_gain = gain
            self.mean_offset = offset
            self._post_cov = post_cov

    def _component_chol(self, cov, k):
        m = int(self.comp_class[k])
        o = k - self.class_slices[m].start
        return _cholesky(cov, class_id=m, component_id=o)

    def _batched_cholesky(self, mats, what, k_hint=None):
        try:
            return np.linalg.cholesky(mats)
        except np.linalg.LinAlgError:
            for k in range(mats.shape[0]):
                try:
                    np.linalg.cholesky(mats[k])
                except np.linalg.LinAlgError:
                    kk = k_hint if k_hint is not None else k
                    m = int(self.comp_class[kk])
                    o = kk - self.class_slices[m].start
                    raise NonPositiveDefiniteError(
                        f"singular {what} (class {m}, component {o})", class_id=m, component_id=o
                    ) from None
            raise

    def posterior_covs(self):
        """Per-component posterior covariances, shape (K, p, p)."""
        if not hasattr(self, "_post_cov"):
            cov = self._covs - np.einsum("kpd,kqd->kpq", self.mean_gain, self._B)
            self._post_cov = 0.5 * (cov + cov.transpose(0, 2, 1))
        return self._post_cov

    def log_comp_pred(self, Y):
        """log N(y; Phi mu_k, S_k) for all components; shape (n, K)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.empty((Y.shape[0], self.n_comp))
        for k in range(self.n_comp):
            z = linalg.solve_triangular(self.chol_s[k], (Y - self.phi_mu[k]).T, lower=True)
            out[:, k] = -0.5 * (self.d * _LOG_2PI + self.logdet_s[k] + np.einsum("ij,ij->j", z, z))
        return out

    def log_class_pred(self, Y):
        """log p(y|m) for all classes; shape (n, M)."""
        lc = self.log_comp_pred(Y)
        out = np.empty((lc.shape[0], self.model.n_classes))
        for m, s in enumerate(self.class_slices):
            out[:, m] = _logsumexp_rows(self.log_pi[s] + lc[:, s])
        return out

    def posterior_logweights(self, Y):
        """Per-measurement posterior weights in log domain.

        Returns (log w-tilde (n, M), log pi-tilde (n, K), log marginal (n,)).
        """
        lc = self.log_comp_pred(Y)
        n = lc.shape[0]
        M = self.model.n_classes
        log_cls = np.empty((n, M))
        log_pit = np.empty_like(lc)
        for m, s in enumerate(self.class_slices):
            joint = self.log_pi[s] + lc[:, s]
            log_cls[:, m] = _logsumexp_rows(joint)
            log_pit[:, s] = joint - log_cls[:, m][:, None]
        joint_cls = self.log_w + log_cls
        log_marg = _logsumexp_rows(joint_cls)
        log_wt = joint_cls - log_marg[:, None]
        return log_wt, log_pit, log_marg

    def comp_posterior_means(self, Y, k):
        """Posterior means of component k for each row of Y; shape (n, p)."""
        return self.mean_offset[k] + Y @ self.mean_gain[k].T

    def class_posterior_means(self, Y, log_pit):
        """x_y(m) for each row of Y; shape (n, M, p)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        n = Y.shape[0]
        out = np.zeros((n, self.model.n_classes, self.p))
        pit = np.exp(log_pit)
        for m, s in enumerate(self.class_slices):
            for k in range(s.start, s.stop):
                out[:, m, :] += pit[:, k, None] * self.comp_posterior_means(Y, k)
        return out


def class_log_likelihood(model, meas, class_id, y):
    """log p(y | class) under the projected model, via log-sum-exp."""
    if not 0 <= class_id < model.n_classes:
        raise ValueError(f"class_id {class_id} out of range [0, {model.n_classes})")
    work = ProjectedModel(model, meas)
    return float(work.log_class_pred(np.asarray(y, dtype=float)[None, :])[0, class_id])


def infer_posterior(model, meas, y):
    """Full posterior for a single measurement y."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != meas.d:
        raise ValueError(f"y has length {y.size}, expected {meas.d}")
    work = ProjectedModel(model, meas)
    Y = y[None, :]
    log_wt, log_pit, log_marg = work.posterior_logweights(Y)
    class_means = work.class_posterior_means(Y, log_pit)[0]
    wt = np.exp(log_wt[0])
    global_mean = wt @ class_means
    covs = work.posterior_covs()

    comp_w = []
    comp_mu = []
    comp_cov = []
    for s in work.class_slices:
        comp_w.append(np.exp(log_pit[0, s]))
        comp_mu.append(np.stack([work.comp_posterior_means(Y, k)[0] for k in range(s.start, s.stop)]))
        comp_cov.append(covs[s])
    return Posterior(
        class_weights=wt,
        component_weights=tuple(comp_w),
        component_means=tuple(comp_mu),
        component_covs=tuple(comp_cov),
        class_means=class_means,
        global_mean=global_mean,
        log_marginal=float(log_marg[0]),
    )


def class_posterior(model, meas, y):
    """Posterior class probabilities p(m|y); sums to 1."""
    y = np.asarray(y, dtype=float).reshape(-1)
    work = ProjectedModel(model, meas)
    log_wt, _, _ = work.posterior_logweights(y[None, :])
    return np.exp(log_wt[0])
