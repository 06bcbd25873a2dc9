"""Monte-Carlo estimation of the posterior-scatter matrices.

The mutual-information gradient needs the equivalent MMSE matrix: the
expected between-class scatter of posterior means.  Conditional
expectations given each sampled measurement are computed analytically
from the exact posterior (Rao-Blackwellization), which also makes the
decomposition of the global MMSE matrix into class terms an exact
per-particle identity rather than an asymptotic one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import sample_joint
from .posterior import ProjectedModel

__all__ = ["MmseEstimate", "estimate_mmse", "estimate_sigma_tilde", "mi_gradient"]

# Fixed processing chunk so reductions have a worker-independent shape.
PROC_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class MmseEstimate:
    """Monte-Carlo estimates of the posterior-scatter matrices.

    sigma_global is the expected posterior covariance of the signal,
    sigma_class[m] the class-conditional analogue, and sigma_tilde the
    equivalent MMSE matrix; sigma_global = sigma_tilde + sum_m w_m
    sigma_class[m] holds exactly on the shared particle set.
    """

    sigma_global: np.ndarray
    sigma_class: tuple
    sigma_tilde: np.ndarray
    n_particles: int
    seed: int


def _accumulate(model, meas, n_particles, seed, work, with_class):
    """Shared particle sweep.

    The sigma_tilde accumulation is identical with and without class
    matrices, so the fast path returns bit-equal results.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    _, _, Y = sample_joint(model, meas, n_particles, seed)
    M = model.n_classes
    p = model.dim

    st_parts = []
    sm_outer_parts = [] if with_class else None
    coef_parts = [] if with_class else None
    for start in range(0, n_particles, PROC_CHUNK):
        Yc = Y[start : start + PROC_CHUNK]
        log_wt, log_pit, _ = work.posterior_logweights(Yc)
        wt = np.exp(log_wt)
        xm = work.class_posterior_means(Yc, log_pit)
        xg = np.einsum("nm,nmp->np", wt, xm)

        st = np.zeros((p, p))
        for m in range(M):
            D = xm[:, m, :] - xg
            st += D.T @ (D * wt[:, m, None])
        st_parts.append(st)

        if with_class:
            pit = np.exp(log_pit)
            sm = np.zeros((M, p, p))
            coef = np.zeros(work.n_comp)
            for m, s in enumerate(work.class_slices):
                for k in range(s.start, s.stop):
                    V = work.comp_posterior_means(Yc, k) - xm[:, m, :]
                    wk = wt[:, m] * pit[:, k]
                    sm[m] += V.T @ (V * wk[:, None])
                    coef[k] = wk.sum()
            sm_outer_parts.append(sm)
            coef_parts.append(coef)

    sigma_tilde = np.sum(st_parts, axis=0) / n_particles
    sigma_tilde = 0.5 * (sigma_tilde + sigma_tilde.T)
    if not with_class:
        return sigma_tilde, None

    sm_outer = np.sum(sm_outer_parts, axis=0)
    coef = np.sum(coef_parts, axis=0)
    post_cov = work.posterior_covs()
    sigma_class = []
    for m, s in enumerate(work.class_slices):
        total = sm_outer[m].copy()
        for k in range(s.start, s.stop):
            total += coef[k] * post_cov[k]
        wm = float(model.class_priors[m])
        if wm > 0.0:
            total /= n_particles * wm
        else:
            total = np.zeros((p, p))
        sigma_class.append(0.5 * (total + total.T))
    return sigma_tilde, tuple(sigma_class)


def estimate_mmse(model, meas, n_particles, seed):
    """Estimate all three posterior-scatter matrices on one particle set.

    Particles are drawn from the marginal of y; class-conditional matrices
    use the exact importance identity p(y) w-tilde_m = w_m p(y|m), so every
    matrix shares the same randomness.
    """
    work = ProjectedModel(model, meas)
    sigma_tilde, sigma_class = _accumulate(model, meas, n_particles, seed, work, with_class=True)
    sigma_global = sigma_tilde + sum(
        w * sm for w, sm in zip(model.class_priors, sigma_class)
    )
    return MmseEstimate(
        sigma_global=sigma_global,
        sigma_class=sigma_class,
        sigma_tilde=sigma_tilde,
        n_particles=n_particles,
        seed=seed,
    )


def estimate_sigma_tilde(model, meas, n_particles, seed, work=None):
    """Equivalent-MMSE matrix only; bit-identical to estimate_mmse's.

    Skips the per-component class matrices, which dominate the cost at
    high signal dimension; gradient ascent only needs sigma_tilde.
    """
    if work is None:
        work = ProjectedModel(model, meas)
    sigma_tilde, _ = _accumulate(model, meas, n_particles, seed, work, with_class=False)
    return sigma_tilde


def mi_gradient(meas, est):
    """Mutual-information gradient R Phi Sigma-tilde.

    ``est`` may be an MmseEstimate or a bare sigma_tilde matrix.
    """
    sigma_tilde = est.sigma_tilde if isinstance(est, MmseEstimate) else np.asarray(est, dtype=float)
    phi = meas.projection
    if sigma_tilde.shape != (phi.shape[1], phi.shape[1]):
        raise ValueError("sigma_tilde shape does not match the projection")
    return meas.noise_precision @ phi @ sigma_tilde
