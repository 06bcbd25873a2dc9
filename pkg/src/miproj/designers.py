"""Projection designers under the orthonormal-rows constraint.

Four methods produce d x p projections with orthonormal rows: stochastic
gradient ascent on the Monte-Carlo Shannon objective, deterministic
ascent on the quadratic-Renyi and information-discriminant surrogates,
and the closed-form discriminant (LDA) solution.  A random baseline and
two fixed-point diagnostics (KKT residual, eigenvector realignment)
round out the toolkit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .mixture import rng_stream
from .mmse import estimate_sigma_tilde, mi_gradient
from .objectives import (
    GaussStats,
    estimate_shannon_mi,
    ida_gradient,
    ida_objective,
    lda_objective,
    renyi_mi_gradient,
    renyi_quadratic_mi,
)
from .posterior import MeasurementModel

__all__ = [
    "RankDeficiencyError",
    "DesignerConfig",
    "DesignReport",
    "SvdDiagnostics",
    "orthonormalize",
    "design_shannon",
    "design_renyi",
    "design_ida",
    "design_lda",
    "random_baseline",
    "kkt_residual",
    "svd_realign",
    "svd_diagnostics",
]

logger = logging.getLogger(__name__)

# held-out evaluation stream for monitoring the stochastic objective
_EVAL_KEY = 1_000_003
_PAD_KEY = 4_001
_SMOOTH_WEIGHT = 0.3


class RankDeficiencyError(ValueError):
    """Raised when a matrix lacks the row rank its use requires."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


@dataclass(frozen=True)
class DesignerConfig:
    """Knobs shared by the iterative designers.

    step_size is the ascent step before re-orthonormalization;
    n_particles and seed drive the Monte-Carlo objective.  Convergence:
    stop once the smoothed objective fails to improve by rel_obj_tol
    (relative) for `patience` iterations, or the gradient norm drops to
    grad_tol, or max_iters is reached.  Backtracking halves the step on
    the deterministic objectives until the value stops decreasing.
    freeze_particles reuses one particle set across iterations.
    realign_restart lets the stochastic designer jump once to the
    dominant-eigenvector alignment after its first convergence.
    """

    step_size: float = 0.01
    max_iters: int = 300
    n_particles: int = 2000
    seed: int = 0
    rel_obj_tol: float = 1e-4
    grad_tol: float = 1e-10
    patience: int = 10
    backtracking: bool = True
    backtrack_shrink: float = 0.5
    max_halvings: int = 30
    freeze_particles: bool = False
    realign_restart: bool = False

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (0.0 < self.backtrack_shrink < 1.0):
            raise ValueError("backtrack_shrink must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class DesignReport:
    """Outcome of one design run: the projection plus its trace."""

    projection: np.ndarray
    objective_trace: tuple
    kkt_residual_trace: tuple
    iterations_run: int
    stop_reason: str

    def __post_init__(self):
        phi = np.array(self.projection, dtype=float)
        gram = phi @ phi.T
        if np.abs(gram - np.eye(phi.shape[0])).max() > 1e-10:
            raise ValueError("projection rows are not orthonormal")
        if self.stop_reason not in ("converged", "max_iters", "stalled"):
            raise ValueError(f"unknown stop_reason {self.stop_reason!r}")
        phi.setflags(write=False)
        object.__setattr__(self, "projection", phi)
        object.__setattr__(self, "objective_trace", tuple(float(v) for v in self.objective_trace))
        object.__setattr__(self, "kkt_residual_trace", tuple(float(v) for v in self.kkt_residual_trace))


@dataclass(frozen=True, eq=False)
class SvdDiagnostics:
    """Factored view of a projection against the estimation geometry.

    phi_svd holds (U, singular values, V^T) of the projection;
    alignment_scores[i] is the largest |cosine| between right singular
    vector i and any of the top-d eigenvectors of the supplied scatter.
    """

    phi_svd: tuple
    noise_eigvecs: np.ndarray
    sigma_tilde_eigvecs: np.ndarray
    alignment_scores: np.ndarray


def orthonormalize(mat):
    """Nearest matrix with orthonormal rows (polar factor via thin SVD).

    Replaces the singular values of the input by ones; the result is the
    Frobenius-closest row-orthonormal matrix.
    """
    a = np.asarray(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] > a.shape[1]:
        raise ValueError("expected a d x p matrix with d <= p")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    tol = max(a.shape) * np.finfo(float).eps * (float(s[0]) if s.size else 0.0)
    rank = int(np.count_nonzero(s > tol))
    if rank < a.shape[0]:
        raise RankDeficiencyError(
            f"matrix has numerical rank {rank} but {a.shape[0]} orthonormal rows were requested",
            rank=rank,
        )
    return u @ vt


def _noise_matrix(noise_precision, d):
    r = np.asarray(noise_precision, dtype=float)
    if r.ndim == 0:
        return float(r) * np.eye(d)
    return r


def _ridged_cholesky(scatter, what):
    """Lower Cholesky factor with the standard relative ridge.

    The ridge is always added before factorization; a singular raw
    scatter is additionally reported.
    """
    p = scatter.shape[0]
    tr = float(np.trace(scatter))
    lam = 1e-9 * (tr / p) if tr > 0 else 1e-9
    try:
        np.linalg.cholesky(scatter)
    except np.linalg.LinAlgError:
        logger.warning("%s is singular; ridge %.3e applied", what, lam)
    return np.linalg.cholesky(scatter + lam * np.eye(p))


def _lda_rows(stats, d):
    """Row-orthonormal discriminant basis, whitened-PCA padded to d rows.

    Solves the generalized eigenproblem (between, within) in the
    within-whitened space; at most M-1 discriminants carry between-class
    signal, so any further rows come from the leading eigenvectors of
    the whitened total covariance restricted to the orthogonal
    complement of the discriminants.
    """
    p = stats.dim
    if d == 0:
        return np.zeros((0, p))
    chol_w = _ridged_cholesky(stats.within_cov(), "within-class scatter")
    sb = stats.between_cov()
    x = linalg.solve_triangular(chol_w, sb, lower=True)
    sb_w = linalg.solve_triangular(chol_w, x.T, lower=True)
    sb_w = 0.5 * (sb_w + sb_w.T)
    evals, evecs = np.linalg.eigh(sb_w)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    r = min(d, stats.n_classes - 1)
    cut = max(float(evals[0]), 0.0) * 1e-12
    r_eff = int(np.count_nonzero(evals[:r] > cut))
    w = evecs[:, :r_eff]
    if r_eff < d:
        x = linalg.solve_triangular(chol_w, stats.pooled_cov, lower=True)
        total_w = linalg.solve_triangular(chol_w, x.T, lower=True)
        total_w = 0.5 * (total_w + total_w.T)
        if r_eff:
            proj = np.eye(p) - w @ w.T
            total_w = proj @ total_w @ proj
            total_w = 0.5 * (total_w + total_w.T)
        pv, pvecs = np.linalg.eigh(total_w)
        w = np.hstack([w, pvecs[:, np.argsort(pv)[::-1][: d - r_eff]]])
    rows = linalg.solve_triangular(chol_w, w, lower=True, trans="T").T
    return orthonormalize(rows)


def _lda_init(stats, d, rng):
    """LDA discriminants, padded with random orthonormal complements."""
    base = _lda_rows(stats, min(d, stats.n_classes - 1))
    if base.shape[0] == d:
        return base
    extra = rng.standard_normal((d - base.shape[0], stats.dim))
    if base.shape[0]:
        extra = extra - extra @ base.T @ base
    return orthonormalize(np.vstack([base, extra]) if base.shape[0] else extra)


def design_lda(stats, d, noise_precision):
    """Closed-form discriminant projection (generalized eigenvectors).

    Deterministic given the class statistics; the single objective value
    recorded is the log-det Fisher surrogate at the solution.
    """
    if not (1 <= d <= stats.dim):
        raise ValueError("need 1 <= d <= p")
    phi = _lda_rows(stats, d)
    meas = MeasurementModel(phi, _noise_matrix(noise_precision, d))
    return DesignReport(
        projection=phi,
        objective_trace=(lda_objective(stats, meas),),
        kkt_residual_trace=(),
        iterations_run=1,
        stop_reason="converged",
    )


def random_baseline(p, d, seed):
    """Orthonormalized standard-normal projection, deterministic per seed."""
    phi = orthonormalize(rng_stream(seed).standard_normal((d, p)))
    return DesignReport(
        projection=phi,
        objective_trace=(),
        kkt_residual_trace=(),
        iterations_run=0,
        stop_reason="converged",
    )


def kkt_residual(meas, sigma_tilde):
    """Distance of R Phi sigma_tilde Phi^T from the stationarity shape.

    At a constrained stationary point that matrix is symmetric and
    proportional to the identity; the residual adds the relative
    asymmetry and the relative deviation from the best multiple of I.
    A zero matrix is defined to have residual 0.
    """
    phi = meas.projection
    d = phi.shape[0]
    if np.abs(phi @ phi.T - np.eye(d)).max() > 1e-8:
        raise ValueError("projection rows must be orthonormal")
    s = meas.noise_precision @ phi @ sigma_tilde @ phi.T
    nrm = float(np.linalg.norm(s))
    if nrm == 0.0:
        return 0.0
    sym = 0.5 * (s + s.T)
    dev = sym - (np.trace(sym) / d) * np.eye(d)
    return float(np.linalg.norm(s - s.T) / nrm + np.linalg.norm(dev) / nrm)


def _top_eigvec_rows(sigma_tilde, d):
    sig = 0.5 * (np.asarray(sigma_tilde, dtype=float) + np.asarray(sigma_tilde, dtype=float).T)
    evals, evecs = np.linalg.eigh(sig)
    rows = evecs[:, np.argsort(evals)[::-1][:d]].T
    # deterministic sign: largest-magnitude entry positive
    for i in range(d):
        j = int(np.argmax(np.abs(rows[i])))
        if rows[i, j] < 0:
            rows[i] = -rows[i]
    return rows


def svd_realign(meas, sigma_tilde):
    """Feasible realignment: rows become the top-d eigenvectors of the scatter.

    This is the orthonormal choice the stationarity analysis singles out
    (unit singular values, right factor aligned with the scatter's
    dominant eigenvectors); useful as a restart to escape local optima.
    """
    return _top_eigvec_rows(sigma_tilde, meas.projection.shape[0])


def svd_diagnostics(meas, sigma_tilde):
    """Factor the projection and score its alignment with the scatter."""
    phi = meas.projection
    d = phi.shape[0]
    u, s, vt = np.linalg.svd(phi, full_matrices=False)
    if np.abs((u * s) @ vt - phi).max() > 1e-10:
        raise ValueError("SVD failed to reconstruct the projection")
    sig = 0.5 * (sigma_tilde + sigma_tilde.T)
    evals, evecs = np.linalg.eigh(sig)
    top = evecs[:, np.argsort(evals)[::-1][:d]]
    scores = np.abs(vt @ top).max(axis=1)
    noise_evals, noise_evecs = np.linalg.eigh(meas.noise_precision)
    order = np.argsort(noise_evals)[::-1]
    return SvdDiagnostics(
        phi_svd=(u, s, vt),
        noise_eigvecs=noise_evecs[:, order],
        sigma_tilde_eigvecs=evecs[:, np.argsort(evals)[::-1]],
        alignment_scores=np.clip(scores, 0.0, 1.0),
    )


class _Patience:
    """Smoothed-objective convergence monitor."""

    def __init__(self, rel_obj_tol, patience):
        self.rel_obj_tol = rel_obj_tol
        self.patience = patience
        self.smooth = None
        self.best = -math.inf
        self.bad = 0

    def update(self, value):
        """Record a value; return True when patience is exhausted."""
        if self.smooth is None:
            self.smooth = value
            self.best = value
            return False
        self.smooth = (1.0 - _SMOOTH_WEIGHT) * self.smooth + _SMOOTH_WEIGHT * value
        margin = self.rel_obj_tol * max(abs(self.best), 1e-12)
        if self.smooth > self.best + margin:
            self.best = self.smooth
            self.bad = 0
        else:
            self.bad += 1
        return self.bad >= self.patience


def design_shannon(model, d, noise_precision, cfg):
    """Gradient ascent on the Monte-Carlo Shannon information.

    Each iteration estimates the between-class posterior-mean scatter,
    steps along R Phi sigma_tilde, and re-orthonormalizes.  Fresh
    particles are drawn per iteration (unless frozen); progress is
    monitored on a held-out fixed evaluation stream, and the iterate
    with the best monitored objective is returned.
    """
    p = model.dim
    if not (1 <= d <= p):
        raise ValueError("need 1 <= d <= p")
    r = _noise_matrix(noise_precision, d)
    stats = GaussStats.from_model(model)
    phi = _lda_init(stats, d, rng_stream(cfg.seed, _PAD_KEY))

    obj_trace = []
    kkt_trace = []
    best_mi = -math.inf
    best_phi = phi
    monitor = _Patience(cfg.rel_obj_tol, cfg.patience)
    stop_reason = "max_iters"
    realigned = False
    t = 0
    while t < cfg.max_iters:
        t += 1
        meas = MeasurementModel(phi, r)
        particle_key = 1 if cfg.freeze_particles else t
        sig = estimate_sigma_tilde(model, meas, cfg.n_particles, (cfg.seed, particle_key))
        mi, _ = estimate_shannon_mi(model, meas, cfg.n_particles, (cfg.seed, _EVAL_KEY))
        obj_trace.append(mi)
        kkt_trace.append(kkt_residual(meas, sig))
        if mi > best_mi:
            best_mi = mi
            best_phi = phi
        grad = mi_gradient(meas, sig)
        stopping = None
        if float(np.linalg.norm(grad)) <= cfg.grad_tol:
            stopping = "converged"
        elif monitor.update(mi):
            stopping = "converged"
        if stopping is not None:
            if cfg.realign_restart and not realigned and t < cfg.max_iters:
                realigned = True
                phi = svd_realign(meas, sig)
                monitor = _Patience(cfg.rel_obj_tol, cfg.patience)
                continue
            stop_reason = stopping
            break
        phi = orthonormalize(phi + cfg.step_size * grad)
    return DesignReport(
        projection=best_phi,
        objective_trace=tuple(obj_trace),
        kkt_residual_trace=tuple(kkt_trace),
        iterations_run=t,
        stop_reason=stop_reason,
    )


def _ascend_deterministic(phi, objective, gradient, cfg):
    """Backtracking ascent shared by the closed-form-objective designers."""
    obj = objective(phi)
    trace = [obj]
    monitor = _Patience(cfg.rel_obj_tol, cfg.patience)
    monitor.update(obj)
    stop_reason = "max_iters"
    t = 0
    while t < cfg.max_iters:
        t += 1
        grad = gradient(phi)
        if float(np.linalg.norm(grad)) <= cfg.grad_tol:
            stop_reason = "converged"
            break
        step = cfg.step_size
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            cand = orthonormalize(phi + step * grad)
            cand_obj = objective(cand)
            if not cfg.backtracking or cand_obj >= obj - 1e-12:
                accepted = True
                break
            step *= cfg.backtrack_shrink
        if not accepted:
            stop_reason = "stalled"
            break
        phi, obj = cand, cand_obj
        trace.append(obj)
        if monitor.update(obj):
            stop_reason = "converged"
            break
    return phi, trace, t, stop_reason


def design_renyi(model, d, noise_precision, cfg):
    """Deterministic ascent on the quadratic-Renyi information.

    The objective and its gradient are closed-form sums of Gaussian
    overlaps; backtracking keeps the trace non-decreasing.
    """
    if not (1 <= d <= model.dim):
        raise ValueError("need 1 <= d <= p")
    r = _noise_matrix(noise_precision, d)
    phi0 = _lda_init(GaussStats.from_model(model), d, rng_stream(cfg.seed, _PAD_KEY))

    def objective(phi):
        return renyi_quadratic_mi(model, MeasurementModel(phi, r))

    def gradient(phi):
        return renyi_mi_gradient(model, MeasurementModel(phi, r))

    phi, trace, t, reason = _ascend_deterministic(phi0, objective, gradient, cfg)
    return DesignReport(
        projection=phi,
        objective_trace=tuple(trace),
        kkt_residual_trace=(),
        iterations_run=max(t, 1),
        stop_reason=reason,
    )


def design_ida(stats, d, noise_precision, cfg):
    """Deterministic ascent on the information-discriminant surrogate.

    Starts from the LDA solution and can only improve on it thanks to
    the monotone backtracking line search.
    """
    if not (1 <= d <= stats.dim):
        raise ValueError("need 1 <= d <= p")
    r = _noise_matrix(noise_precision, d)
    phi0 = _lda_init(stats, d, rng_stream(cfg.seed, _PAD_KEY))

    def objective(phi):
        return ida_objective(stats, MeasurementModel(phi, r))

    def gradient(phi):
        return ida_gradient(stats, MeasurementModel(phi, r))

    phi, trace, t, reason = _ascend_deterministic(phi0, objective, gradient, cfg)
    return DesignReport(
        projection=phi,
        objective_trace=tuple(trace),
        kkt_residual_trace=(),
        iterations_run=max(t, 1),
        stop_reason=reason,
    )
