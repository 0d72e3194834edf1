"""LMMSE-type estimators and their Tikhonov-equivalent solvers.

Every estimator here is affine, ``target_hat = gain (w - theta_w) + theta_target``,
with the gain of the regularized form ``C_zw (C_ww + lambda I)^{-1}``.  The
blind-signal and blind-operator estimators admit equivalent generalized
Tikhonov problems whose weights are built from the same moment pieces; both
routes are implemented and cross-checked in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .moments import (
    ProblemMoments,
    cov_obs_blind,
    cov_op_obs,
    cross_cov_signal_obs,
    obs_mean,
)

__all__ = [
    "IllConditionedError",
    "AffineEstimator",
    "SampleSet",
    "lmmse_general",
    "lmmse_nonblind",
    "lmmse_blind_signal",
    "lmmse_operator",
    "tikhonov_signal",
    "tikhonov_operator",
    "joint_estimate",
    "empirical_lmmse",
    "expected_gap_sq",
]

COND_LIMIT = 1e14


class IllConditionedError(ValueError):
    """Raised when an unregularized solve would be numerically meaningless."""


@dataclass(frozen=True)
class AffineEstimator:
    """Affine estimator ``w -> gain @ w + offset``.

    ``offset`` equals ``theta_target - gain @ theta_w`` for analytically
    constructed estimators, so applying the estimator to the mean
    observation returns the target mean.  ``cond`` records the condition
    number of the (regularized) covariance that was inverted.
    """

    gain: np.ndarray
    offset: np.ndarray
    lam: float = 0.0
    cond: float = np.nan

    def __post_init__(self):
        gain = np.array(self.gain, dtype=float)
        offset = np.array(self.offset, dtype=float).reshape(-1)
        if gain.ndim != 2 or gain.shape[0] != offset.size:
            raise ValueError(
                f"gain {gain.shape} incompatible with offset of length {offset.size}"
            )
        gain.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "offset", offset)

    def apply(self, w) -> np.ndarray:
        """Evaluate on a single observation (m,) or a batch (N, m)."""
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            return self.gain @ w + self.offset
        return w @ self.gain.T + self.offset


def _solve_gain(c_zw: np.ndarray, c_ww: np.ndarray, lam: float):
    """Gain ``C_zw (C_ww + lam I)^{-1}`` via a symmetric factorization.

    With ``lam == 0`` an exactly rank-deficient ``C_ww`` falls back to the
    pseudo-inverse (orthogonality principle), but a merely ill-conditioned
    one (condition number above 1e14) is rejected.
    """
    m = c_ww.shape[0]
    if c_ww.shape != (m, m):
        raise ValueError(f"covariance must be square, got {c_ww.shape}")
    if c_zw.shape[1] != m:
        raise ValueError(
            f"cross-covariance has {c_zw.shape[1]} columns, expected {m}"
        )
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    sym = 0.5 * (c_ww + c_ww.T)
    if lam > 0:
        eigs = np.linalg.eigvalsh(sym)
        if eigs.min() + lam <= 0:
            raise ValueError(
                "covariance plus lambda*I is not positive definite "
                f"(min eigenvalue {eigs.min():.3e}, lambda {lam:.3e})"
            )
        cond = (eigs.max() + lam) / (eigs.min() + lam)
        factor = cho_factor(sym + lam * np.eye(m))
        return cho_solve(factor, c_zw.T).T, cond

    eigval, eigvec = np.linalg.eigh(sym)
    scale = np.abs(eigval).max()
    if scale == 0.0:
        return np.zeros_like(c_zw), 1.0
    rank_tol = m * np.finfo(float).eps * scale
    active = eigval > rank_tol
    cond = scale / eigval[active].min()
    if cond > COND_LIMIT:
        raise IllConditionedError(
            f"covariance condition number {cond:.3e} exceeds {COND_LIMIT:.0e} "
            "with lambda = 0; pass lambda > 0 to regularize"
        )
    inv = np.zeros(m)
    inv[active] = 1.0 / eigval[active]
    return (c_zw @ eigvec) * inv @ eigvec.T, cond


def lmmse_general(c_zw, c_ww, theta_z, theta_w, lam: float = 0.0) -> AffineEstimator:
    """Optimal affine estimator of z from w given their joint moments."""
    c_zw = np.asarray(c_zw, dtype=float)
    c_ww = np.asarray(c_ww, dtype=float)
    theta_z = np.asarray(theta_z, dtype=float).reshape(-1)
    theta_w = np.asarray(theta_w, dtype=float).reshape(-1)
    if c_zw.shape != (theta_z.size, theta_w.size):
        raise ValueError(
            f"c_zw shape {c_zw.shape} inconsistent with means "
            f"({theta_z.size}, {theta_w.size})"
        )
    gain, cond = _solve_gain(c_zw, c_ww, lam)
    return AffineEstimator(gain, theta_z - gain @ theta_w, float(lam), cond)


def lmmse_nonblind(a, c_xx, beta: float, theta_x, lam: float = 0.0) -> AffineEstimator:
    """Signal estimator for a fixed, known operator ``a``."""
    a = np.asarray(a, dtype=float)
    c_xx = np.asarray(c_xx, dtype=float)
    theta_x = np.asarray(theta_x, dtype=float).reshape(-1)
    if a.shape[1] != theta_x.size or c_xx.shape != (theta_x.size,) * 2:
        raise ValueError("operator, prior covariance and mean dimensions disagree")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    c_ww = a @ c_xx @ a.T + beta * np.eye(a.shape[0])
    return lmmse_general(c_xx @ a.T, c_ww, theta_x, a @ theta_x, lam)


def lmmse_blind_signal(pm: ProblemMoments, lam: float = 0.0) -> AffineEstimator:
    """Signal estimator under a random operator; gain ``Cxy (Cyy + lam I)^{-1}``."""
    cov = cov_obs_blind(pm)
    return lmmse_general(
        cross_cov_signal_obs(pm), cov.total, pm.theta_x, obs_mean(pm), lam
    )


def lmmse_operator(pm: ProblemMoments, lam: float = 0.0) -> AffineEstimator:
    """Estimator of vec(A) from y; gain ``Cay (Cyy + lam I)^{-1}`` (mn, m)."""
    cov = cov_obs_blind(pm)
    theta_a = pm.op.mean_op.reshape(-1)
    return lmmse_general(cov_op_obs(pm), cov.total, theta_a, obs_mean(pm), lam)


def _chol_solve(mat: np.ndarray, rhs: np.ndarray, name: str) -> np.ndarray:
    try:
        return cho_solve(cho_factor(0.5 * (mat + mat.T)), rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc


def tikhonov_signal(pm: ProblemMoments, y, lam: float = 0.0) -> np.ndarray:
    """Generalized Tikhonov solution equal to the blind-signal LMMSE estimate.

    Minimizes ``|mean_op z - y|^2_{Cp^{-1}} + |z - theta_x|^2_{Cxx^{-1}}`` with
    ``Cp = kron_term + D + (beta + lam) I``; solved through the normal
    equations ``(Cxx^{-1} + mean_op^T Cp^{-1} mean_op) (z - theta_x) =
    mean_op^T Cp^{-1} (y - theta_y)``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != pm.m:
        raise ValueError(f"observation has length {y.size}, expected {pm.m}")
    eigs = np.linalg.eigvalsh(pm.c_xx)
    if eigs.min() <= pm.n * np.finfo(float).eps * max(eigs.max(), 1.0):
        raise ValueError("c_xx is singular; the Tikhonov form requires Cxx^{-1}")
    theta = pm.op.mean_op
    cp = (
        pm.op.kron_quad(pm.theta_x)
        + pm.op.interaction(pm.c_xx)
        + (pm.beta + lam) * np.eye(pm.m)
    )
    w = _chol_solve(cp, theta, "data-fidelity weight Cp")  # Cp^{-1} mean_op
    c_xx_inv = _chol_solve(pm.c_xx, np.eye(pm.n), "c_xx")
    normal = c_xx_inv + theta.T @ w
    rhs = w.T @ (y - theta @ pm.theta_x)
    return pm.theta_x + _chol_solve(normal, rhs, "normal-equation matrix")


def tikhonov_operator(pm: ProblemMoments, y, lam: float = 0.0) -> np.ndarray:
    """Generalized Tikhonov solution equal to the operator LMMSE estimate.

    Minimizes ``|A_hat theta_x - y|^2_{Cp^{-1}} + |vec(A_hat) - theta_a|^2_{Caa^{-1}}``
    with ``Cp = mean_op Cxx mean_op^T + D + (beta + lam) I``.  Requires the
    assembled covariance of vec(A) to be invertible, so this route is only
    practical for small problems.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != pm.m:
        raise ValueError(f"observation has length {y.size}, expected {pm.m}")
    caa = pm.op.assemble_cov()
    eigs = np.linalg.eigvalsh(caa)
    if eigs.min() <= caa.shape[0] * np.finfo(float).eps * max(eigs.max(), 1.0):
        raise ValueError("assembled Caa is singular; the Tikhonov form needs Caa^{-1}")
    theta = pm.op.mean_op
    cp = (
        theta @ pm.c_xx @ theta.T
        + pm.op.interaction(pm.c_xx)
        + (pm.beta + lam) * np.eye(pm.m)
    )
    caa_inv = _chol_solve(caa, np.eye(caa.shape[0]), "assembled Caa")
    cp_inv_resid = _chol_solve(cp, y - theta @ pm.theta_x, "data-fidelity weight Cp")
    cp_inv = _chol_solve(cp, np.eye(pm.m), "data-fidelity weight Cp")
    # (I_m (x) theta_x^T)^T Cp^{-1} (I_m (x) theta_x^T) = Cp^{-1} (x) theta_x theta_x^T
    normal = caa_inv + np.kron(cp_inv, np.outer(pm.theta_x, pm.theta_x))
    rhs = np.kron(cp_inv_resid, pm.theta_x)
    return theta.reshape(-1) + _chol_solve(normal, rhs, "normal-equation matrix")


def joint_estimate(pm: ProblemMoments, y, lam: float = 0.0):
    """Jointly optimal (signal, operator) estimates from one observation.

    The joint quadratic objective decouples, so the minimizer is exactly the
    pair of standalone LMMSE estimates; they are computed independently and
    returned as ``(x_hat, a_hat)`` with ``a_hat`` of length m*n.
    """
    x_hat = lmmse_blind_signal(pm, lam).apply(y)
    a_hat = lmmse_operator(pm, lam).apply(y)
    return x_hat, a_hat


@dataclass(frozen=True)
class SampleSet:
    """Paired signal/observation samples with the true means used for centering."""

    xs: np.ndarray
    ys: np.ndarray
    theta_x: np.ndarray
    theta_y: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float)
        ys = np.array(self.ys, dtype=float)
        theta_x = np.array(self.theta_x, dtype=float).reshape(-1)
        theta_y = np.array(self.theta_y, dtype=float).reshape(-1)
        if xs.ndim != 2 or ys.ndim != 2 or xs.shape[0] != ys.shape[0]:
            raise ValueError("xs and ys must be 2-D with matching sample counts")
        if xs.shape[0] < 1:
            raise ValueError("at least one sample is required")
        if xs.shape[1] != theta_x.size or ys.shape[1] != theta_y.size:
            raise ValueError("sample dimensions do not match the supplied means")
        for arr, name in ((xs, "xs"), (ys, "ys")):
            arr.setflags(write=False)
        theta_x.setflags(write=False)
        theta_y.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "theta_x", theta_x)
        object.__setattr__(self, "theta_y", theta_y)

    @property
    def n_samples(self) -> int:
        return self.xs.shape[0]


def empirical_lmmse(
    samples: SampleSet, lam: float, center: str = "true"
) -> AffineEstimator:
    """Regularized empirical LMMSE estimator built from paired samples.

    Covariances are centered with the *true* means stored in the sample set;
    ``center="empirical"`` switches to sample means (useful in practice, at
    the price of an extra mean-estimation error that the default avoids).
    """
    if center == "true":
        theta_x, theta_y = samples.theta_x, samples.theta_y
    elif center == "empirical":
        theta_x, theta_y = samples.xs.mean(axis=0), samples.ys.mean(axis=0)
    else:
        raise ValueError(f"center must be 'true' or 'empirical', got {center!r}")
    n_samples = samples.n_samples
    xc = samples.xs - theta_x
    yc = samples.ys - theta_y
    c_xy = xc.T @ yc / n_samples
    c_yy = yc.T @ yc / n_samples
    if lam == 0.0:
        eigs = np.linalg.eigvalsh(c_yy)
        scale = max(np.abs(eigs).max(), 1.0)
        if eigs.min() <= c_yy.shape[0] * np.finfo(float).eps * scale:
            raise IllConditionedError(
                "empirical observation covariance is rank-deficient "
                f"({n_samples} samples for dimension {c_yy.shape[0]}); "
                "pass lambda > 0"
            )
    return lmmse_general(c_xy, c_yy, theta_x, theta_y, lam)


def expected_gap_sq(
    est_a: AffineEstimator, est_b: AffineEstimator, c_yy: np.ndarray
) -> float:
    """Mean squared disagreement ``E |(L_a - L_b)(y - theta_y)|^2``.

    Evaluates ``tr((L_a - L_b) Cyy (L_a - L_b)^T)`` exactly from the
    observation covariance; this is the metric in which the sampling bounds
    control the empirical estimator.
    """
    gap = est_a.gain - est_b.gain
    return float(np.einsum("ij,jk,ik->", gap, np.asarray(c_yy, dtype=float), gap))
