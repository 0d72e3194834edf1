"""Source-condition priors and computable right-hand sides of the error bounds.

The reconstruction error of the regularized empirical estimator splits into
an approximation part, driven by the noise level and the spread of the
operator's singular values, and a sampling part that decays like ``1/N``.
Each bound is evaluated exactly as stated, with every constant recorded in
the returned report; preconditions are checked and violations are raised
with the failing inequality named, never silently patched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .estimators import SampleSet
from .moments import (
    OperatorEnsemble,
    ProblemMoments,
    check_symmetric,
    cov_obs_blind,
    cross_cov_signal_obs,
)

__all__ = [
    "SourceConditionPrior",
    "BoundReport",
    "matrix_power_psd",
    "source_condition_prior",
    "spectrum_stats",
    "c1_constant",
    "c2_constant",
    "approx_bound_rhs",
    "lmmse_norm_bound",
    "sampling_constant",
    "sampling_threshold",
    "sampling_bound_rhs",
    "main_bound_rhs",
    "nonblind_bound_rhs",
    "estimate_radii",
    "default_lambda",
]

EIG_CLAMP_TOL = 1e-10


def matrix_power_psd(mat, alpha: float) -> np.ndarray:
    """Matrix power of a symmetric PSD matrix via its eigendecomposition.

    Eigenvalues in ``[-1e-10 * ||M||, 0]`` are clamped to zero before
    powering; anything more negative is rejected.
    """
    mat = np.asarray(mat, dtype=float)
    check_symmetric(mat, "matrix power input")
    eigval, eigvec = np.linalg.eigh(0.5 * (mat + mat.T))
    scale = np.abs(eigval).max() if eigval.size else 0.0
    if scale > 0 and eigval.min() < -EIG_CLAMP_TOL * scale:
        raise ValueError(
            f"matrix power input has negative eigenvalue {eigval.min():.3e} "
            f"below the -{EIG_CLAMP_TOL:.0e} relative clamp"
        )
    eigval = np.clip(eigval, 0.0, None)
    powered = (eigvec * eigval**alpha) @ eigvec.T
    return 0.5 * (powered + powered.T)


@dataclass(frozen=True)
class SourceConditionPrior:
    """Signal prior whose covariance is a matrix power of ``E[A^T A]``.

    ``c_xx = base**alpha`` shares the eigenvectors of ``base``, so larger
    ``alpha`` concentrates the prior on the directions the operator family
    preserves best.  ``theta_x`` is the prior mean (zero if not supplied).
    """

    alpha: float
    base: np.ndarray
    c_xx: np.ndarray
    theta_x: np.ndarray

    @property
    def n(self) -> int:
        return self.theta_x.size


def source_condition_prior(
    source,
    alpha: float,
    n_draws: Optional[int] = None,
    seed: int = 0,
    theta_x=None,
) -> SourceConditionPrior:
    """Build the prior ``c_xx = E[A^T A]^alpha``.

    ``source`` is an :class:`OperatorEnsemble` (exact closed-form base,
    ``mean_op^T mean_op + sum_i C_{A_i A_i}``) or a kernel sampler exposing
    ``draw_kernels(n_draws, seed)`` (empirical base, averaging ``A^T A``
    over ``n_draws`` operator draws).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if isinstance(source, OperatorEnsemble):
        base = source.second_moment_gram()
    elif hasattr(source, "draw_kernels"):
        if n_draws is None or n_draws < 2:
            raise ValueError("empirical mode requires n_draws >= 2")
        kernels = np.asarray(source.draw_kernels(n_draws, seed), dtype=float)
        # T(k)^T T(k) is circulant in the kernel autocorrelation
        autocorr = np.fft.ifft(np.abs(np.fft.fft(kernels, axis=1)) ** 2, axis=1).real
        mean_auto = autocorr.mean(axis=0)
        n = kernels.shape[1]
        base = mean_auto[(np.arange(n)[:, None] - np.arange(n)[None, :]) % n]
        base = 0.5 * (base + base.T)
    else:
        raise TypeError(
            "source must be an OperatorEnsemble or expose draw_kernels(...)"
        )
    c_xx = matrix_power_psd(base, alpha)
    if theta_x is None:
        theta_x = np.zeros(base.shape[0])
    theta_x = np.array(theta_x, dtype=float).reshape(-1)
    if theta_x.size != base.shape[0]:
        raise ValueError("theta_x length does not match the operator dimension")
    for arr in (base, c_xx, theta_x):
        arr.setflags(write=False)
    return SourceConditionPrior(float(alpha), base, c_xx, theta_x)


def spectrum_stats(op: OperatorEnsemble, c_yy):
    """Conditioning and spread summary: ``(gamma, cv2 per index, E[s^2] per index)``.

    ``gamma`` is the smallest eigenvalue of the supplied observation
    covariance.  ``cv2`` is the squared coefficient of variation of each
    singular value; the ratio ``Var(s)/E[s^2]`` appearing in the bounds
    equals ``cv2 / (1 + cv2)``.
    """
    if op.singular_moments is None:
        raise ValueError(
            "ensemble carries no singular-value moments; attach them with "
            "with_singular_moments() or use a shared-singular-vector ensemble"
        )
    e1 = op.singular_moments[:, 0]
    e2 = op.singular_moments[:, 1]
    if np.any(e1 <= 0):
        raise ValueError("singular values with zero mean violate the model")
    var = np.clip(e2 - e1**2, 0.0, None)
    gamma = float(np.linalg.eigvalsh(np.asarray(c_yy, dtype=float)).min())
    return gamma, var / e1**2, e2.copy()


def c1_constant(alpha: float) -> float:
    """Sharp constant of the estimator-norm bound, in (0, 1)."""
    return (alpha + 0.5) ** ((alpha + 0.5) / (alpha + 1.0)) / (alpha + 1.0)


def c2_constant(alpha: float) -> float:
    """Constant bounding the regularization remainder, in (0, 1)."""
    ratio = alpha / (alpha + 2.0)
    return ratio ** (alpha / (alpha + 1.0)) / (1.0 + ratio) ** 2


def lmmse_norm_bound(alpha: float, beta: float, lam: float = 0.0) -> float:
    """Upper bound ``C1 (beta + lam)^{-(1/2)/(alpha+1)}`` on the gain norm."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if beta + lam <= 0:
        raise ValueError("beta + lambda must be positive")
    return c1_constant(alpha) * (beta + lam) ** (-0.5 / (alpha + 1.0))


@dataclass(frozen=True)
class BoundReport:
    """One evaluated bound: nonnegative terms, their sum, and all constants."""

    term_noise: float = 0.0
    term_operator: float = 0.0
    term_sampling: float = 0.0
    constants: dict = field(default_factory=dict)
    total: float = field(init=False)

    def __post_init__(self):
        for name in ("term_noise", "term_operator", "term_sampling"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        object.__setattr__(
            self, "total", self.term_noise + self.term_operator + self.term_sampling
        )


def _require_source_condition(pm: ProblemMoments, alpha: float) -> None:
    expected = matrix_power_psd(pm.op.second_moment_gram(), alpha)
    scale = max(np.abs(expected).max(), np.abs(pm.c_xx).max(), 1e-300)
    gap = np.abs(pm.c_xx - expected).max() / scale
    if gap > 1e-6:
        raise ValueError(
            "prior covariance does not satisfy the source condition "
            f"c_xx = E[A^T A]^alpha (relative gap {gap:.3e})"
        )


def approx_bound_rhs(
    pm: ProblemMoments, alpha: float, lam: float, mode: str = "statement"
) -> BoundReport:
    """Approximation-error bound for the exact regularized estimator.

    ``term_noise = m (beta + lam)^{alpha/(alpha+1)}`` and
    ``term_operator = sum_i E[s_i^2]^alpha Var(s_i) / E[s_i^2]`` over the
    first ``m`` singular-value indices.  ``mode="statement"`` absorbs the
    universal constants; ``mode="proof"`` multiplies the noise term by
    ``C1^2 + C2`` instead (the constants the derivation actually yields).
    Requires an ensemble with fixed singular vectors and a prior satisfying
    the source condition.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if mode not in ("statement", "proof"):
        raise ValueError(f"mode must be 'statement' or 'proof', got {mode!r}")
    if pm.op.structure_tag not in ("shared_singular_vectors", "circulant_kernel"):
        raise ValueError(
            "approximation bound requires a shared-singular-vector or "
            f"circulant ensemble, got {pm.op.structure_tag!r}"
        )
    if pm.op.singular_moments is None:
        raise ValueError("ensemble carries no singular-value moments")
    _require_source_condition(pm, alpha)
    e1 = pm.op.singular_moments[: pm.m, 0]
    e2 = pm.op.singular_moments[: pm.m, 1]
    var = np.clip(e2 - e1**2, 0.0, None)
    term_operator = float((e2**alpha * var / e2).sum())
    term_noise = pm.m * (pm.beta + lam) ** (alpha / (alpha + 1.0))
    c1, c2 = c1_constant(alpha), c2_constant(alpha)
    if mode == "proof":
        term_noise *= c1**2 + c2
    constants = {
        "alpha": alpha,
        "lambda": lam,
        "beta": pm.beta,
        "mode": mode,
        "c1": c1,
        "c2": c2,
    }
    return BoundReport(term_noise=term_noise, term_operator=term_operator,
                       constants=constants)


def _spectral_norm_sym(mat: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(mat)).max())


def sampling_constant(
    pm: ProblemMoments, rho_x: float, rho_y: float, c_yy=None
) -> float:
    """Sample-complexity constant ``log(n+m) 4 max(rho) ||Cyy|| / (3 ||Cxx||^2)``."""
    if c_yy is None:
        c_yy = cov_obs_blind(pm).total
    return (
        math.log(pm.n + pm.m)
        * 4.0
        * max(rho_x, rho_y)
        * _spectral_norm_sym(np.asarray(c_yy))
        / (3.0 * _spectral_norm_sym(pm.c_xx) ** 2)
    )


def sampling_threshold(
    pm: ProblemMoments,
    rho_x: float,
    rho_y: float,
    xi: float,
    d: float,
    lam: float = 0.0,
) -> int:
    """Minimal sample count for the high-probability sampling bound.

    Returns ``ceil(log((n+m)/d) * 2 max(rho) ||Cyy|| (3+2 xi) /
    (3 xi^2 ||Cxx||^2))``.  Requires ``0 < xi < lam + gamma`` and ``d > 0``;
    the standing norm ordering ``||Cyy|| >= ||Cxx||`` is asserted because
    the constant above relies on it.
    """
    if d <= 0:
        raise ValueError("probability parameter d must be positive")
    c_yy = cov_obs_blind(pm).total
    gamma = float(np.linalg.eigvalsh(c_yy).min())
    if not 0 < xi < lam + gamma:
        raise ValueError(
            f"xi must lie in (0, lambda + gamma) = (0, {lam + gamma:.6g}), got {xi}"
        )
    norm_yy = _spectral_norm_sym(c_yy)
    norm_xx = _spectral_norm_sym(pm.c_xx)
    if norm_yy < norm_xx:
        raise ValueError(
            f"norm ordering violated: ||Cyy|| = {norm_yy:.6g} < "
            f"||Cxx|| = {norm_xx:.6g}"
        )
    bound = (
        math.log((pm.n + pm.m) / d)
        * 2.0
        * max(rho_x, rho_y)
        * norm_yy
        * (3.0 + 2.0 * xi)
        / (3.0 * xi**2 * norm_xx**2)
    )
    return int(math.ceil(bound))


def sampling_bound_rhs(
    pm: ProblemMoments,
    rho_x: float,
    rho_y: float,
    lam: float,
    n_samples: int,
    mode: str = "corollary1",
    xi: Optional[float] = None,
    d: Optional[float] = None,
) -> BoundReport:
    """High-probability bound on ``E_y |L y - L_hat y|^2`` for the empirical gain.

    ``mode="theorem3"`` evaluates the explicit-``xi`` form (requires ``xi``
    and ``d`` and ``n_samples`` at least :func:`sampling_threshold`);
    ``mode="corollary1"`` evaluates the explicit-``N`` form under its
    stronger preconditions.  Violated preconditions raise with the failing
    inequality named.
    """
    cov = cov_obs_blind(pm).total
    gamma = float(np.linalg.eigvalsh(cov).min())
    norm_cxy = float(np.linalg.norm(cross_cov_signal_obs(pm), 2))
    constants = {
        "gamma": gamma,
        "rho_x": rho_x,
        "rho_y": rho_y,
        "lambda": lam,
        "n_samples": n_samples,
        "norm_cxy": norm_cxy,
        "mode": mode,
    }
    gl = gamma + lam
    if mode == "theorem3":
        if xi is None or d is None:
            raise ValueError("theorem3 mode requires xi and d")
        threshold = sampling_threshold(pm, rho_x, rho_y, xi, d, lam)
        if n_samples < threshold:
            raise ValueError(
                f"precondition failed: N = {n_samples} below the sampling "
                f"threshold {threshold}"
            )
        rhs = (
            pm.m
            * norm_cxy**2
            * xi**2
            / gl
            * (1.0 + (1.0 + xi) ** 2 / (gl - xi) ** 2 + 2.0 * (1.0 + xi) / (gl - xi))
        )
        constants.update({"xi": xi, "d": d, "threshold": threshold})
    elif mode == "corollary1":
        k_const = sampling_constant(pm, rho_x, rho_y, cov)
        if n_samples <= k_const:
            raise ValueError(
                f"precondition failed: N = {n_samples} must exceed K = {k_const:.6g}"
            )
        if n_samples <= 16.0 * k_const / gl**2:
            raise ValueError(
                f"precondition failed: N = {n_samples} must exceed "
                f"16K/(gamma+lambda)^2 = {16.0 * k_const / gl**2:.6g}"
            )
        if lam + gamma < 4.0 * math.sqrt(k_const / n_samples):
            raise ValueError(
                f"precondition failed: lambda + gamma = {gl:.6g} below "
                f"4 sqrt(K/N) = {4.0 * math.sqrt(k_const / n_samples):.6g}"
            )
        rhs = (
            pm.m
            * 9.0
            * norm_cxy**2
            * k_const
            / (gl * n_samples)
            * (1.0 + 16.0 / gl**2 + 8.0 / gl)
        )
        constants["K"] = k_const
    else:
        raise ValueError(f"mode must be 'theorem3' or 'corollary1', got {mode!r}")
    return BoundReport(term_sampling=rhs, constants=constants)


def main_bound_rhs(
    pm: ProblemMoments,
    alpha: float,
    lam: float,
    rho_x: float,
    rho_y: float,
    n_samples: int,
) -> BoundReport:
    """Combined approximation + sampling bound for the empirical estimator.

    The sampling part is ``m C / ((gamma+lam) N) (1 + 1/(gamma+lam)^2 +
    1/(gamma+lam))`` with ``C = 9 ||Cxy||^2 K``; preconditions are ``N > K``
    and ``lam + gamma >= 4 sqrt(K/N)``.
    """
    approx = approx_bound_rhs(pm, alpha, lam, mode="statement")
    cov = cov_obs_blind(pm).total
    gamma = float(np.linalg.eigvalsh(cov).min())
    k_const = sampling_constant(pm, rho_x, rho_y, cov)
    gl = gamma + lam
    if n_samples <= k_const:
        raise ValueError(
            f"precondition failed: N = {n_samples} must exceed K = {k_const:.6g}"
        )
    if gl < 4.0 * math.sqrt(k_const / n_samples):
        raise ValueError(
            f"precondition failed: lambda + gamma = {gl:.6g} below "
            f"4 sqrt(K/N) = {4.0 * math.sqrt(k_const / n_samples):.6g}"
        )
    norm_cxy = float(np.linalg.norm(cross_cov_signal_obs(pm), 2))
    sampling = (
        pm.m
        * 9.0
        * norm_cxy**2
        * k_const
        / (gl * n_samples)
        * (1.0 + 1.0 / gl**2 + 1.0 / gl)
    )
    constants = dict(approx.constants)
    constants.update(
        {
            "K": k_const,
            "gamma": gamma,
            "rho_x": rho_x,
            "rho_y": rho_y,
            "n_samples": n_samples,
            "norm_cxy": norm_cxy,
        }
    )
    return BoundReport(
        term_noise=approx.term_noise,
        term_operator=approx.term_operator,
        term_sampling=sampling,
        constants=constants,
    )


def nonblind_bound_rhs(alpha: float, beta: float, m: int = 1) -> float:
    """Reconstruction-error bound ``m (C1 + C2) beta^{alpha/(alpha+1)}``
    for a fixed, known operator."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return m * (c1_constant(alpha) + c2_constant(alpha)) * beta ** (
        alpha / (alpha + 1.0)
    )


def estimate_radii(samples: SampleSet, inflation: float = 1.1):
    """Heuristic almost-sure radii ``rho_x, rho_y`` from observed samples.

    The bounds assume almost-surely bounded centered norms; with unbounded
    (e.g. Gaussian) data the largest observed squared norm, inflated by 10%,
    stands in for the true radius.
    """
    rho_x = float(((samples.xs - samples.theta_x) ** 2).sum(axis=1).max())
    rho_y = float(((samples.ys - samples.theta_y) ** 2).sum(axis=1).max())
    return inflation * rho_x, inflation * rho_y


def default_lambda(
    k_const: float, gamma: float, n_samples: int, floor: float = 1e-6
) -> float:
    """Smallest regularization satisfying the sampling-bound preconditions.

    Returns ``max(floor, 4 sqrt(K / (0.98 N)) - gamma)``; the 2% margin keeps
    ``N > 16K/(gamma+lambda)^2`` strict rather than an equality.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    return max(floor, 4.0 * math.sqrt(k_const / (0.98 * n_samples)) - gamma)
