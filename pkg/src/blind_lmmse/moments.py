"""Problem moments and second-order quantities of the blind observation model.

The model is ``y = A x + e`` with a random matrix ``A`` (mean ``mean_op``,
row cross-covariances ``C_{A_i A_j}``), a random signal ``x`` (mean
``theta_x``, covariance ``c_xx``) and white noise of level ``beta``.  All
formulas below use only first and second moments, so they hold for any
distribution with those moments; vectorisation of matrices is row-major
throughout (``vec(A)`` concatenates the rows of ``A``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "OperatorEnsemble",
    "ProblemMoments",
    "BlindObsCov",
    "cross_cov_signal_obs",
    "obs_mean",
    "interaction_matrix",
    "cov_obs_blind",
    "cov_op_obs",
]

# Relative tolerances used to reject (never repair) inconsistent inputs.
SYM_TOL = 1e-10
PSD_TOL = 1e-8


def _asarray(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def check_symmetric(mat: np.ndarray, name: str, tol: float = SYM_TOL) -> None:
    scale = np.abs(mat).max()
    if scale == 0.0:
        return
    gap = np.abs(mat - mat.T).max()
    if gap > tol * scale:
        raise ValueError(
            f"{name} violates symmetry: max |M - M^T| = {gap:.3e} "
            f"exceeds {tol:.0e} relative"
        )


def check_psd(mat: np.ndarray, name: str, tol: float = PSD_TOL) -> None:
    """Reject matrices with eigenvalues below ``-tol * ||M||``."""
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    scale = np.abs(eigs).max() if eigs.size else 0.0
    if scale == 0.0:
        return
    if eigs.min() < -tol * scale:
        raise ValueError(
            f"{name} is not positive semidefinite: min eigenvalue "
            f"{eigs.min():.3e} below -{tol:.0e} relative tolerance"
        )


# ---------------------------------------------------------------------------
# Operator ensembles
# ---------------------------------------------------------------------------

STRUCTURE_TAGS = (
    "unstructured",
    "independent_rows",
    "independent_columns",
    "independent_entries",
    "shared_singular_vectors",
    "circulant_kernel",
)


@dataclass(frozen=True)
class OperatorEnsemble:
    """Distribution over forward matrices, given by mean and row covariances.

    The covariance of ``vec(A)`` is held in the most compact representation
    the structure permits and individual blocks ``C_{A_i A_j}`` (covariance
    of rows ``i`` and ``j``) are reconstructed on demand, so the full
    ``mn x mn`` matrix is only ever assembled explicitly for small problems.

    Use the classmethod constructors; the raw constructor is internal.
    """

    mean_op: np.ndarray
    structure_tag: str
    _kind: str
    _payload: tuple = ()
    singular_moments: Optional[np.ndarray] = None  # (r, 2): E[s_i], E[s_i^2]

    # -- constructors -------------------------------------------------------

    @classmethod
    def deterministic(cls, mean_op) -> "OperatorEnsemble":
        """Fixed known operator: the covariance of vec(A) is zero."""
        mean_op = _readonly(_asarray(mean_op, "mean_op"))
        return cls(mean_op, "unstructured", "zero")

    @classmethod
    def from_row_cov_grid(cls, mean_op, grid, structure_tag="unstructured"):
        """General ensemble from the full (m, m, n, n) grid of row covariances."""
        mean_op = _readonly(_asarray(mean_op, "mean_op"))
        m, n = mean_op.shape
        grid = _asarray(grid, "row_covs")
        if grid.shape != (m, m, n, n):
            raise ValueError(
                f"row_covs grid must have shape {(m, m, n, n)}, got {grid.shape}"
            )
        full = grid.transpose(0, 2, 1, 3).reshape(m * n, m * n)
        check_symmetric(
            full, "row cross-covariance grid (C_{A_i A_j} = C_{A_j A_i}^T)", PSD_TOL
        )
        check_psd(full, "assembled operator covariance")
        return cls(mean_op, structure_tag, "grid", (_readonly(grid),))

    @classmethod
    def independent_rows(cls, mean_op, row_covs) -> "OperatorEnsemble":
        """Rows of A independent; ``row_covs`` has shape (m, n, n)."""
        mean_op = _readonly(_asarray(mean_op, "mean_op"))
        m, n = mean_op.shape
        covs = _asarray(row_covs, "row_covs")
        if covs.shape != (m, n, n):
            raise ValueError(f"row_covs must have shape {(m, n, n)}, got {covs.shape}")
        for i in range(m):
            check_symmetric(covs[i], f"row covariance {i}")
            check_psd(covs[i], f"row covariance {i}")
        return cls(mean_op, "independent_rows", "rows", (_readonly(covs),))

    @classmethod
    def independent_columns(cls, mean_op, column_covs) -> "OperatorEnsemble":
        """Columns of A independent; ``column_covs`` has shape (n, m, m)."""
        mean_op = _readonly(_asarray(mean_op, "mean_op"))
        m, n = mean_op.shape
        covs = _asarray(column_covs, "column_covs")
        if covs.shape != (n, m, m):
            raise ValueError(
                f"column_covs must have shape {(n, m, m)}, got {covs.shape}"
            )
        for k in range(n):
            check_symmetric(covs[k], f"column covariance {k}")
            check_psd(covs[k], f"column covariance {k}")
        return cls(mean_op, "independent_columns", "columns", (_readonly(covs),))

    @classmethod
    def independent_entries(cls, mean_op, entry_vars) -> "OperatorEnsemble":
        """All entries of A independent with variances ``entry_vars`` (m, n)."""
        mean_op = _readonly(_asarray(mean_op, "mean_op"))
        variances = _asarray(entry_vars, "entry_vars")
        if variances.shape != mean_op.shape:
            raise ValueError(
                f"entry_vars must have shape {mean_op.shape}, got {variances.shape}"
            )
        if variances.min() < 0:
            raise ValueError("entry variances must be nonnegative")
        return cls(
            mean_op, "independent_entries", "entries", (_readonly(variances),)
        )

    @classmethod
    def shared_singular_vectors(cls, u, v, sv_mean, sv_second):
        """Ensemble ``A = U diag(s) V`` with fixed orthonormal U (m, m), V (n, n).

        Singular values are independent across indices with per-index first
        moments ``sv_mean`` and second moments ``sv_second``; the operator
        mean is rebuilt from them as ``U diag(sv_mean) V``.
        """
        u = _asarray(u, "u")
        v = _asarray(v, "v")
        m, n = u.shape[0], v.shape[0]
        if u.shape != (m, m) or v.shape != (n, n):
            raise ValueError("u and v must be square orthonormal matrices")
        for mat, name in ((u, "u"), (v, "v")):
            gap = np.abs(mat @ mat.T - np.eye(mat.shape[0])).max()
            if gap > SYM_TOL:
                raise ValueError(f"{name} is not orthonormal (residual {gap:.3e})")
        r = min(m, n)
        e1 = _asarray(sv_mean, "sv_mean").reshape(-1)
        e2 = _asarray(sv_second, "sv_second").reshape(-1)
        if e1.shape != (r,) or e2.shape != (r,):
            raise ValueError(f"singular moments must have length {r}")
        if e1.min() <= 0:
            raise ValueError("singular-value means must be strictly positive")
        if np.any(e2 < e1**2 - SYM_TOL * max(1.0, e2.max())):
            raise ValueError("second moments must satisfy E[s^2] >= E[s]^2")
        mean_op = u[:, :r] @ (e1[:, None] * v[:r, :])
        moments = _readonly(np.column_stack([e1, e2]))
        return cls(
            _readonly(mean_op),
            "shared_singular_vectors",
            "shared_svd",
            (_readonly(u), _readonly(v), _readonly(e1), _readonly(e2)),
            singular_moments=moments,
        )

    @classmethod
    def circulant(cls, mean_op, kernel_cov) -> "OperatorEnsemble":
        """Circulant ensemble ``A = T(k)`` driven by kernel covariance (n, n)."""
        mean_op = _readonly(_asarray(mean_op, "mean_op"))
        m, n = mean_op.shape
        if m != n:
            raise ValueError("circulant ensembles require m == n")
        ckk = _asarray(kernel_cov, "kernel_cov")
        if ckk.shape != (n, n):
            raise ValueError(f"kernel covariance must have shape {(n, n)}")
        check_symmetric(ckk, "kernel covariance", PSD_TOL)
        check_psd(ckk, "kernel covariance")
        return cls(mean_op, "circulant_kernel", "circulant", (_readonly(ckk),))

    # -- basic properties ----------------------------------------------------

    @property
    def m(self) -> int:
        return self.mean_op.shape[0]

    @property
    def n(self) -> int:
        return self.mean_op.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return self._kind == "zero"

    def with_singular_moments(self, moments) -> "OperatorEnsemble":
        """Copy of the ensemble with per-index singular-value moments attached."""
        moments = _readonly(_asarray(moments, "singular_moments"))
        if moments.ndim != 2 or moments.shape[1] != 2:
            raise ValueError("singular_moments must have shape (r, 2)")
        return OperatorEnsemble(
            self.mean_op, self.structure_tag, self._kind, self._payload, moments
        )

    # -- covariance access ---------------------------------------------------

    def row_cov(self, i: int, j: int) -> np.ndarray:
        """Cross-covariance C_{A_i A_j} of rows ``i`` and ``j`` of A."""
        m, n = self.mean_op.shape
        if not (0 <= i < m and 0 <= j < m):
            raise IndexError(f"row indices ({i}, {j}) out of range for m={m}")
        kind = self._kind
        if kind == "zero":
            return np.zeros((n, n))
        if kind == "grid":
            return np.array(self._payload[0][i, j])
        if kind == "rows":
            return np.array(self._payload[0][i]) if i == j else np.zeros((n, n))
        if kind == "columns":
            return np.diag(self._payload[0][:, i, j])
        if kind == "entries":
            variances = self._payload[0]
            return np.diag(variances[i]) if i == j else np.zeros((n, n))
        if kind == "shared_svd":
            u, v, e1, e2 = self._payload
            var = e2 - e1**2
            w = var * u[i, : var.size] * u[j, : var.size]
            return (v[: var.size].T * w) @ v[: var.size]
        if kind == "circulant":
            ckk = self._payload[0]
            rows = (i - np.arange(n)) % n
            cols = (j - np.arange(n)) % n
            return ckk[np.ix_(rows, cols)]
        raise AssertionError(f"unknown covariance kind {kind!r}")

    def row_cov_grid(self) -> np.ndarray:
        """Full (m, m, n, n) grid of row cross-covariances (small problems)."""
        m = self.m
        grid = np.empty((m, m, self.n, self.n))
        for i in range(m):
            for j in range(m):
                grid[i, j] = self.row_cov(i, j)
        return grid

    def assemble_cov(self) -> np.ndarray:
        """Dense covariance of vec(A) with shape (m*n, m*n)."""
        m, n = self.mean_op.shape
        return self.row_cov_grid().transpose(0, 2, 1, 3).reshape(m * n, m * n)

    # -- aggregate second-order quantities ------------------------------------

    def kron_quad(self, theta_x: np.ndarray) -> np.ndarray:
        """Matrix with entries ``theta_x^T C_{A_i A_j} theta_x``.

        Equals ``(I_m (x) theta_x^T) Caa (I_m (x) theta_x^T)^T`` for the
        row-major vectorisation.
        """
        tx = np.asarray(theta_x, dtype=float)
        m, n = self.mean_op.shape
        kind = self._kind
        if kind == "zero":
            return np.zeros((m, m))
        if kind == "grid":
            return np.einsum("ijkl,k,l->ij", self._payload[0], tx, tx)
        if kind == "rows":
            return np.diag(np.einsum("ikl,k,l->i", self._payload[0], tx, tx))
        if kind == "columns":
            return np.einsum("k,kij->ij", tx**2, self._payload[0])
        if kind == "entries":
            return np.diag(self._payload[0] @ tx**2)
        if kind == "shared_svd":
            u, v, e1, e2 = self._payload
            w = (e2 - e1**2) * (v[: e1.size] @ tx) ** 2
            return (u[:, : e1.size] * w) @ u[:, : e1.size].T
        if kind == "circulant":
            spec = np.fft.fft2(self._payload[0]) * np.fft.fft2(np.outer(tx, tx))
            return np.fft.ifft2(spec).real
        raise AssertionError(kind)

    def interaction(self, c_xx: np.ndarray) -> np.ndarray:
        """Interaction matrix D_{ij} = sum_{kq} (C_{A_i A_j} o Cxx)_{kq}."""
        c_xx = np.asarray(c_xx, dtype=float)
        m, n = self.mean_op.shape
        kind = self._kind
        if kind == "zero":
            return np.zeros((m, m))
        if kind == "grid":
            return np.einsum("ijkl,kl->ij", self._payload[0], c_xx)
        if kind == "rows":
            return np.diag(np.einsum("ikl,kl->i", self._payload[0], c_xx))
        if kind == "columns":
            # only the signal variances enter once the blocks are diagonal
            return np.einsum("k,kij->ij", np.diag(c_xx), self._payload[0])
        if kind == "entries":
            return np.diag(self._payload[0] @ np.diag(c_xx))
        if kind == "shared_svd":
            u, v, e1, e2 = self._payload
            quad = np.einsum("ik,kl,il->i", v[: e1.size], c_xx, v[: e1.size])
            return (u[:, : e1.size] * ((e2 - e1**2) * quad)) @ u[:, : e1.size].T
        if kind == "circulant":
            spec = np.fft.fft2(self._payload[0]) * np.fft.fft2(c_xx)
            return np.fft.ifft2(spec).real
        raise AssertionError(kind)

    def op_obs_cross(self, theta_x: np.ndarray) -> np.ndarray:
        """Cross-covariance ``Caa (I_m (x) theta_x^T)^T`` of vec(A) and y, (mn, m)."""
        tx = np.asarray(theta_x, dtype=float)
        m, n = self.mean_op.shape
        kind = self._kind
        if kind == "zero":
            return np.zeros((m * n, m))
        if kind == "grid":
            return np.einsum("ijcl,l->icj", self._payload[0], tx).reshape(m * n, m)
        if kind == "rows":
            cay = np.zeros((m, n, m))
            prods = np.einsum("ikl,l->ik", self._payload[0], tx)
            for i in range(m):
                cay[i, :, i] = prods[i]
            return cay.reshape(m * n, m)
        if kind == "columns":
            covs = self._payload[0]  # (n, m, m)
            cay = np.einsum("cij,c->icj", covs, tx)
            return cay.reshape(m * n, m)
        if kind == "entries":
            variances = self._payload[0]
            cay = np.zeros((m, n, m))
            for i in range(m):
                cay[i, :, i] = variances[i] * tx
            return cay.reshape(m * n, m)
        if kind == "shared_svd":
            u, v, e1, e2 = self._payload
            r = e1.size
            w = (e2 - e1**2) * (v[:r] @ tx)  # var_i * <v_i, theta_x>
            # sum_i w_i * vec(u_i v_i^T) u_i^T
            lift = np.einsum("ri,ic->irc", u[:, :r], v[:r]).reshape(m * n, r)
            return (lift * w) @ u[:, :r].T
        if kind == "circulant":
            ckk = self._payload[0]
            # rowwise circular convolution of ckk with theta_x
            w = np.fft.ifft(np.fft.fft(ckk, axis=1) * np.fft.fft(tx), axis=1).real
            idx = (np.arange(m)[:, None] - np.arange(n)[None, :]) % n
            return w[idx.reshape(-1), :]
        raise AssertionError(kind)

    def row_cov_diag_sum(self) -> np.ndarray:
        """Sum of the diagonal blocks, ``sum_i C_{A_i A_i}`` with shape (n, n)."""
        m, n = self.mean_op.shape
        kind = self._kind
        if kind == "zero":
            return np.zeros((n, n))
        if kind == "grid":
            return np.einsum("iikl->kl", self._payload[0])
        if kind == "rows":
            return self._payload[0].sum(axis=0)
        if kind == "columns":
            return np.diag(np.trace(self._payload[0], axis1=1, axis2=2))
        if kind == "entries":
            return np.diag(self._payload[0].sum(axis=0))
        if kind == "shared_svd":
            u, v, e1, e2 = self._payload
            return (v[: e1.size].T * (e2 - e1**2)) @ v[: e1.size]
        if kind == "circulant":
            ckk = self._payload[0]
            rows = np.arange(n)[:, None]
            g = ckk[rows.ravel()[:, None], (rows + np.arange(n)[None, :]) % n].sum(0)
            return g[(np.arange(n)[:, None] - np.arange(n)[None, :]) % n]
        raise AssertionError(kind)

    def second_moment_gram(self) -> np.ndarray:
        """Exact ``E[A^T A] = mean_op^T mean_op + sum_i C_{A_i A_i}``."""
        return self.mean_op.T @ self.mean_op + self.row_cov_diag_sum()


# ---------------------------------------------------------------------------
# Problem moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemMoments:
    """First and second moments of signal, operator and noise.

    ``beta`` is the white-noise level: the noise covariance is ``beta * I``.
    """

    theta_x: np.ndarray
    c_xx: np.ndarray
    op: OperatorEnsemble
    beta: float

    def __post_init__(self):
        theta_x = _readonly(_asarray(self.theta_x, "theta_x").reshape(-1))
        c_xx = _readonly(_asarray(self.c_xx, "c_xx"))
        object.__setattr__(self, "theta_x", theta_x)
        object.__setattr__(self, "c_xx", c_xx)
        object.__setattr__(self, "beta", float(self.beta))
        n = theta_x.size
        if c_xx.shape != (n, n):
            raise ValueError(
                f"c_xx must have shape {(n, n)} to match theta_x, got {c_xx.shape}"
            )
        if self.op.n != n:
            raise ValueError(
                f"operator expects signals of length {self.op.n}, got {n}"
            )
        if self.beta < 0:
            raise ValueError("noise level beta must be nonnegative")
        check_symmetric(c_xx, "c_xx")
        check_psd(c_xx, "c_xx", tol=1e-10)

    @property
    def n(self) -> int:
        return self.theta_x.size

    @property
    def m(self) -> int:
        return self.op.m


@dataclass(frozen=True)
class BlindObsCov:
    """The four additive pieces of the blind observation covariance.

    ``total = mean_term + kron_term + d_term + noise_term`` where the mean
    term is ``mean_op Cxx mean_op^T``, the Kronecker term couples the
    operator covariance with the signal mean, ``d_term`` couples the two
    covariances, and the noise term is ``beta * I``.
    """

    mean_term: np.ndarray
    kron_term: np.ndarray
    d_term: np.ndarray
    noise_term: np.ndarray
    total: np.ndarray = field(init=False)

    def __post_init__(self):
        total = self.mean_term + self.kron_term + self.d_term + self.noise_term
        object.__setattr__(self, "total", _readonly(total))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def cross_cov_signal_obs(pm: ProblemMoments) -> np.ndarray:
    """Cross-covariance of signal and observation, ``Cxx mean_op^T`` (n, m)."""
    return pm.c_xx @ pm.op.mean_op.T


def obs_mean(pm: ProblemMoments) -> np.ndarray:
    """Mean observation ``mean_op theta_x`` (the noise is centered)."""
    return pm.op.mean_op @ pm.theta_x


def interaction_matrix(pm: ProblemMoments) -> np.ndarray:
    """Covariance-covariance coupling ``D_{ij} = sum (C_{A_i A_j} o Cxx)``."""
    return pm.op.interaction(pm.c_xx)


def cov_obs_blind(pm: ProblemMoments) -> BlindObsCov:
    """Observation covariance of the blind model, split into its four terms."""
    mean_term = pm.op.mean_op @ pm.c_xx @ pm.op.mean_op.T
    kron_term = pm.op.kron_quad(pm.theta_x)
    d_term = pm.op.interaction(pm.c_xx)
    noise_term = pm.beta * np.eye(pm.m)
    cov = BlindObsCov(mean_term, kron_term, d_term, noise_term)
    check_symmetric(cov.total, "observation covariance")
    try:
        check_psd(cov.total, "observation covariance")
    except ValueError as exc:
        raise ValueError(f"inconsistent input moments: {exc}") from exc
    return cov


def cov_op_obs(pm: ProblemMoments) -> np.ndarray:
    """Cross-covariance of vec(A) and y, ``Caa (I_m (x) theta_x^T)^T`` (mn, m)."""
    return pm.op.op_obs_cross(pm.theta_x)
