"""Structured operator ensembles for periodic 1D convolution.

A length-``n`` kernel ``k`` induces the circulant matrix
``T(k) = sum_s k[s] B_s`` where ``B_s`` circularly shifts a signal forward
by ``s`` positions (``B_0 = I``); equivalently ``T(k)[r, c] = k[(r - c) % n]``
and ``T(k) x`` is the periodic convolution of ``k`` with ``x``.  Because
``T`` is linear, kernel statistics propagate exactly to operator statistics,
which keeps storage at kernel size instead of ``(mn)^2``.

All members of the family share the discrete Fourier eigenbasis, so singular
values are tracked in a fixed frequency ordering (DC first, then conjugate
pairs by increasing frequency) rather than sorted by magnitude per draw;
magnitude sorting would mix indices across draws and corrupt the per-index
moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .moments import OperatorEnsemble, check_psd, check_symmetric

__all__ = [
    "ShiftBasis",
    "KernelStats",
    "frequency_order",
    "shift_matrix",
    "conv_matrix_from_kernel",
    "vec_lift_matrix",
    "circular_convolve",
    "convolve_pairs",
    "operator_mean_from_kernel",
    "operator_cov_from_kernel",
    "singular_moments_circulant",
]


def frequency_order(n: int) -> np.ndarray:
    """DFT bin indices ordered DC first, then conjugate pairs (f, n-f)."""
    order = [0]
    for f in range(1, (n - 1) // 2 + 1):
        order.extend((f, n - f))
    if n % 2 == 0 and n > 1:
        order.append(n // 2)
    return np.array(order, dtype=int)


def shift_matrix(n: int, shift: int) -> np.ndarray:
    """Permutation matrix rolling a vector forward by ``shift`` positions."""
    cols = (np.arange(n) - shift) % n
    mat = np.zeros((n, n))
    mat[np.arange(n), cols] = 1.0
    return mat


@dataclass(frozen=True)
class ShiftBasis:
    """The family of circulant shift matrices of size ``n``.

    ``matrix(s)`` shifts forward by ``s`` (0-based; the identity is shift 0)
    and the family composes additively: ``matrix(s) @ matrix(t) ==
    matrix((s + t) % n)``.
    """

    n: int

    def matrix(self, shift: int) -> np.ndarray:
        return shift_matrix(self.n, shift % self.n)

    def matrices(self) -> list:
        return [self.matrix(s) for s in range(self.n)]


def conv_matrix_from_kernel(k) -> np.ndarray:
    """Circulant convolution matrix ``T(k)`` with ``T(k)[r, c] = k[(r-c) % n]``."""
    k = np.asarray(k, dtype=float).reshape(-1)
    n = k.size
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return k[idx]


def vec_lift_matrix(n: int) -> np.ndarray:
    """Matrix ``P`` (n^2, n) with ``vec(T(k)) = P k`` for row-major vec."""
    if n < 1:
        raise ValueError("n must be at least 1")
    p = np.zeros((n * n, n))
    rows = np.arange(n)
    for s in range(n):
        p[rows * n + (rows - s) % n, s] = 1.0
    return p


def circular_convolve(k, x) -> np.ndarray:
    """Periodic convolution ``y[t] = sum_s k[s] x[(t-s) % n]``, equals T(k) x."""
    k = np.asarray(k, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if k.size != x.size:
        raise ValueError(f"length mismatch: kernel {k.size} vs signal {x.size}")
    return np.fft.irfft(np.fft.rfft(k) * np.fft.rfft(x), n=k.size)


def convolve_pairs(kernels: np.ndarray, signals: np.ndarray) -> np.ndarray:
    """Rowwise periodic convolution of paired kernels and signals (N, n)."""
    kernels = np.asarray(kernels, dtype=float)
    signals = np.asarray(signals, dtype=float)
    if kernels.shape != signals.shape:
        raise ValueError("kernels and signals must have matching shapes")
    spec = np.fft.rfft(kernels, axis=1) * np.fft.rfft(signals, axis=1)
    return np.fft.irfft(spec, n=kernels.shape[1], axis=1)


@dataclass(frozen=True)
class KernelStats:
    """Mean kernel and kernel covariance of a random convolution kernel."""

    theta_k: np.ndarray
    c_kk: np.ndarray

    def __post_init__(self):
        theta_k = np.array(self.theta_k, dtype=float).reshape(-1)
        c_kk = np.array(self.c_kk, dtype=float)
        n = theta_k.size
        if c_kk.shape != (n, n):
            raise ValueError(f"c_kk must have shape {(n, n)}, got {c_kk.shape}")
        check_symmetric(c_kk, "kernel covariance", tol=1e-8)
        check_psd(c_kk, "kernel covariance")
        theta_k.setflags(write=False)
        c_kk.setflags(write=False)
        object.__setattr__(self, "theta_k", theta_k)
        object.__setattr__(self, "c_kk", c_kk)

    @property
    def n(self) -> int:
        return self.theta_k.size


def operator_mean_from_kernel(ks: KernelStats) -> np.ndarray:
    """Convolution matrix of the mean kernel, ``T(theta_k)``."""
    return conv_matrix_from_kernel(ks.theta_k)


def operator_cov_from_kernel(ks: KernelStats) -> OperatorEnsemble:
    """Circulant operator ensemble whose vec-covariance is ``P c_kk P^T``.

    The row cross-covariances come out as
    ``C_{A_i A_j}[c, c'] = c_kk[(i-c) % n, (j-c') % n]``.
    """
    return OperatorEnsemble.circulant(operator_mean_from_kernel(ks), ks.c_kk)


def _gaussian_kernel_draws(stats: KernelStats, n_draws: int, seed: int):
    eigval, eigvec = np.linalg.eigh(stats.c_kk)
    factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
    z = rng.normals(seed, "kernel-moments", (n_draws, stats.n))
    return stats.theta_k + z @ factor.T


def singular_moments_circulant(
    source, n_draws: int, seed: int = 0
) -> np.ndarray:
    """Per-index singular-value moments of T(k) under random kernels, (n, 2).

    ``source`` is either a :class:`KernelStats` (kernels are then drawn from
    the Gaussian with those moments) or any object with a
    ``draw_kernels(n_draws, seed)`` method, e.g. the shifted-kernel ensembles
    in :mod:`blind_lmmse.datagen` whose law is not Gaussian.  Singular values
    of a circulant matrix are the DFT magnitudes of its kernel; they are
    paired with the fixed frequency ordering of :func:`frequency_order`.
    Columns of the result are the empirical first and second moments.
    """
    if n_draws < 2:
        raise ValueError("n_draws must be at least 2")
    if isinstance(source, KernelStats):
        draws = _gaussian_kernel_draws(source, n_draws, seed)
    elif hasattr(source, "draw_kernels"):
        draws = np.asarray(source.draw_kernels(n_draws, seed), dtype=float)
    else:
        raise TypeError(
            "source must be KernelStats or expose draw_kernels(n_draws, seed)"
        )
    if np.any(~draws.any(axis=1)):
        raise ValueError("degenerate draw: all-zero kernel")
    spectra = np.abs(np.fft.fft(draws, axis=1))[:, frequency_order(draws.shape[1])]
    e1 = spectra.mean(axis=0)
    e2 = (spectra**2).mean(axis=0)
    # identical draws must report exactly zero variance
    constant = np.ptp(spectra, axis=0) == 0.0
    e2[constant] = e1[constant] ** 2
    return np.column_stack([e1, e2])
