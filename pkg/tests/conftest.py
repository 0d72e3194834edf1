"""Shared brute-force oracles and instance builders for the test suite.

The oracles here intentionally avoid the library's vectorized code paths:
interaction matrices use explicit double sums, convolutions use the O(n^2)
definition, and covariances come straight from their defining expectations,
so they can serve as independent references.
"""

import numpy as np

from blind_lmmse.moments import OperatorEnsemble, ProblemMoments


def brute_interaction(grid: np.ndarray, c_xx: np.ndarray) -> np.ndarray:
    """Entrywise double sum over the Hadamard product, straight from the definition."""
    m, _, n, _ = grid.shape
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(n):
                for q in range(n):
                    acc += grid[i, j, k, q] * c_xx[k, q]
            out[i, j] = acc
    return out


def brute_kron_quad(grid: np.ndarray, theta_x: np.ndarray) -> np.ndarray:
    m = grid.shape[0]
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            out[i, j] = theta_x @ grid[i, j] @ theta_x
    return out


def brute_op_obs_cross(grid: np.ndarray, theta_x: np.ndarray) -> np.ndarray:
    m, _, n, _ = grid.shape
    out = np.zeros((m * n, m))
    for i in range(m):
        for j in range(m):
            out[i * n : (i + 1) * n, j] = grid[i, j] @ theta_x
    return out


def direct_convolve(k: np.ndarray, x: np.ndarray) -> np.ndarray:
    """O(n^2) periodic convolution, the defining sum."""
    n = len(k)
    out = np.zeros(n)
    for t in range(n):
        for s in range(n):
            out[t] += k[s] * x[(t - s) % n]
    return out


def random_problem(gen: np.random.Generator, n: int, m: int,
                   beta=None) -> ProblemMoments:
    """Well-conditioned unstructured instance with PD Caa and Cxx."""
    w = gen.normal(size=(m * n, m * n))
    caa = w @ w.T / (m * n) + 0.3 * np.eye(m * n)
    grid = caa.reshape(m, n, m, n).transpose(0, 2, 1, 3)
    wx = gen.normal(size=(n, n))
    c_xx = wx @ wx.T / n + 0.3 * np.eye(n)
    mean_op = gen.normal(size=(m, n)) / np.sqrt(n)
    theta_x = gen.normal(size=n)
    if beta is None:
        beta = float(gen.uniform(0.1, 1.0))
    op = OperatorEnsemble.from_row_cov_grid(mean_op, grid)
    return ProblemMoments(theta_x, c_xx, op, beta)


def paired_gaussian_draws(pm: ProblemMoments, n_draws: int,
                          gen: np.random.Generator):
    """Paired draws (x, y) of the model y = A x + eps with Gaussian marginals."""
    m, n = pm.m, pm.n
    caa = pm.op.assemble_cov()
    eigval, eigvec = np.linalg.eigh(caa)
    a_factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
    eigval, eigvec = np.linalg.eigh(pm.c_xx)
    x_factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
    a = gen.normal(size=(n_draws, m * n)) @ a_factor.T + pm.op.mean_op.reshape(-1)
    x = gen.normal(size=(n_draws, n)) @ x_factor.T + pm.theta_x
    eps = gen.normal(size=(n_draws, m)) * np.sqrt(pm.beta)
    y = np.einsum("kij,kj->ki", a.reshape(n_draws, m, n), x) + eps
    return x, y


def gaussian_mc_observations(pm: ProblemMoments, n_draws: int,
                             gen: np.random.Generator) -> np.ndarray:
    """Draws of y = A x + eps with Gaussian marginals matching pm."""
    return paired_gaussian_draws(pm, n_draws, gen)[1]


def entrywise_cov_check(samples: np.ndarray, target: np.ndarray) -> float:
    """Worst |empirical - target| covariance entry in units of 3 standard errors."""
    centered = samples - samples.mean(axis=0)
    prods = centered[:, :, None] * centered[:, None, :]
    emp = prods.mean(axis=0)
    se = np.sqrt(prods.var(axis=0) / samples.shape[0])
    se = np.maximum(se, 1e-300)
    return float((np.abs(emp - target) / (3.0 * se)).max())
