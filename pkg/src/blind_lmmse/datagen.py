"""Reproducible synthetic data: sinusoid priors, shifted Gaussian kernels, AWGN.

Signals are non-zero-mean sinusoids with isotropic Gaussian perturbations;
observations are periodic convolutions with randomly perturbed Gaussian
kernels plus white noise.  Kernels are perturbed through two channels: a
random fractional shift of the profile center and a random profile width.
Fractional shifts re-evaluate the continuous profile at shifted abscissae
and renormalize (interpolating a tabulated kernel would be ill-defined for
non-integer shifts); random widths follow a lognormal law matched to the
requested mean and variance, keeping the width strictly positive.

Every dataset is a pure function of ``(seed, parameters)`` and carries a
flat manifest sufficient to regenerate it bit-identically within one build.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .bounds import SourceConditionPrior, source_condition_prior
from .convolution import KernelStats, convolve_pairs, operator_cov_from_kernel
from .estimators import SampleSet
from .moments import ProblemMoments

__all__ = [
    "SinusoidPrior",
    "ShiftedKernelEnsemble",
    "Dataset",
    "sample_signals",
    "sample_kernel",
    "generate_dataset",
    "kernel_stats_from_draws",
    "problem_moments_from",
    "save_dataset",
    "load_dataset",
    "dataset_from_manifest",
    "read_manifest",
    "write_manifest",
]

GENERATOR_VERSION = "1"
DEFAULT_STAT_DRAWS = 200_000


@dataclass(frozen=True)
class SinusoidPrior:
    """Gaussian prior around a sinusoidal mean with covariance ``amplitude * I``."""

    n: int
    amplitude: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("signal length must be positive")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")

    @property
    def theta_x(self) -> np.ndarray:
        i = np.arange(1, self.n + 1)
        return self.amplitude * np.sin(2.0 * np.pi * i / self.n)

    @property
    def c_xx(self) -> np.ndarray:
        return self.amplitude * np.eye(self.n)


@dataclass(frozen=True)
class ShiftedKernelEnsemble:
    """Normalized Gaussian kernels with random shift and (optionally) width.

    The profile ``exp(-(t - shift)^2 / (2 width^2))`` is evaluated at ``d``
    integer offsets centered circularly at index 0, normalized to unit sum,
    and zero-padded to length ``n``.  Per draw, ``shift ~ N(0, sigma_theta^2)``
    and ``width`` is lognormal with mean ``spread`` and standard deviation
    ``spread_std`` (degenerate at ``spread`` when ``spread_std = 0``).
    """

    d: int
    spread: float
    sigma_theta: float
    n: int
    spread_std: float = 0.0

    def __post_init__(self):
        if not 1 <= self.d <= self.n:
            raise ValueError(f"support size d={self.d} must lie in [1, n={self.n}]")
        if self.spread <= 0:
            raise ValueError("spread must be positive")
        if self.sigma_theta < 0 or self.spread_std < 0:
            raise ValueError("randomization levels must be nonnegative")

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.d) - (self.d - 1) // 2

    @property
    def support(self) -> np.ndarray:
        return self.offsets % self.n

    def draw_support_values(
        self, count: int, seed: int, index_offset: int = 0
    ) -> np.ndarray:
        """Kernel values on the ``d`` support offsets for draws
        ``[index_offset, index_offset + count)`` of the (seed, "kernel") stream."""
        z = rng.normals(seed, "kernel", (count, 2), offset=2 * index_offset)
        shifts = self.sigma_theta * z[:, 0]
        if self.spread_std > 0:
            log_var = math.log1p((self.spread_std / self.spread) ** 2)
            widths = self.spread * np.exp(
                math.sqrt(log_var) * z[:, 1] - 0.5 * log_var
            )
        else:
            widths = np.full(count, self.spread)
        t = self.offsets[None, :] - shifts[:, None]
        values = np.exp(-0.5 * (t / widths[:, None]) ** 2)
        totals = values.sum(axis=1)
        if np.any(totals == 0.0):
            raise ValueError("kernel draw underflowed to an all-zero profile")
        return values / totals[:, None]

    def draw_kernels(self, count: int, seed: int, index_offset: int = 0) -> np.ndarray:
        """Length-``n`` kernels for draws ``[index_offset, index_offset+count)``."""
        out = np.zeros((count, self.n))
        out[:, self.support] = self.draw_support_values(count, seed, index_offset)
        return out


def sample_kernel(ens: ShiftedKernelEnsemble, seed: int) -> np.ndarray:
    """One kernel draw (draw index 0 of the seed's kernel stream)."""
    return ens.draw_kernels(1, seed)[0]


def _cov_factor(c_xx: np.ndarray) -> np.ndarray:
    eigval, eigvec = np.linalg.eigh(0.5 * (c_xx + c_xx.T))
    scale = np.abs(eigval).max() if eigval.size else 0.0
    if scale > 0 and eigval.min() < -1e-10 * scale:
        raise ValueError(
            f"covariance is not positive semidefinite (min eig {eigval.min():.3e})"
        )
    return eigvec * np.sqrt(np.clip(eigval, 0.0, None))


def sample_signals(prior, count: int, seed: int) -> np.ndarray:
    """Gaussian draws ``N(theta_x, c_xx)`` from any prior exposing those fields."""
    if count < 1:
        raise ValueError("count must be at least 1")
    theta_x = np.asarray(prior.theta_x, dtype=float)
    factor = _cov_factor(np.asarray(prior.c_xx, dtype=float))
    z = rng.normals(seed, "signal", (count, theta_x.size))
    return theta_x + z @ factor.T


@dataclass(frozen=True)
class Dataset:
    """A sample set plus the manifest that regenerates it."""

    samples: SampleSet
    manifest: dict


def kernel_stats_from_draws(
    ens: ShiftedKernelEnsemble,
    n_draws: int = DEFAULT_STAT_DRAWS,
    seed: int = 0,
    chunk: int = 20_000,
) -> KernelStats:
    """Empirical kernel mean and covariance over ``n_draws`` draws.

    Accumulates on the ``d`` support offsets (the kernel is zero elsewhere),
    so memory stays at ``O(chunk * d)``.
    """
    if n_draws < 2:
        raise ValueError("n_draws must be at least 2")
    d = ens.d
    total = np.zeros(d)
    outer = np.zeros((d, d))
    done = 0
    while done < n_draws:
        size = min(chunk, n_draws - done)
        vals = ens.draw_support_values(size, seed, index_offset=done)
        total += vals.sum(axis=0)
        outer += vals.T @ vals
        done += size
    mean = total / n_draws
    cov = outer / n_draws - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    # clamp the tiny negative eigenvalues of an empirical covariance
    eigval, eigvec = np.linalg.eigh(cov)
    cov = (eigvec * np.clip(eigval, 0.0, None)) @ eigvec.T
    theta_k = np.zeros(ens.n)
    c_kk = np.zeros((ens.n, ens.n))
    theta_k[ens.support] = mean
    c_kk[np.ix_(ens.support, ens.support)] = 0.5 * (cov + cov.T)
    return KernelStats(theta_k, c_kk)


def problem_moments_from(
    prior,
    ens: ShiftedKernelEnsemble,
    sigma_n: float,
    stat_draws: int = DEFAULT_STAT_DRAWS,
    stat_seed: int = 0,
):
    """Analytic problem moments induced by a prior and a kernel ensemble.

    Kernel statistics are estimated once by Monte Carlo and propagated in
    closed form; the noise level is ``beta = sigma_n**2``.  Returns
    ``(ProblemMoments, KernelStats)``.
    """
    stats = kernel_stats_from_draws(ens, stat_draws, stat_seed)
    op = operator_cov_from_kernel(stats)
    pm = ProblemMoments(prior.theta_x, prior.c_xx, op, beta=sigma_n**2)
    return pm, stats


def generate_dataset(
    prior,
    ens: ShiftedKernelEnsemble,
    sigma_n: float,
    count: int,
    seed: int,
    kernel_stats: KernelStats | None = None,
    stat_draws: int = DEFAULT_STAT_DRAWS,
    stat_seed: int | None = None,
    amplitude: float | None = None,
) -> Dataset:
    """Draw ``count`` independent pairs ``y = k * x + noise``.

    Signal, kernel and noise draws come from independent component streams
    of ``seed``.  The sample set is centered with the true signal mean and
    with the observation mean induced by ``kernel_stats`` (estimated here,
    with the parameters recorded in the manifest, when not supplied).
    A :class:`SourceConditionPrior` must carry the sinusoidal mean of a
    :class:`SinusoidPrior`; pass that prior's ``amplitude`` so the manifest
    can regenerate the mean bit-identically.
    """
    if sigma_n < 0:
        raise ValueError("sigma_n must be nonnegative")
    if stat_seed is None:
        stat_seed = rng.derive_seed(seed, "kernel-stats")
    if kernel_stats is None:
        kernel_stats = kernel_stats_from_draws(ens, stat_draws, stat_seed)
    xs = sample_signals(prior, count, seed)
    kernels = ens.draw_kernels(count, seed)
    noise = sigma_n * rng.normals(seed, "noise", (count, ens.n))
    ys = convolve_pairs(kernels, xs) + noise
    theta_x = np.asarray(prior.theta_x, dtype=float)
    theta_y = convolve_pairs(
        kernel_stats.theta_k[None, :], theta_x[None, :]
    )[0]
    if isinstance(prior, SourceConditionPrior):
        if amplitude is None:
            raise ValueError(
                "source-condition datasets need the sinusoid amplitude of "
                "the prior mean for the manifest"
            )
        if not np.array_equal(theta_x, SinusoidPrior(ens.n, amplitude).theta_x):
            raise ValueError(
                "prior mean does not match the sinusoid of the given amplitude"
            )
        alpha_entry = repr(float(prior.alpha))
    elif isinstance(prior, SinusoidPrior):
        alpha_entry = "none"
        amplitude = prior.amplitude
    else:
        raise TypeError(f"unsupported prior type {type(prior).__name__}")
    manifest = {
        "generator": "blind-lmmse-datagen",
        "version": GENERATOR_VERSION,
        "seed": str(int(seed)),
        "n": str(ens.n),
        "n_samples": str(int(count)),
        "amplitude": repr(float(amplitude)),
        "d": str(ens.d),
        "spread": repr(float(ens.spread)),
        "sigma_theta": repr(float(ens.sigma_theta)),
        "spread_std": repr(float(ens.spread_std)),
        "sigma_n": repr(float(sigma_n)),
        "alpha": alpha_entry,
        "stat_draws": str(int(stat_draws)),
        "stat_seed": str(int(stat_seed)),
    }
    return Dataset(SampleSet(xs, ys, theta_x, theta_y), manifest)


def dataset_from_manifest(manifest) -> Dataset:
    """Regenerate the dataset a manifest describes, bit-identically."""
    if isinstance(manifest, (str, Path)):
        manifest = read_manifest(manifest)
    if manifest.get("generator") != "blind-lmmse-datagen":
        raise ValueError("manifest was not produced by blind-lmmse datagen")
    if manifest.get("version") != GENERATOR_VERSION:
        raise ValueError(
            f"manifest version {manifest.get('version')!r} unsupported "
            f"(expected {GENERATOR_VERSION})"
        )
    n = int(manifest["n"])
    ens = ShiftedKernelEnsemble(
        d=int(manifest["d"]),
        spread=float(manifest["spread"]),
        sigma_theta=float(manifest["sigma_theta"]),
        n=n,
        spread_std=float(manifest["spread_std"]),
    )
    stat_draws = int(manifest["stat_draws"])
    stat_seed = int(manifest["stat_seed"])
    stats = kernel_stats_from_draws(ens, stat_draws, stat_seed)
    sinusoid = SinusoidPrior(n, float(manifest["amplitude"]))
    if manifest["alpha"] == "none":
        prior = sinusoid
    else:
        op = operator_cov_from_kernel(stats)
        prior = source_condition_prior(
            op, float(manifest["alpha"]), theta_x=sinusoid.theta_x
        )
    return generate_dataset(
        prior,
        ens,
        float(manifest["sigma_n"]),
        int(manifest["n_samples"]),
        int(manifest["seed"]),
        kernel_stats=stats,
        stat_draws=stat_draws,
        stat_seed=stat_seed,
        amplitude=float(manifest["amplitude"]),
    )


# ---------------------------------------------------------------------------
# Persistence: manifest.txt plus one CSV per sample matrix
# ---------------------------------------------------------------------------


def write_manifest(manifest: dict, path) -> None:
    lines = [f"{key}={value}" for key, value in manifest.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    manifest = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        manifest[key.strip()] = value.strip()
    return manifest


def _write_matrix_csv(path, mat: np.ndarray) -> None:
    n_cols = mat.shape[1]
    header = "i," + ",".join(f"v{j}" for j in range(n_cols))
    lines = [header]
    for i, row in enumerate(mat):
        lines.append(f"{i}," + ",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_matrix_csv(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [[float(v) for v in line.split(",")[1:]] for line in lines[1:] if line]
    return np.array(rows)


def save_dataset(dataset: Dataset, out_dir) -> list:
    """Persist manifest.txt, x.csv and y.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(dataset.manifest, out / "manifest.txt")
    _write_matrix_csv(out / "x.csv", dataset.samples.xs)
    _write_matrix_csv(out / "y.csv", dataset.samples.ys)
    return [out / "manifest.txt", out / "x.csv", out / "y.csv"]


def load_dataset(out_dir) -> Dataset:
    """Load a persisted dataset; sample values round-trip through decimal text."""
    out = Path(out_dir)
    manifest = read_manifest(out / "manifest.txt")
    regenerated = dataset_from_manifest(manifest)
    xs = _read_matrix_csv(out / "x.csv")
    ys = _read_matrix_csv(out / "y.csv")
    samples = SampleSet(
        xs, ys, regenerated.samples.theta_x, regenerated.samples.theta_y
    )
    return Dataset(samples, manifest)
