"""Experiment drivers behind the ``blind-lmmse`` CLI.

Each command writes schema-stable CSV files (fixed column order, header
row, full-precision decimals) and optionally an SVG figure; re-running a
command with the same configuration and build reproduces the CSV bytes.
All randomness is derived from the configured seed through named component
streams, so sweep cells are independent jobs and row order is fixed by
sorting before writing, not by execution order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .bounds import (
    BoundReport,
    approx_bound_rhs,
    default_lambda,
    estimate_radii,
    lmmse_norm_bound,
    main_bound_rhs,
    nonblind_bound_rhs,
    sampling_bound_rhs,
    sampling_constant,
    sampling_threshold,
    source_condition_prior,
)
from .config import ExperimentConfig
from .convolution import singular_moments_circulant
from .datagen import (
    ShiftedKernelEnsemble,
    SinusoidPrior,
    generate_dataset,
    kernel_stats_from_draws,
    save_dataset,
)
from .estimators import (
    IllConditionedError,
    SampleSet,
    empirical_lmmse,
    lmmse_blind_signal,
    lmmse_operator,
    tikhonov_operator,
    tikhonov_signal,
)
from .moments import OperatorEnsemble, ProblemMoments, cov_obs_blind, obs_mean
from .convolution import operator_cov_from_kernel

__all__ = [
    "SweepResult",
    "RegimeConfig",
    "REGIMES",
    "fit_loglog_slope",
    "run_demo",
    "run_sweep_alpha",
    "run_sweep_cv",
    "run_sweep_n",
    "run_bounds",
    "run_datagen",
    "run_verify",
    "thread_cap",
]


@dataclass(frozen=True)
class SweepResult:
    """One sweep cell: the swept parameter, measured error, and bound terms."""

    sweep_id: str
    parameter: str
    value: float
    lhs_mean: float
    lhs_std: float
    report: "BoundReport"
    n_test: int
    seed: int

    def __post_init__(self):
        if self.lhs_std < 0:
            raise ValueError("lhs_std must be nonnegative")

    @property
    def rhs_total(self) -> float:
        return self.report.total


@dataclass(frozen=True)
class RegimeConfig:
    """One difficulty regime of the convergence study."""

    label: str
    sigma_n: float
    sigma_theta: float


# R1 is the baseline data model; R2 triples the noise, R3 triples the shift
# variability.
REGIMES = (
    RegimeConfig("R1", 0.5, 0.4),
    RegimeConfig("R2", 1.5, 0.4),
    RegimeConfig("R3", 0.5, 1.2),
)


def thread_cap() -> int:
    """Parallelism cap: BLIND_LMMSE_THREADS when set, else a small default."""
    env = os.environ.get("BLIND_LMMSE_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def fit_loglog_slope(points):
    """Least-squares slope of log(err) against log(N).

    ``points`` is a sequence of ``(N, err)`` with at least three strictly
    positive pairs; returns ``(slope, intercept, r2)``.
    """
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a slope")
    if any(n <= 0 or e <= 0 for n, e in pts):
        raise ValueError("log-log fit requires strictly positive values")
    log_n = np.log([n for n, _ in pts])
    log_e = np.log([e for _, e in pts])
    design = np.column_stack([log_n, np.ones_like(log_n)])
    coef, *_ = np.linalg.lstsq(design, log_e, rcond=None)
    residual = log_e - design @ coef
    ss_res = float(residual @ residual)
    centered = log_e - log_e.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(coef[0]), float(coef[1]), r2


# ---------------------------------------------------------------------------
# Shared pipeline pieces
# ---------------------------------------------------------------------------


def _ensemble(cfg: ExperimentConfig, sigma_theta=None, spread_std=None):
    return ShiftedKernelEnsemble(
        d=cfg.kernel_size,
        spread=cfg.kernel_spread,
        sigma_theta=cfg.sigma_theta if sigma_theta is None else sigma_theta,
        n=cfg.n,
        spread_std=cfg.spread_std if spread_std is None else spread_std,
    )


def _auto_lambda(pm: ProblemMoments, samples, n_samples: int):
    """Default regularization from the sampling-bound preconditions."""
    rho_x, rho_y = estimate_radii(samples)
    cov = cov_obs_blind(pm).total
    gamma = float(np.linalg.eigvalsh(cov).min())
    k_const = sampling_constant(pm, rho_x, rho_y, cov)
    lam = default_lambda(k_const, gamma, n_samples)
    info = {"rho_x": rho_x, "rho_y": rho_y, "gamma": gamma, "K": k_const}
    return lam, info


def _test_errors(estimator, samples) -> np.ndarray:
    """Squared reconstruction errors of an estimator on held-out pairs."""
    hats = estimator.apply(samples.ys)
    return ((samples.xs - hats) ** 2).sum(axis=1)


def _write_run_manifest(out: Path, command: str, cfg: ExperimentConfig, extra=None):
    entries = {
        "command": command,
        "seed": cfg.seed,
        "n": cfg.n,
        "n_train": cfg.n_train,
        "n_test": cfg.n_test,
        "lambda": cfg.lam,
    }
    if extra:
        entries.update(extra)
    lines = [f"{k}={_fmt(v)}" for k, v in entries.items()]
    (out / "run_manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _out_dir(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------


def run_demo(cfg: ExperimentConfig, out_dir, plot: bool = False):
    """Reconstruct one held-out observation with the exact-moment estimator."""
    out = _out_dir(out_dir)
    prior = SinusoidPrior(cfg.n, cfg.amplitude)
    ens = _ensemble(cfg)
    stats = kernel_stats_from_draws(
        ens, cfg.stat_draws, rng.derive_seed(cfg.seed, "kernel-stats")
    )
    op = operator_cov_from_kernel(stats)
    pm = ProblemMoments(prior.theta_x, prior.c_xx, op, beta=cfg.sigma_n**2)
    lam = cfg.resolve_lambda()
    lam = 0.0 if lam is None else lam  # exact moments: unregularized by default
    estimator = lmmse_blind_signal(pm, lam)
    held_out = generate_dataset(
        prior, ens, cfg.sigma_n, 1, rng.derive_seed(cfg.seed, "demo-test"),
        kernel_stats=stats,
    )
    x_true = held_out.samples.xs[0]
    y = held_out.samples.ys[0]
    x_hat = estimator.apply(y)
    rows = [
        (i, x_true[i], prior.theta_x[i], y[i], x_hat[i]) for i in range(cfg.n)
    ]
    paths = [
        write_csv(out / "demo.csv", ["i", "x_true", "x_mean", "y", "x_hat"], rows)
    ]
    _write_run_manifest(out, "demo", cfg)
    if plot:
        from .plots import plot_demo

        paths.append(plot_demo(out / "demo.svg", x_true, prior.theta_x, y, x_hat))
    return paths


# ---------------------------------------------------------------------------
# sweep-alpha
# ---------------------------------------------------------------------------


def run_sweep_alpha(cfg: ExperimentConfig, out_dir, plot: bool = False):
    """Empirical reconstruction error against the approximation bound
    across source-condition exponents."""
    out = _out_dir(out_dir)
    ens = _ensemble(cfg)
    stats = kernel_stats_from_draws(
        ens, cfg.stat_draws, rng.derive_seed(cfg.seed, "kernel-stats")
    )
    sv_moments = singular_moments_circulant(
        ens, cfg.sv_draws, rng.derive_seed(cfg.seed, "singular-moments")
    )
    op = operator_cov_from_kernel(stats).with_singular_moments(sv_moments)
    sinusoid = SinusoidPrior(cfg.n, cfg.amplitude)
    fixed_lam = cfg.resolve_lambda()

    def cell(alpha: float):
        cell_seed = rng.derive_seed(cfg.seed, f"alpha:{alpha!r}")
        prior = source_condition_prior(op, alpha, theta_x=sinusoid.theta_x)
        pm = ProblemMoments(prior.theta_x, prior.c_xx, op, beta=cfg.sigma_n**2)
        train = generate_dataset(
            prior, ens, cfg.sigma_n, cfg.n_train, cell_seed,
            kernel_stats=stats, amplitude=cfg.amplitude,
        )
        if fixed_lam is None:
            lam, _ = _auto_lambda(pm, train.samples, cfg.n_train)
        else:
            lam = fixed_lam
        estimator = empirical_lmmse(train.samples, lam)
        test = generate_dataset(
            prior, ens, cfg.sigma_n, cfg.n_test,
            rng.derive_seed(cell_seed, "test"),
            kernel_stats=stats, amplitude=cfg.amplitude,
        )
        errors = _test_errors(estimator, test.samples)
        report = approx_bound_rhs(pm, alpha, lam, mode="statement")
        return SweepResult(
            "alpha", "alpha", alpha, float(errors.mean()),
            float(errors.std(ddof=1)), report, cfg.n_test, cell_seed,
        )

    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        results = sorted(pool.map(cell, cfg.alpha_grid), key=lambda r: r.value)
    rows = [
        (r.value, r.lhs_mean, r.lhs_std, r.rhs_total,
         r.report.term_noise, r.report.term_operator)
        for r in results
    ]
    header = ["alpha", "lhs_mean", "lhs_std", "rhs_total", "term_noise",
              "term_operator"]
    paths = [write_csv(out / "sweep_alpha.csv", header, rows)]
    _write_run_manifest(out, "sweep-alpha", cfg, {"alpha_grid": cfg.alpha_grid})
    if plot:
        from .plots import plot_sweep_alpha

        paths.append(plot_sweep_alpha(out / "sweep_alpha.svg", rows))
    return paths


# ---------------------------------------------------------------------------
# sweep-cv
# ---------------------------------------------------------------------------


def run_sweep_cv(cfg: ExperimentConfig, out_dir, plot: bool = False):
    """Error and bound as the kernel-width variability grows.

    The width channel is the variability under study, so the shift channel
    is disabled here: at ``sigma_std = 0`` the operator is deterministic and
    the operator term of the bound is exactly zero.  One regularization
    level, resolved at the most variable grid point, is shared by the whole
    sweep so the bound column responds to the variability alone.
    """
    out = _out_dir(out_dir)
    alpha = cfg.alpha
    sinusoid = SinusoidPrior(cfg.n, cfg.amplitude)
    grid = sorted(cfg.cv_grid)

    def build(sigma_std: float):
        ens = _ensemble(cfg, sigma_theta=0.0, spread_std=sigma_std)
        stats = kernel_stats_from_draws(
            ens, cfg.stat_draws,
            rng.derive_seed(cfg.seed, f"kernel-stats:{sigma_std!r}"),
        )
        sv_moments = singular_moments_circulant(
            ens, cfg.sv_draws,
            rng.derive_seed(cfg.seed, f"singular-moments:{sigma_std!r}"),
        )
        op = operator_cov_from_kernel(stats).with_singular_moments(sv_moments)
        prior = source_condition_prior(op, alpha, theta_x=sinusoid.theta_x)
        pm = ProblemMoments(prior.theta_x, prior.c_xx, op, beta=cfg.sigma_n**2)
        cell_seed = rng.derive_seed(cfg.seed, f"cv:{sigma_std!r}")
        train = generate_dataset(
            prior, ens, cfg.sigma_n, cfg.n_train, cell_seed,
            kernel_stats=stats, amplitude=cfg.amplitude,
        )
        return ens, stats, pm, prior, train, cell_seed

    fixed_lam = cfg.resolve_lambda()
    if fixed_lam is None:
        _, _, pm_top, _, train_top, _ = build(grid[-1])
        fixed_lam, _ = _auto_lambda(pm_top, train_top.samples, cfg.n_train)

    def cell(sigma_std: float):
        ens, stats, pm, prior, train, cell_seed = build(sigma_std)
        estimator = empirical_lmmse(train.samples, fixed_lam)
        test = generate_dataset(
            prior, ens, cfg.sigma_n, cfg.n_test,
            rng.derive_seed(cell_seed, "test"),
            kernel_stats=stats, amplitude=cfg.amplitude,
        )
        errors = _test_errors(estimator, test.samples)
        report = approx_bound_rhs(pm, alpha, fixed_lam, mode="statement")
        return SweepResult(
            "cv", "sigma_std", sigma_std, float(errors.mean()),
            float(errors.std(ddof=1)), report, cfg.n_test, cell_seed,
        )

    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        results = sorted(pool.map(cell, grid), key=lambda r: r.value)
    rows = [
        (r.value, (r.value / cfg.kernel_spread) ** 2, r.lhs_mean, r.lhs_std,
         r.rhs_total, r.report.term_operator)
        for r in results
    ]
    header = ["sigma_std", "cv2", "lhs_mean", "lhs_std", "rhs_total",
              "term_operator"]
    paths = [write_csv(out / "sweep_cv.csv", header, rows)]
    _write_run_manifest(
        out, "sweep-cv", cfg,
        {"cv_grid": cfg.cv_grid, "alpha": alpha, "resolved_lambda": fixed_lam},
    )
    if plot:
        from .plots import plot_sweep_cv

        paths.append(plot_sweep_cv(out / "sweep_cv.svg", rows))
    return paths


# ---------------------------------------------------------------------------
# sweep-n
# ---------------------------------------------------------------------------


def run_sweep_n(cfg: ExperimentConfig, out_dir, plot: bool = False):
    """Convergence of the empirical estimator to its exact-moment target.

    For each regime the exact estimator is built from propagated kernel
    statistics, one regularization level is fixed from the smallest sample
    size (the target must not move with N), and every (N, replicate) cell
    measures the mean squared disagreement on a fixed test set.
    """
    out = _out_dir(out_dir)
    prior = SinusoidPrior(cfg.n, cfg.amplitude)
    n_grid = sorted(cfg.n_grid)
    rows = []
    summary_rows = []
    fixed_lam = cfg.resolve_lambda()

    for regime in REGIMES:
        ens = _ensemble(cfg, sigma_theta=regime.sigma_theta)
        stats = kernel_stats_from_draws(
            ens, cfg.stat_draws,
            rng.derive_seed(cfg.seed, f"kernel-stats:{regime.label}"),
        )
        op = operator_cov_from_kernel(stats)
        pm = ProblemMoments(prior.theta_x, prior.c_xx, op, beta=regime.sigma_n**2)
        if fixed_lam is None:
            ref = generate_dataset(
                prior, ens, regime.sigma_n, n_grid[0],
                rng.derive_seed(cfg.seed, f"{regime.label}:lambda-ref"),
                kernel_stats=stats,
            )
            lam, _ = _auto_lambda(pm, ref.samples, n_grid[0])
        else:
            lam = fixed_lam
        exact = lmmse_blind_signal(pm, lam)
        test = generate_dataset(
            prior, ens, regime.sigma_n, cfg.n_test,
            rng.derive_seed(cfg.seed, f"{regime.label}:test"),
            kernel_stats=stats,
        )
        exact_preds = exact.apply(test.samples.ys)

        def cell(args, _regime=regime, _ens=ens, _stats=stats, _lam=lam,
                 _test=test, _exact_preds=exact_preds):
            n_samples, replicate = args
            train = generate_dataset(
                prior, _ens, _regime.sigma_n, n_samples,
                rng.derive_seed(
                    cfg.seed, f"{_regime.label}:N{n_samples}:rep{replicate}"
                ),
                kernel_stats=_stats,
            )
            approx = empirical_lmmse(train.samples, _lam)
            diffs = approx.apply(_test.samples.ys) - _exact_preds
            per_signal = (diffs**2).sum(axis=1)
            return (
                n_samples,
                replicate,
                float(per_signal.mean()),
                float(per_signal.std(ddof=1)),
            )

        jobs = [(n_samples, r) for n_samples in n_grid
                for r in range(cfg.replicates)]
        with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
            results = list(pool.map(cell, jobs))

        by_n = {n_samples: [] for n_samples in n_grid}
        spread_by_n = {n_samples: [] for n_samples in n_grid}
        for n_samples, replicate, err, spread in results:
            rows.append((regime.label, n_samples, replicate, err))
            by_n[n_samples].append(err)
            spread_by_n[n_samples].append(spread)
        means = [(n_samples, float(np.mean(by_n[n_samples]))) for n_samples in n_grid]
        slope, intercept, r2 = fit_loglog_slope(means)
        for n_samples in n_grid:
            errs = np.array(by_n[n_samples])
            summary_rows.append(
                (
                    regime.label,
                    n_samples,
                    float(errs.mean()),
                    float(errs.std(ddof=1)),
                    float(np.mean(spread_by_n[n_samples])),
                    slope,
                    intercept,
                    r2,
                )
            )

    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    summary_rows.sort(key=lambda r: (r[0], r[1]))
    paths = [
        write_csv(out / "sweep_n.csv", ["regime", "N", "replicate", "err"], rows),
        write_csv(
            out / "sweep_n_summary.csv",
            ["regime", "N", "err_mean", "err_std", "err_std_test", "slope",
             "intercept", "r2"],
            summary_rows,
        ),
    ]
    _write_run_manifest(
        out, "sweep-n", cfg,
        {"n_grid": cfg.n_grid, "replicates": cfg.replicates},
    )
    if plot:
        from .plots import plot_sweep_n

        paths.append(plot_sweep_n(out / "sweep_n.svg", summary_rows))
    return paths


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def run_bounds(cfg: ExperimentConfig, out_dir):
    """Evaluate every bound for the configured instance and write a report."""
    out = _out_dir(out_dir)
    ens = _ensemble(cfg)
    stats = kernel_stats_from_draws(
        ens, cfg.stat_draws, rng.derive_seed(cfg.seed, "kernel-stats")
    )
    sv_moments = singular_moments_circulant(
        ens, cfg.sv_draws, rng.derive_seed(cfg.seed, "singular-moments")
    )
    op = operator_cov_from_kernel(stats).with_singular_moments(sv_moments)
    sinusoid = SinusoidPrior(cfg.n, cfg.amplitude)
    prior = source_condition_prior(op, cfg.alpha, theta_x=sinusoid.theta_x)
    pm = ProblemMoments(prior.theta_x, prior.c_xx, op, beta=cfg.sigma_n**2)
    train = generate_dataset(
        prior, ens, cfg.sigma_n, cfg.n_train,
        rng.derive_seed(cfg.seed, "bounds-train"),
        kernel_stats=stats, amplitude=cfg.amplitude,
    )
    rho_x, rho_y = estimate_radii(train.samples)
    cov = cov_obs_blind(pm).total
    gamma = float(np.linalg.eigvalsh(cov).min())
    k_const = sampling_constant(pm, rho_x, rho_y, cov)
    lam = cfg.resolve_lambda()
    if lam is None:
        lam = default_lambda(k_const, gamma, cfg.n_train)

    blank = ""
    rows = []

    def add(name, status, report=None, total=None, measured=blank,
            xi=blank, d=blank):
        if report is not None:
            tn, to, ts, tot = (report.term_noise, report.term_operator,
                               report.term_sampling, report.total)
        else:
            tn = to = ts = blank
            tot = total if total is not None else blank
        rows.append((name, status, tn, to, ts, tot, measured, k_const, gamma,
                     rho_x, rho_y, lam, xi, d))

    add("approx_statement", "ok", approx_bound_rhs(pm, cfg.alpha, lam))
    add("approx_proof", "ok", approx_bound_rhs(pm, cfg.alpha, lam, mode="proof"))
    exact = lmmse_blind_signal(pm, lam)
    gain_norm = float(np.linalg.norm(exact.gain, 2))
    add(
        "operator_norm",
        "ok" if gain_norm <= lmmse_norm_bound(cfg.alpha, pm.beta, lam) else "violated",
        total=lmmse_norm_bound(cfg.alpha, pm.beta, lam),
        measured=gain_norm,
    )
    try:
        threshold = sampling_threshold(pm, rho_x, rho_y, cfg.xi, cfg.prob_d, lam)
        add("sampling_threshold", "ok", total=threshold, xi=cfg.xi, d=cfg.prob_d)
    except ValueError as exc:
        add("sampling_threshold", f"error: {exc}", xi=cfg.xi, d=cfg.prob_d)
    for mode in ("theorem3", "corollary1"):
        try:
            report = sampling_bound_rhs(
                pm, rho_x, rho_y, lam, cfg.n_train, mode=mode,
                xi=cfg.xi, d=cfg.prob_d,
            )
            add(f"sampling_{mode}", "ok", report,
                xi=cfg.xi if mode == "theorem3" else blank,
                d=cfg.prob_d if mode == "theorem3" else blank)
        except ValueError as exc:
            add(f"sampling_{mode}", str(exc))
    try:
        add("main", "ok",
            main_bound_rhs(pm, cfg.alpha, lam, rho_x, rho_y, cfg.n_train))
    except ValueError as exc:
        add("main", str(exc))
    add("nonblind", "ok",
        total=nonblind_bound_rhs(cfg.alpha, pm.beta, pm.m))

    header = ["bound", "status", "term_noise", "term_operator", "term_sampling",
              "total", "measured", "K", "gamma", "rho_x", "rho_y", "lambda",
              "xi", "d"]
    safe_rows = [tuple(str(v).replace(",", ";") for v in row) for row in rows]
    paths = [write_csv(out / "bounds.csv", header, safe_rows)]
    _write_run_manifest(out, "bounds", cfg, {"alpha": cfg.alpha,
                                             "resolved_lambda": lam})
    return paths


# ---------------------------------------------------------------------------
# datagen
# ---------------------------------------------------------------------------


def run_datagen(cfg: ExperimentConfig, out_dir):
    """Generate and persist one dataset (manifest + x.csv + y.csv)."""
    out = _out_dir(out_dir)
    ens = _ensemble(cfg)
    stat_seed = rng.derive_seed(cfg.seed, "kernel-stats")
    stats = kernel_stats_from_draws(ens, cfg.stat_draws, stat_seed)
    sinusoid = SinusoidPrior(cfg.n, cfg.amplitude)
    if cfg.source_condition:
        op = operator_cov_from_kernel(stats)
        prior = source_condition_prior(op, cfg.alpha, theta_x=sinusoid.theta_x)
    else:
        prior = sinusoid
    dataset = generate_dataset(
        prior, ens, cfg.sigma_n, cfg.n_train, cfg.seed,
        kernel_stats=stats, stat_draws=cfg.stat_draws, stat_seed=stat_seed,
        amplitude=cfg.amplitude,
    )
    return save_dataset(dataset, out)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _random_problem(gen: np.random.Generator, n: int, m: int) -> ProblemMoments:
    """Random well-conditioned unstructured instance for cross-route checks."""
    w = gen.normal(size=(m * n, m * n))
    caa = w @ w.T / (m * n) + 0.3 * np.eye(m * n)
    grid = caa.reshape(m, n, m, n).transpose(0, 2, 1, 3)
    wx = gen.normal(size=(n, n))
    c_xx = wx @ wx.T / n + 0.3 * np.eye(n)
    mean_op = gen.normal(size=(m, n)) / math.sqrt(n)
    op = OperatorEnsemble.from_row_cov_grid(mean_op, grid)
    theta_x = gen.normal(size=n)
    beta = float(gen.uniform(0.1, 1.0))
    return ProblemMoments(theta_x, c_xx, op, beta)


def _check_equivalences(cfg: ExperimentConfig):
    gen = np.random.default_rng(rng.derive_seed(cfg.seed, "verify-equivalence"))
    worst_sig = 0.0
    worst_op = 0.0
    for _ in range(cfg.verify_trials):
        n = int(gen.integers(2, 7))
        m = int(gen.integers(2, 7))
        pm = _random_problem(gen, n, m)
        lam = float(gen.uniform(0.0, 0.5))
        y = obs_mean(pm) + gen.normal(size=m)
        affine = lmmse_blind_signal(pm, lam).apply(y)
        direct = tikhonov_signal(pm, y, lam)
        worst_sig = max(
            worst_sig,
            float(np.linalg.norm(affine - direct) / (1 + np.linalg.norm(affine))),
        )
        affine_op = lmmse_operator(pm, lam).apply(y)
        direct_op = tikhonov_operator(pm, y, lam)
        worst_op = max(
            worst_op,
            float(
                np.linalg.norm(affine_op - direct_op)
                / (1 + np.linalg.norm(affine_op))
            ),
        )
    yield ("lmmse_vs_tikhonov_signal", worst_sig <= 1e-8,
           f"max relative residual {worst_sig:.3e} (tol 1e-08)")
    yield ("lmmse_vs_tikhonov_operator", worst_op <= 1e-8,
           f"max relative residual {worst_op:.3e} (tol 1e-08)")


def _mc_cov_check(pm: ProblemMoments, n_draws: int, gen: np.random.Generator):
    """Worst entrywise deviation of the empirical Cov(y), in standard errors."""
    caa = pm.op.assemble_cov()
    eigval, eigvec = np.linalg.eigh(caa)
    a_factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
    eigval, eigvec = np.linalg.eigh(pm.c_xx)
    x_factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
    m, n = pm.m, pm.n
    a = gen.normal(size=(n_draws, m * n)) @ a_factor.T + pm.op.mean_op.reshape(-1)
    x = gen.normal(size=(n_draws, n)) @ x_factor.T + pm.theta_x
    eps = gen.normal(size=(n_draws, m)) * math.sqrt(pm.beta)
    y = np.einsum("kij,kj->ki", a.reshape(n_draws, m, n), x) + eps
    yc = y - y.mean(axis=0)
    prods = yc[:, :, None] * yc[:, None, :]
    emp = prods.mean(axis=0)
    se = np.sqrt(prods.var(axis=0) / n_draws)
    np.fill_diagonal(se, np.maximum(np.diag(se), 1e-300))
    se = np.maximum(se, 1e-300)
    return float((np.abs(emp - cov_obs_blind(pm).total) / (3.0 * se)).max())


def _check_mc_oracle(cfg: ExperimentConfig, inject: str):
    gen = np.random.default_rng(rng.derive_seed(cfg.seed, "verify-mc"))
    if inject == "caa_asymmetry":
        try:
            grid = np.zeros((2, 2, 2, 2))
            grid[0, 0] = np.eye(2)
            grid[1, 1] = np.eye(2)
            grid[0, 1] = [[0.0, 0.5], [0.0, 0.0]]  # no matching transpose block
            OperatorEnsemble.from_row_cov_grid(np.eye(2), grid)
            yield ("mc_covariance_oracle", False,
                   "injected asymmetric Caa was not rejected")
        except ValueError as exc:
            yield ("mc_covariance_oracle", False, f"injected fault: {exc}")
        return
    worst = 0.0
    for _ in range(3):
        n = int(gen.integers(2, 7))
        m = int(gen.integers(2, 7))
        pm = _random_problem(gen, n, m)
        worst = max(worst, _mc_cov_check(pm, cfg.verify_mc_draws, gen))
    yield ("mc_covariance_oracle", worst <= 1.0,
           f"worst |emp - analytic| = {worst:.3f} of 3 standard errors")


def _check_norm_bound(cfg: ExperimentConfig):
    gen = np.random.default_rng(rng.derive_seed(cfg.seed, "verify-norm"))
    dim = 6
    u, _ = np.linalg.qr(gen.normal(size=(dim, dim)))
    v, _ = np.linalg.qr(gen.normal(size=(dim, dim)))
    mu = gen.uniform(0.5, 1.5, size=dim)
    log_sd = 0.3
    e1 = mu * math.exp(log_sd**2 / 2)
    e2 = mu**2 * math.exp(2 * log_sd**2)
    op = OperatorEnsemble.shared_singular_vectors(u, v, e1, e2)
    worst_margin = -np.inf
    ok = True
    for alpha in (0.5, 1.0, 2.0):
        prior = source_condition_prior(op, alpha)
        for level in (0.1, 0.5, 1.0):
            pm = ProblemMoments(np.zeros(dim), prior.c_xx, op, beta=level)
            gain_norm = float(
                np.linalg.norm(lmmse_blind_signal(pm, 0.0).gain, 2)
            )
            bound = lmmse_norm_bound(alpha, level, 0.0)
            ok &= gain_norm <= bound
            worst_margin = max(worst_margin, gain_norm - bound)
    yield ("estimator_norm_bound", ok,
           f"worst (norm - bound) = {worst_margin:.3e}; must be <= 0")


def _check_preconditions(cfg: ExperimentConfig, inject: str):
    sinusoid = SinusoidPrior(cfg.verify_dim, cfg.amplitude)
    small = ExperimentConfig(
        n=cfg.verify_dim,
        kernel_size=min(cfg.kernel_size, cfg.verify_dim),
        kernel_spread=cfg.kernel_spread,
        sigma_theta=cfg.sigma_theta,
        sigma_n=cfg.sigma_n,
        amplitude=cfg.amplitude,
    )
    ens = _ensemble(small)
    stats = kernel_stats_from_draws(
        ens, cfg.stat_draws, rng.derive_seed(cfg.seed, "verify-stats")
    )
    op = operator_cov_from_kernel(stats)
    pm = ProblemMoments(sinusoid.theta_x, sinusoid.c_xx, op, beta=cfg.sigma_n**2)
    train = generate_dataset(
        sinusoid, ens, cfg.sigma_n, cfg.verify_samples,
        rng.derive_seed(cfg.seed, "verify-train"), kernel_stats=stats,
    )
    if inject == "singular_cyy":
        try:
            short = _truncate_samples(train.samples, cfg.verify_dim // 2)
            empirical_lmmse(short, 0.0)
            yield ("bound_preconditions", False,
                   "rank-deficient empirical covariance was not rejected")
        except IllConditionedError as exc:
            yield ("bound_preconditions", False, f"injected fault: {exc}")
        return
    lam = cfg.resolve_lambda()
    if lam is None:
        lam, info = _auto_lambda(pm, train.samples, cfg.verify_samples)
    else:
        _, info = _auto_lambda(pm, train.samples, cfg.verify_samples)
    try:
        if cfg.bound_mode == "theorem3":
            sampling_bound_rhs(
                pm, info["rho_x"], info["rho_y"], lam, cfg.verify_samples,
                mode="theorem3", xi=cfg.xi, d=cfg.prob_d,
            )
        else:
            sampling_bound_rhs(
                pm, info["rho_x"], info["rho_y"], lam, cfg.verify_samples,
                mode="corollary1",
            )
        yield (
            "bound_preconditions", True,
            f"mode {cfg.bound_mode}: K={info['K']:.4g} gamma={info['gamma']:.4g} "
            f"lambda={lam:.4g} N={cfg.verify_samples}",
        )
    except ValueError as exc:
        yield ("bound_preconditions", False, str(exc))


def _truncate_samples(samples: SampleSet, count: int) -> SampleSet:
    return SampleSet(
        samples.xs[:count], samples.ys[:count], samples.theta_x, samples.theta_y
    )


def run_verify(cfg: ExperimentConfig, out_dir):
    """Cross-route and oracle verification suite; returns (path, all_passed)."""
    out = _out_dir(out_dir)
    inject = cfg.verify_inject
    if inject not in ("none", "caa_asymmetry", "singular_cyy"):
        raise ValueError(f"unknown verify_inject value {inject!r}")
    checks = []
    checks.extend(_check_equivalences(cfg))
    checks.extend(_check_mc_oracle(cfg, inject))
    checks.extend(_check_norm_bound(cfg))
    checks.extend(_check_preconditions(cfg, inject))
    lines = []
    all_ok = True
    for name, ok, detail in checks:
        all_ok &= ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    lines.append(f"{'PASS' if all_ok else 'FAIL'} overall")
    path = out / "verify.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path, all_ok
