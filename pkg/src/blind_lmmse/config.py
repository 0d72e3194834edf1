"""Flat ``key = value`` configuration for the experiment CLI.

Unknown keys are rejected rather than ignored so a typo cannot silently
fall back to a default.  ``lambda`` accepts either a number or ``auto``,
in which case each command picks the smallest regularization satisfying
the sampling-bound preconditions for its sample size.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

__all__ = ["ExperimentConfig", "parse_config", "load_config"]


def _float_tuple(text: str):
    return tuple(float(v) for v in text.split(",") if v.strip() != "")


def _int_tuple(text: str):
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


@dataclass(frozen=True)
class ExperimentConfig:
    # problem size and data model
    n: int = 128
    amplitude: float = 2.0
    kernel_size: int = 21
    kernel_spread: float = 0.5
    sigma_theta: float = 0.4
    spread_std: float = 0.0
    sigma_n: float = 0.5
    # training / evaluation
    n_train: int = 1000
    n_test: int = 20
    replicates: int = 20
    seed: int = 0
    lam: float | str = "auto"
    # sweep grids
    alpha: float = 1.2
    alpha_grid: tuple = (0.5, 1.0, 1.3, 1.5, 1.8, 2.0)
    cv_grid: tuple = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25)
    n_grid: tuple = (500, 1000, 1500, 2000, 2500, 3000, 3500, 4000)
    # Monte-Carlo budgets for moment estimation
    stat_draws: int = 200_000
    sv_draws: int = 10_000
    # bound-mode parameters
    bound_mode: str = "corollary1"
    xi: float = 0.5
    prob_d: float = 0.1
    # datagen switches
    source_condition: bool = False
    # verification suite
    verify_dim: int = 32
    verify_samples: int = 2000
    verify_trials: int = 25
    verify_mc_draws: int = 100_000
    verify_inject: str = "none"

    def resolve_lambda(self) -> float | None:
        """Numeric lambda, or None when set to ``auto``."""
        if self.lam == "auto":
            return None
        return float(self.lam)


# keys as they appear in config files -> (field name, parser)
_PARSERS = {
    "n": ("n", int),
    "amplitude": ("amplitude", float),
    "kernel_size": ("kernel_size", int),
    "kernel_spread": ("kernel_spread", float),
    "sigma_theta": ("sigma_theta", float),
    "spread_std": ("spread_std", float),
    "sigma_n": ("sigma_n", float),
    "n_train": ("n_train", int),
    "n_test": ("n_test", int),
    "replicates": ("replicates", int),
    "seed": ("seed", int),
    "lambda": ("lam", lambda v: v if v == "auto" else float(v)),
    "alpha": ("alpha", float),
    "alpha_grid": ("alpha_grid", _float_tuple),
    "cv_grid": ("cv_grid", _float_tuple),
    "n_grid": ("n_grid", _int_tuple),
    "stat_draws": ("stat_draws", int),
    "sv_draws": ("sv_draws", int),
    "bound_mode": ("bound_mode", str),
    "xi": ("xi", float),
    "prob_d": ("prob_d", float),
    "source_condition": ("source_condition", lambda v: v.lower() == "true"),
    "verify_dim": ("verify_dim", int),
    "verify_samples": ("verify_samples", int),
    "verify_trials": ("verify_trials", int),
    "verify_mc_draws": ("verify_mc_draws", int),
    "verify_inject": ("verify_inject", str),
}

assert {name for name, _ in _PARSERS.values()} == {
    f.name for f in fields(ExperimentConfig)
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, blanks are skipped."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno} is not 'key = value': {raw!r}")
        key = key.strip()
        if key not in _PARSERS:
            raise ValueError(f"unknown config key {key!r} on line {lineno}")
        field_name, parser = _PARSERS[key]
        try:
            values[field_name] = parser(value.strip())
        except ValueError as exc:
            raise ValueError(
                f"bad value for config key {key!r} on line {lineno}: {exc}"
            ) from exc
    return replace(ExperimentConfig(), **values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
