"""Synthetic panels with known ground truth.

Generation draws rank weights from a Pareto law, builds a factor-model
correlation matrix, perturbs the weight ranking for the initial values, and
integrates the model forward; the result round-trips through the same CSV
schema the ingestion side reads, so every downstream stage can be exercised
against parameters that are known exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import build_coupling
from .noise import factor_correlation
from .panel import ExportPanel
from .params import ModelParams
from .simulate import DEFAULT_DT, simulate, to_panel


def make_pareto_weights(
    n: int, exponent: float = 1.5, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Normalized weights with a Pareto(exponent) tail."""
    if n < 2:
        raise ValueError("need at least 2 products")
    if exponent <= 0:
        raise ValueError("exponent must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    raw = 1.0 + rng.pareto(exponent, size=n)
    return raw / raw.sum()


def make_factor_correlation(
    n: int,
    factors: int = 3,
    loadings_scale: float = 0.35,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Correlation matrix from a random loading model, B B^T plus unit noise.

    Zero factors give the identity. Signs of the off-diagonal entries are
    balanced (loadings are zero-mean), which keeps the mean signed
    correlation near zero while |c| stays appreciable.
    """
    if factors < 0:
        raise ValueError("factors must be non-negative")
    if factors == 0:
        return np.eye(n)
    rng = rng if rng is not None else np.random.default_rng()
    loadings = loadings_scale * rng.standard_normal((n, factors))
    raw = loadings @ loadings.T + np.eye(n)
    scale = 1.0 / np.sqrt(np.diag(raw))
    corr = raw * scale[:, None] * scale[None, :]
    np.fill_diagonal(corr, 1.0)
    return corr


def make_kernel_correlation(
    weights: np.ndarray,
    strength: tuple[float, float] = (0.05, 0.5),
    length: float = 1.0,
    wavelength: float = 1.5,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Correlation localized in log-size, with per-product strength.

    Entry (i, j) is sqrt(s_i s_j) exp(-d/length) cos(d/wavelength) where d is
    the log-weight distance |ln w_i - ln w_j| and each s_i is drawn
    log-uniformly from the strength range. Products of similar size correlate
    appreciably while pairs decades apart barely couple, so relative transfer
    rates stay bounded no matter how skewed the weights are; the cosine mixes
    both correlation signs. The damped cosine is a valid kernel on the log
    positions and the strengths only rescale rows while the diagonal is
    topped back up to 1, so the result is positive definite with smallest
    eigenvalue at least 1 - max(s).
    """
    weights = np.asarray(weights, dtype=float)
    lo, hi = strength
    if not 0 < lo <= hi < 1:
        raise ValueError("strength range must satisfy 0 < lo <= hi < 1")
    rng = rng if rng is not None else np.random.default_rng()
    s = np.exp(rng.uniform(np.log(lo), np.log(hi), weights.size))
    d = np.abs(np.subtract.outer(np.log(weights), np.log(weights)))
    corr = np.sqrt(np.outer(s, s)) * np.exp(-d / length) * np.cos(d / wavelength)
    np.fill_diagonal(corr, 1.0)
    return corr


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic panel."""

    n_products: int = 219
    n_years: int = 39
    params: ModelParams = field(
        default_factory=lambda: ModelParams(
            coupling=0.051, sigma=0.098, tau=0.8, mu_bar=0.041
        )
    )
    seed: int | None = None
    pareto_exponent: float = 1.5
    factors: int = 3
    loadings_scale: float = 0.35
    init_scale: float = 0.5     # lognormal perturbation of the weight ranking
    total_value: float = 1e6    # arbitrary monetary scale of the first year
    base_year: int = 1962
    dt: float = DEFAULT_DT
    weights: np.ndarray | None = None       # override the Pareto recipe
    correlation: np.ndarray | None = None   # override the factor recipe
    initial: np.ndarray | None = None       # override the perturbation recipe


@dataclass(frozen=True)
class SyntheticTruth:
    """Ground truth behind a generated panel."""

    weights: np.ndarray
    correlation: np.ndarray
    params: ModelParams
    initial: np.ndarray


def generate_panel(spec: SyntheticSpec) -> tuple[ExportPanel, SyntheticTruth]:
    """Draw a panel from the model; returns the panel and its ground truth."""
    seq = np.random.SeedSequence(spec.seed)
    weight_seed, corr_seed, init_seed, sim_seed = seq.spawn(4)
    weights = spec.weights
    if weights is None:
        weights = make_pareto_weights(
            spec.n_products, spec.pareto_exponent, np.random.default_rng(weight_seed)
        )
    else:
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
    correlation = spec.correlation
    if correlation is None:
        correlation = make_factor_correlation(
            spec.n_products, spec.factors, spec.loadings_scale,
            np.random.default_rng(corr_seed),
        )
    else:
        correlation = np.asarray(correlation, dtype=float)

    if spec.initial is None:
        init_rng = np.random.default_rng(init_seed)
        initial = weights * np.exp(
            spec.init_scale * init_rng.standard_normal(weights.size)
        )
    else:
        initial = np.asarray(spec.initial, dtype=float).copy()
    initial *= spec.total_value / initial.sum()

    network = build_coupling(weights, correlation, spec.params.coupling)
    factor = factor_correlation(correlation)
    trajectory = simulate(
        initial, network, spec.params, horizon=float(spec.n_years - 1),
        dt=spec.dt, seed=sim_seed, sample_dt=1.0, factor=factor,
    )
    product_ids = tuple(f"P{i:04d}" for i in range(weights.size))
    panel = to_panel(trajectory, base_year=spec.base_year, product_ids=product_ids)
    truth = SyntheticTruth(
        weights=weights, correlation=correlation,
        params=spec.params, initial=initial,
    )
    return panel, truth
