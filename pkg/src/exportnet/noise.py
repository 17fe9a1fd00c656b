"""Cross-correlated Ornstein-Uhlenbeck noise.

Each product carries a stochastic trend eta_i with stationary covariance
cov(eta_i, eta_j) = correlation[i, j] * sigma^2 / tau and exponential memory
exp(-|t - t'| / tau). Draws are mixed through an LDL^T factor of the signed
return correlation matrix; the update over a step dt uses the exact decay
factor rho = exp(-dt / tau), so the discrete chain is stationary for any dt.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .params import ModelParams

CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class CorrelationFactor:
    """Unit-lower-triangular L and non-negative diagonal D with L D L^T ~ C.

    Correlation matrices estimated from Y-1 return samples have rank at most
    Y-1, so for wide panels most pivots vanish; pivots below the clamp
    tolerance are set to zero (counted in ``clamp_count``) and their columns
    drop out of the mixing.
    """

    lower: np.ndarray
    diag: np.ndarray
    clamp_count: int

    @property
    def n(self) -> int:
        return self.diag.size

    @property
    def mixing(self) -> np.ndarray:
        """L sqrt(D): maps iid standard normals to correlated ones."""
        return self.lower * np.sqrt(self.diag)


@dataclass(frozen=True)
class NoiseState:
    """Current noise vector and the model time it belongs to."""

    values: np.ndarray
    time: float


def factor_correlation(
    correlation: np.ndarray, clamp_tol: float = CLAMP_TOL
) -> CorrelationFactor:
    """Unpivoted LDL^T factorization with pivot clamping.

    No row/column reordering is performed, so the factor is a deterministic
    function of the input. Pivots below ``clamp_tol`` (including the small
    negatives produced by rounding on rank-deficient input) are clamped to
    zero and the corresponding column of L is left as the unit vector.
    """
    c = np.asarray(correlation, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"correlation must be square, got shape {c.shape}")
    if not np.allclose(c, c.T, atol=1e-8):
        raise ValueError("correlation matrix must be symmetric")
    n = c.shape[0]
    lower = np.eye(n)
    diag = np.zeros(n)
    clamped = 0
    for j in range(n):
        pivot = c[j, j] - (lower[j, :j] ** 2) @ diag[:j]
        if pivot < clamp_tol:
            clamped += 1
            continue  # diag[j] stays 0; column j contributes nothing
        diag[j] = pivot
        if j + 1 < n:
            lower[j + 1:, j] = (
                c[j + 1:, j] - lower[j + 1:, :j] @ (lower[j, :j] * diag[:j])
            ) / pivot
    return CorrelationFactor(lower=lower, diag=diag, clamp_count=clamped)


def sample_correlated(factor: CorrelationFactor, rng: np.random.Generator) -> np.ndarray:
    """One zero-mean draw with covariance L D L^T.

    Always consumes exactly n standard normals so stream positions do not
    depend on the factor's rank.
    """
    return factor.mixing @ rng.standard_normal(factor.n)


def init_stationary(
    params: ModelParams, factor: CorrelationFactor, rng: np.random.Generator
) -> NoiseState:
    """Draw eta(0) from the stationary law, scale sigma / sqrt(tau)."""
    scale = params.sigma / math.sqrt(params.tau)
    return NoiseState(values=scale * sample_correlated(factor, rng), time=0.0)


def step_noise(
    state: NoiseState,
    dt: float,
    params: ModelParams,
    factor: CorrelationFactor,
    rng: np.random.Generator,
) -> NoiseState:
    """Advance the noise by dt with the exact decay factor exp(-dt / tau)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt > params.tau / 10:
        warnings.warn(
            f"dt = {dt:g} exceeds tau/10 = {params.tau / 10:g};"
            " trend memory is barely resolved",
            stacklevel=2,
        )
    rho = math.exp(-dt / params.tau)
    scale = params.sigma / math.sqrt(params.tau)
    fresh = scale * sample_correlated(factor, rng)
    return NoiseState(
        values=rho * state.values + math.sqrt(1.0 - rho * rho) * fresh,
        time=state.time + dt,
    )
