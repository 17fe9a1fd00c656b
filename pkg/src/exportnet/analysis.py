"""Observables: rank relaxation, growth rates, coupling sweeps, correlator
reconstruction, and tail diagnostics."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, stats as sstats

from .errors import CalibrationError, DimensionError
from .panel import PanelStatistics, compute_correlators
from .params import ModelParams
from .network import build_coupling
from .noise import factor_correlation
from .simulate import Trajectory, simulate_ensemble, to_panel


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Rank correlation with average ranks on ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError("inputs must be 1-d arrays of equal length")
    if x.size < 2:
        raise ValueError("need at least 2 observations")
    rx = sstats.rankdata(x)
    ry = sstats.rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise ValueError("constant input makes rank correlation undefined")
    return float(np.corrcoef(rx, ry)[0, 1])


def spearman_trajectory(
    trajectory: Trajectory, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Rank correlation of the state against the weights at every sample time."""
    weights = np.asarray(weights, dtype=float)
    if weights.size != trajectory.n_products:
        raise DimensionError("weights length does not match trajectory width")
    values = np.array([spearman(row, weights) for row in trajectory.states])
    return trajectory.times.copy(), values


@dataclass(frozen=True)
class RelaxationFit:
    """Exponential approach start + (plateau - start) drops to the plateau."""

    start: float       # fitted value at t = 0
    plateau: float     # asymptotic rank correlation
    timescale: float   # relaxation time, years
    residual: float    # root mean squared misfit

    def value_at(self, t):
        t = np.asarray(t, dtype=float)
        return self.plateau + (self.start - self.plateau) * np.exp(
            -t / self.timescale
        )


def fit_relaxation(
    times: np.ndarray, values: np.ndarray, ensemble_size: int = 1
) -> RelaxationFit:
    """Least-squares fit of an exponential relaxation to a rank-correlation series.

    Series averaged over fewer than 10 replicates are noisy enough that the
    fit is reported but should not be asserted on; a warning says so.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise DimensionError("times and values must be 1-d arrays of equal length")
    if times.size < 4:
        raise ValueError("need at least 4 samples to fit 3 parameters")
    if ensemble_size < 10:
        warnings.warn(
            f"relaxation series averaged over {ensemble_size} replicate(s);"
            " treat the fit as indicative only", stacklevel=2,
        )

    def model(t, start, plateau, timescale):
        return plateau + (start - plateau) * np.exp(-t / timescale)

    span = float(times[-1] - times[0])
    p0 = (float(values[0]), float(values[-1]), max(span / 3.0, 1e-3))
    try:
        popt, _ = optimize.curve_fit(
            model, times, values, p0=p0,
            bounds=([-1.5, -1.5, 1e-6], [1.5, 1.5, 1e6]),
            maxfev=20000,
        )
    except RuntimeError as exc:
        raise CalibrationError(f"relaxation fit did not converge: {exc}") from exc
    start, plateau, timescale = (float(v) for v in popt)
    residual = float(np.sqrt(((model(times, *popt) - values) ** 2).mean()))
    return RelaxationFit(
        start=start, plateau=plateau, timescale=timescale, residual=residual
    )


def growth_rate(trajectory: Trajectory, horizon: float) -> float:
    """Mean log growth per product and year over [0, horizon]."""
    times = trajectory.times
    idx = int(np.argmin(np.abs(times - horizon)))
    if abs(times[idx] - horizon) > 1e-6:
        raise ValueError(f"horizon {horizon} is not a sampled time")
    if idx == 0:
        raise ValueError("horizon must be positive")
    ratio = trajectory.states[idx] / trajectory.states[0]
    return float(np.log(ratio).mean() / times[idx])


# ---------------------------------------------------------------------------
# Coupling sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthCurve:
    """Ensemble mean growth rate against coupling strength."""

    grid: np.ndarray      # coupling values, 1/year
    rates: np.ndarray     # mean growth rate at each grid value
    stderr: np.ndarray    # standard error of the mean across replicates
    horizon: float
    baseline: float       # deterministic drift mu_bar + mean inflation

    def argmax_coupling(self) -> float:
        return float(self.grid[int(np.argmax(self.rates))])


def sweep_coupling(
    initial: np.ndarray,
    stats: PanelStatistics,
    params: ModelParams,
    grid: np.ndarray,
    horizon: float = 38.0,
    replicates: int = 50,
    seed=None,
    threads: int = 1,
) -> GrowthCurve:
    """Mean growth over [0, horizon] at each coupling value on the grid.

    The network is rebuilt per grid value from the same statistics; noise and
    drift parameters are held at ``params`` (sweeps usually run real-terms,
    i.e. params.inflation None). The noise factor depends only on the
    correlation matrix, so it is computed once.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or (np.diff(grid) <= 0).any():
        raise ValueError("grid must be increasing with at least 2 values")
    if replicates < 10:
        raise ValueError("sweeps need at least 10 replicates per grid value")
    factor = factor_correlation(stats.correlation)
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = seq.spawn(grid.size)
    rates = np.empty(grid.size)
    errs = np.empty(grid.size)
    for g, coupling in enumerate(grid):
        network = build_coupling(stats.weights, stats.correlation, coupling)
        runs = simulate_ensemble(
            initial, network, params.with_coupling(float(coupling)), horizon,
            replicates=replicates, seed=seeds[g], sample_dt=horizon,
            factor=factor, threads=threads,
        )
        lam = np.array([growth_rate(run, horizon) for run in runs])
        rates[g] = lam.mean()
        errs[g] = lam.std(ddof=1) / np.sqrt(replicates)
    baseline = params.mu_bar
    if params.inflation is not None:
        baseline += params.inflation.mean_rate
    return GrowthCurve(
        grid=grid, rates=rates, stderr=errs, horizon=float(horizon),
        baseline=float(baseline),
    )


def save_curve(curve: GrowthCurve, dest: str | Path) -> None:
    """CSV with one row per grid value plus the baseline in the header comment."""
    path = Path(dest)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coupling", "growth_rate", "stderr", "horizon", "baseline"])
        for g, r, e in zip(curve.grid, curve.rates, curve.stderr):
            writer.writerow(
                [repr(float(g)), repr(float(r)), repr(float(e)),
                 repr(curve.horizon), repr(curve.baseline)]
            )


# ---------------------------------------------------------------------------
# Correlator reconstruction
# ---------------------------------------------------------------------------

def reconstruct_correlators(trajectories: list[Trajectory]) -> np.ndarray:
    """Average return-correlator matrix over simulated yearly histories."""
    if len(trajectories) < 2:
        raise ValueError("need at least 2 histories to average")
    total = None
    for run in trajectories:
        panel = to_panel(run)
        _, _, corr = compute_correlators(panel)
        total = corr if total is None else total + corr
    return total / len(trajectories)


def comparison_products(weights: np.ndarray, per_band: int = 3) -> np.ndarray:
    """Indices of the lowest, median, and highest weighted products."""
    order = np.argsort(np.asarray(weights, dtype=float), kind="stable")
    n = order.size
    if n < 3 * per_band:
        raise ValueError(f"need at least {3 * per_band} products")
    mid = n // 2
    half = per_band // 2
    middle = order[mid - half: mid - half + per_band]
    return np.concatenate((order[:per_band], middle, order[-per_band:]))


def correlator_error(
    reconstructed: np.ndarray, target: np.ndarray, subset: np.ndarray
) -> float:
    """Mean absolute off-diagonal error between the matrices on a product subset."""
    sub_r = reconstructed[np.ix_(subset, subset)]
    sub_t = target[np.ix_(subset, subset)]
    mask = ~np.eye(subset.size, dtype=bool)
    return float(np.abs(sub_r - sub_t)[mask].mean())


# ---------------------------------------------------------------------------
# Tail diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailFit:
    """Power-law tail diagnostics for a value snapshot."""

    exponent: float             # Hill maximum-likelihood estimate
    regression_exponent: float  # slope of the log rank-size line
    r_squared: float            # fit quality of the rank-size line
    tail_size: int
    power_law: bool             # False when the tail is visibly not a power law


def pareto_tail_exponent(values: np.ndarray, tail_fraction: float = 0.25) -> TailFit:
    """Hill estimator on the top quartile with a rank-size regression cross-check.

    The survival exponent alpha comes from the Hill estimate
    1 / mean(log(x_(i) / x_min)) over the tail sample. The rank-size line
    log(rank) vs log(value) has slope -alpha for a true power law; poor line
    quality or gross disagreement between the two estimates clears the
    ``power_law`` flag.
    """
    values = np.asarray(values, dtype=float)
    if (values <= 0).any():
        raise ValueError("values must be strictly positive")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must be in (0, 1]")
    k = int(values.size * tail_fraction)
    if k < 5:
        raise ValueError("tail has fewer than 5 points; no exponent is estimable")
    tail = np.sort(values)[-k:]
    x_min = tail[0]
    logs = np.log(tail / x_min)
    mean_log = logs[1:].mean() if logs[1:].size else 0.0
    if mean_log <= 0:
        raise ValueError("tail values are all equal; no exponent is estimable")
    hill = 1.0 / float(logs.mean())

    ranks = np.arange(k, 0, -1)  # rank 1 for the largest value
    slope, intercept = np.polyfit(np.log(tail), np.log(ranks), 1)
    predicted = slope * np.log(tail) + intercept
    ss_res = float(((np.log(ranks) - predicted) ** 2).sum())
    ss_tot = float(((np.log(ranks) - np.log(ranks).mean()) ** 2).sum())
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    regression = float(-slope)

    agreement = abs(hill - regression) <= 0.35 * max(hill, regression)
    power_law = bool(r_squared >= 0.97 and agreement)
    return TailFit(
        exponent=float(hill), regression_exponent=regression,
        r_squared=float(r_squared), tail_size=k, power_law=power_law,
    )
