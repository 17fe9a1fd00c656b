"""Euler integration of the coupled multiplicative growth dynamics.

The state is the vector of export values Z. Each step applies the
value-conserving network transfer plus multiplicative growth at rate
eta_i(t) + mu(t). Ensembles advance every replicate in lockstep so the inner
update is a matrix product over replicates, while each replicate consumes its
own derived random stream; replicate k of an ensemble therefore reproduces a
standalone run seeded with the k-th spawned seed (up to BLAS summation order).

Runs are bit-reproducible for a fixed seed, batch layout, and thread count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, NumericalBlowupError
from .network import CouplingNetwork
from .noise import CorrelationFactor, factor_correlation
from .params import ModelParams, drift_rate

DEFAULT_DT = 0.01


@dataclass(frozen=True)
class Trajectory:
    """Sampled states of one run: states[m] is Z at times[m]."""

    times: np.ndarray    # (M,), strictly increasing, starts at 0
    states: np.ndarray   # (M, N), strictly positive
    seed: object         # seed material as given (int, tuple, or None)
    params: ModelParams
    guard_count: int = 0

    @property
    def n_products(self) -> int:
        return self.states.shape[1]


def step(
    values: np.ndarray,
    noise_values: np.ndarray,
    t: float,
    dt: float,
    network: CouplingNetwork,
    params: ModelParams,
) -> np.ndarray:
    """One explicit Euler step from t to t + dt.

    Any component the linear update would push to or below zero falls back to
    the multiplicative form Z * exp(dt * rate), which cannot change sign.
    """
    values = np.asarray(values, dtype=float)
    if (values <= 0).any():
        raise ValueError("state must be strictly positive")
    _check_dt(dt, params)
    mu = drift_rate(t, params)
    transfer = network.rate_matrix @ values
    rate = transfer / values + noise_values + mu
    nxt = values + dt * (transfer + (noise_values + mu) * values)
    bad = nxt <= 0.0
    if bad.any():
        nxt = np.where(bad, values * np.exp(dt * rate), nxt)
    return nxt


def _check_dt(dt: float, params: ModelParams) -> None:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    limit = min(params.tau / 10.0, DEFAULT_DT)
    if dt > limit * (1 + 1e-9):
        import warnings

        warnings.warn(
            f"dt = {dt:g} exceeds min(tau/10, {DEFAULT_DT}) = {limit:g};"
            " results may be under-resolved",
            stacklevel=3,
        )


def spawn_rngs(seed, replicates: int) -> list[np.random.Generator]:
    """Independent per-replicate generators derived from one master seed."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in seq.spawn(replicates)]


def simulate(
    initial: np.ndarray,
    network: CouplingNetwork,
    params: ModelParams,
    horizon: float,
    dt: float = DEFAULT_DT,
    seed=None,
    sample_dt: float = 1.0,
    factor: CorrelationFactor | None = None,
) -> Trajectory:
    """Integrate one trajectory over [0, horizon], sampling every sample_dt.

    The noise starts in its stationary law and is cross-correlated through
    ``factor`` (derived from the network's signed correlation matrix when not
    supplied; pass a factor of the identity for independent noise).
    """
    batch = _run_batch(
        initial, network, params, horizon, dt,
        rngs=[np.random.default_rng(seed)],
        sample_dt=sample_dt, factor=factor,
    )
    times, states, guards = batch
    return Trajectory(
        times=times, states=states[:, :, 0], seed=seed,
        params=params, guard_count=int(guards[0]),
    )


def simulate_ensemble(
    initial: np.ndarray,
    network: CouplingNetwork,
    params: ModelParams,
    horizon: float,
    replicates: int,
    dt: float = DEFAULT_DT,
    seed=None,
    sample_dt: float = 1.0,
    factor: CorrelationFactor | None = None,
    threads: int = 1,
) -> list[Trajectory]:
    """Run ``replicates`` trajectories with derived seeds; order is by replicate.

    With threads > 1 the replicate axis is split into contiguous chunks that
    advance concurrently; each replicate still owns its stream, so membership
    of a chunk never changes what is drawn.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    rngs = spawn_rngs(seed, replicates)
    if factor is None:
        factor = factor_correlation(network.correlation)

    chunks: list[tuple[int, int]] = []
    n_chunks = max(1, min(threads, replicates))
    base, extra = divmod(replicates, n_chunks)
    start = 0
    for c in range(n_chunks):
        width = base + (1 if c < extra else 0)
        chunks.append((start, start + width))
        start += width

    def run(span: tuple[int, int]):
        lo, hi = span
        return _run_batch(
            initial, network, params, horizon, dt,
            rngs=rngs[lo:hi], sample_dt=sample_dt, factor=factor,
        )

    if n_chunks == 1:
        results = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=n_chunks) as pool:
            results = list(pool.map(run, chunks))

    trajectories: list[Trajectory] = []
    offset = 0
    for times, states, guards in results:
        for r in range(states.shape[2]):
            trajectories.append(
                Trajectory(
                    times=times,
                    states=states[:, :, r],
                    seed=(seed, offset + r),
                    params=params,
                    guard_count=int(guards[r]),
                )
            )
        offset += states.shape[2]
    return trajectories


def _run_batch(
    initial: np.ndarray,
    network: CouplingNetwork,
    params: ModelParams,
    horizon: float,
    dt: float,
    rngs: list[np.random.Generator],
    sample_dt: float,
    factor: CorrelationFactor | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance a block of replicates in lockstep. Returns (times, states, guards)."""
    initial = np.asarray(initial, dtype=float)
    n = initial.size
    if network.n_products != n:
        raise DimensionError(
            f"network is for {network.n_products} products, state has {n}"
        )
    if (initial <= 0).any() or not np.isfinite(initial).all():
        raise ValueError("initial values must be strictly positive and finite")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    _check_dt(dt, params)
    if factor is None:
        factor = factor_correlation(network.correlation)
    if factor.n != n:
        raise DimensionError("noise factor size does not match the state")

    n_steps = max(1, int(round(horizon / dt)))
    dt_eff = horizon / n_steps
    record_every = max(1, int(round(sample_dt / dt_eff)))
    n_rep = len(rngs)

    rate_matrix = network.rate_matrix
    mixing = factor.mixing
    rho = math.exp(-dt_eff / params.tau)
    scale = params.sigma / math.sqrt(params.tau)
    fresh_coef = math.sqrt(1.0 - rho * rho) * scale

    draws = np.empty((n, n_rep))
    for r, rng in enumerate(rngs):
        draws[:, r] = rng.standard_normal(n)
    eta = scale * (mixing @ draws)

    values = np.repeat(initial[:, None], n_rep, axis=1)
    guards = np.zeros(n_rep, dtype=np.int64)
    rec_times = [0.0]
    rec_states = [values.copy()]

    for k in range(n_steps):
        t = k * dt_eff
        mu = drift_rate(t, params)
        transfer = rate_matrix @ values
        growth_rate = eta + mu
        nxt = values + dt_eff * (transfer + growth_rate * values)
        bad = nxt <= 0.0
        if bad.any():
            fallback = values * np.exp(dt_eff * (transfer / values + growth_rate))
            nxt = np.where(bad, fallback, nxt)
            guards += bad.sum(axis=0)
        if not np.isfinite(nxt).all():
            i, r = np.argwhere(~np.isfinite(nxt))[0]
            raise NumericalBlowupError(
                f"non-finite value for product {i} at t = {t + dt_eff:.4f}"
                f" (replicate {r}); reduce dt or the parameter magnitudes"
            )
        values = nxt
        for r, rng in enumerate(rngs):
            draws[:, r] = rng.standard_normal(n)
        eta = rho * eta + fresh_coef * (mixing @ draws)
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            rec_times.append((k + 1) * dt_eff)
            rec_states.append(values.copy())

    return np.asarray(rec_times), np.stack(rec_states), guards


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def save_trajectory(
    trajectory: Trajectory,
    dest: str | Path,
    product_ids: tuple[str, ...] | None = None,
) -> None:
    """Write long-format CSV ``t,product_id,value`` plus a JSON provenance sidecar."""
    path = Path(dest)
    n = trajectory.n_products
    if product_ids is None:
        product_ids = tuple(f"P{i:04d}" for i in range(n))
    if len(product_ids) != n:
        raise DimensionError("product id count does not match trajectory width")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "product_id", "value"])
        for t, row in zip(trajectory.times, trajectory.states):
            for pid, v in zip(product_ids, row):
                writer.writerow([repr(float(t)), pid, repr(float(v))])
    sidecar = {
        "params": params_to_dict(trajectory.params),
        "seed": _seed_repr(trajectory.seed),
        "guard_count": trajectory.guard_count,
        "n_products": n,
        "n_samples": int(trajectory.times.size),
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def params_to_dict(params: ModelParams) -> dict:
    out = {
        "coupling": params.coupling,
        "sigma": params.sigma,
        "tau": params.tau,
        "mu_bar": params.mu_bar,
    }
    if params.inflation is None:
        out["inflation"] = None
    else:
        out["inflation"] = {
            "first_year": params.inflation.first_year,
            "rates": [float(r) for r in params.inflation.rates],
        }
    return out


def _seed_repr(seed) -> object:
    if seed is None or isinstance(seed, int):
        return seed
    if isinstance(seed, tuple):
        return [_seed_repr(s) for s in seed]
    return repr(seed)


def to_panel(trajectory: Trajectory, base_year: int = 0, product_ids=None):
    """View a yearly-sampled trajectory as an ExportPanel (for re-ingestion)."""
    from .panel import ExportPanel

    times = trajectory.times
    yearly = np.abs(times - np.round(times)) < 1e-9
    if yearly.sum() < 2 or not np.all(np.diff(np.round(times[yearly])) == 1):
        raise ValueError("trajectory is not sampled on a consecutive yearly grid")
    values = trajectory.states[yearly].T
    n = values.shape[0]
    if product_ids is None:
        product_ids = tuple(f"P{i:04d}" for i in range(n))
    return ExportPanel(
        values=values, product_ids=tuple(product_ids), base_year=base_year
    )
