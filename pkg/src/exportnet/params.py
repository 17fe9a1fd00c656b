"""Model parameters and the deterministic drift they imply."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .panel import InflationSchedule


@dataclass(frozen=True)
class ModelParams:
    """The four calibrated scalars plus the inflation schedule.

    coupling : float
        Network transfer strength, 1/year.
    sigma : float
        Noise amplitude, 1/sqrt(year).
    tau : float
        Noise correlation (trend) time, years.
    mu_bar : float
        Network-independent real growth rate, 1/year.
    inflation : InflationSchedule or None
        Nominal drift component; None means real-terms dynamics (I == 0).
    """

    coupling: float
    sigma: float
    tau: float
    mu_bar: float
    inflation: InflationSchedule | None = None

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.coupling < 0:
            raise ValueError(f"coupling must be non-negative, got {self.coupling}")

    def with_coupling(self, coupling: float) -> "ModelParams":
        return replace(self, coupling=coupling)

    def with_mu_bar(self, mu_bar: float) -> "ModelParams":
        return replace(self, mu_bar=mu_bar)


def drift_rate(t: float, params: ModelParams) -> float:
    """mu(t) = mu_bar + I(t); beyond the schedule I extends with its mean."""
    if params.inflation is None:
        return params.mu_bar
    return params.mu_bar + params.inflation.rate_at(t)
