"""The product coupling network and its value-conserving rate matrix.

Transfers follow a gravity-like law: the flow j -> i is proportional to the
destination's rank weight and to the magnitude of the return correlation
between the two products. The rate matrix moves value between products
without creating or destroying it, and the rank-weight vector spans its
kernel, which is what makes the weights the attractor of the deterministic
dynamics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class CouplingNetwork:
    """transfer[i, j] is the rate j -> i; rate_matrix adds the conserving diagonal.

    The signed correlation matrix used to build the transfers rides along
    because the noise needs it (cross-correlations keep their signs even
    though transfer magnitudes do not).
    """

    transfer: np.ndarray      # (N, N), zero diagonal, non-negative
    rate_matrix: np.ndarray   # (N, N), columns sum to zero
    coupling: float
    correlation: np.ndarray   # (N, N), signed, unit diagonal

    @property
    def n_products(self) -> int:
        return self.transfer.shape[0]


def build_coupling(
    weights: np.ndarray, correlation: np.ndarray, coupling: float
) -> CouplingNetwork:
    """Assemble transfer rates transfer[i, j] = coupling * weights[i] * |correlation[i, j]|.

    ``weights`` must sum to 1 and be non-negative; ``correlation`` must be
    symmetric. The returned rate matrix satisfies rate_matrix @ weights = 0
    and has zero column sums by construction.
    """
    weights = np.asarray(weights, dtype=float)
    correlation = np.asarray(correlation, dtype=float)
    n = weights.size
    if correlation.shape != (n, n):
        raise DimensionError(
            f"correlation shape {correlation.shape} does not match {n} weights"
        )
    if (weights < 0).any():
        raise ValueError("weights must be non-negative")
    if abs(weights.sum() - 1.0) > 1e-8:
        raise ValueError(f"weights must sum to 1, got {weights.sum():.6g}")
    if not np.allclose(correlation, correlation.T, atol=1e-8):
        raise ValueError("correlation matrix must be symmetric")
    if coupling < 0:
        raise ValueError("coupling must be non-negative")

    transfer = coupling * weights[:, None] * np.abs(correlation)
    np.fill_diagonal(transfer, 0.0)
    rate_matrix = transfer.copy()
    # Outflow of column j balances everything leaving product j.
    np.fill_diagonal(rate_matrix, -transfer.sum(axis=0))
    return CouplingNetwork(
        transfer=transfer,
        rate_matrix=rate_matrix,
        coupling=float(coupling),
        correlation=correlation,
    )


def kernel_residual(network: CouplingNetwork, weights: np.ndarray) -> float:
    """Max-norm of rate_matrix @ weights; zero when weights span the kernel."""
    return float(np.abs(network.rate_matrix @ np.asarray(weights, float)).max())


def mean_link_weight(network: CouplingNetwork) -> float:
    """Average total transfer rate per product, sum_{i, j != i} transfer[i, j] / N."""
    return float(network.transfer.sum() / network.n_products)


def save_edge_list(
    network: CouplingNetwork, product_ids: tuple[str, ...], dest: str | Path
) -> None:
    """Write non-zero transfers as CSV rows ``from_id,to_id,rate`` (rate: 1/year)."""
    if len(product_ids) != network.n_products:
        raise DimensionError("product id count does not match network size")
    path = Path(dest)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["from_id", "to_id", "rate"])
        dest_idx, src_idx = np.nonzero(network.transfer)
        for i, j in zip(dest_idx, src_idx):
            writer.writerow(
                [product_ids[j], product_ids[i], repr(float(network.transfer[i, j]))]
            )
