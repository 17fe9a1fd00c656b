from pathlib import Path

import numpy as np
import pytest

from exportnet import ExportPanel, ModelParams

DATA_DIR = Path(__file__).parent / "data"

# The calibrated point every full-scale check runs at.
CALIBRATED = ModelParams(coupling=0.051, sigma=0.098, tau=0.8, mu_bar=0.041)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def calibrated() -> ModelParams:
    return CALIBRATED


def make_panel(values, base_year: int = 1962, ids=None) -> ExportPanel:
    values = np.asarray(values, dtype=float)
    if ids is None:
        ids = tuple(f"P{i:04d}" for i in range(values.shape[0]))
    return ExportPanel(values=values, product_ids=tuple(ids), base_year=base_year)


@pytest.fixture
def tiny_panel() -> ExportPanel:
    # 3 products x 5 years, hand-pickable numbers, strictly positive.
    values = [
        [10.0, 12.0, 15.0, 14.0, 16.0],
        [4.0, 3.5, 5.0, 6.0, 5.5],
        [1.0, 1.1, 0.9, 1.2, 1.3],
    ]
    return make_panel(values)
