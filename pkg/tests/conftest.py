"""Shared fixtures.  FVGW_SEED overrides the base seed of every randomized test."""

import os

import numpy as np
import pytest

from fvgw.mesh import build_rect_mesh

BASE_SEED = int(os.environ.get("FVGW_SEED", "20260813"))


@pytest.fixture
def rng():
    return np.random.default_rng(BASE_SEED)


@pytest.fixture
def two_cell_mesh():
    """Two unit squares side by side on [0,2]x[0,1]; all sides impervious."""
    return build_rect_mesh((2, 1), (0.0, 2.0, 0.0, 1.0))


@pytest.fixture
def two_cell_dirichlet_mesh():
    """Same two-cell mesh with the right side tagged water_injection."""
    return build_rect_mesh((2, 1), (0.0, 2.0, 0.0, 1.0),
                           boundary_tags={"right": "water_injection"})


@pytest.fixture
def square16():
    """16x16 unit square with a Dirichlet left side."""
    return build_rect_mesh((16, 16), (0.0, 1.0, 0.0, 1.0),
                           boundary_tags={"left": "water_injection"})
