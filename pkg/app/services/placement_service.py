"""Node placement in the d × d plane."""
from __future__ import annotations

import logging
from typing import List

import numpy as np

from ..core.errors import PlacementError
from ..models.radio import Position
from ..models.simulation import Placement

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 1000
# spread of the Gauss placement, as a fraction of the side length
GAUSS_SIGMA_FRACTION = 0.25


def _invalid_rows(xy: np.ndarray, d: float) -> np.ndarray:
    """Rows outside the square or colliding with an earlier row"""
    outside = np.any((xy < 0.0) | (xy > d), axis=1)
    _, first = np.unique(xy, axis=0, return_index=True)
    duplicate = np.ones(len(xy), dtype=bool)
    duplicate[first] = False
    return outside | duplicate


def _place(N: int, d: float, draw) -> List[Position]:
    if N < 2:
        raise PlacementError(f"Need at least 2 nodes, got {N}")
    if d <= 0:
        raise PlacementError(f"Plane side must be positive, got {d}")
    xy = draw(N)
    for _ in range(MAX_ATTEMPTS):
        bad = _invalid_rows(xy, d)
        if not bad.any():
            return [Position(float(x), float(y)) for x, y in xy]
        xy[bad] = draw(int(bad.sum()))
    raise PlacementError(f"Could not place {N} distinct nodes after {MAX_ATTEMPTS} attempts")


def place_uniform(N: int, d: float, rng: np.random.Generator) -> List[Position]:
    return _place(N, d, lambda n: rng.uniform(0.0, d, size=(n, 2)))


def place_gauss(N: int, d: float, rng: np.random.Generator) -> List[Position]:
    """Centered at (d/2, d/2), truncated to the square by resampling"""
    sigma = GAUSS_SIGMA_FRACTION * d
    return _place(N, d, lambda n: rng.normal(d / 2.0, sigma, size=(n, 2)))


def place(kind: Placement, N: int, d: float, rng: np.random.Generator) -> List[Position]:
    if kind is Placement.GAUSS:
        return place_gauss(N, d, rng)
    return place_uniform(N, d, rng)
