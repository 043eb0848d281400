"""Analytic current sources sampled at quadrature points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LoopCoil:
    """Circular coil of rectangular cross-section carrying total current ``current``.

    The winding is smeared into a uniform azimuthal current density about
    ``axis`` through ``center``. The cross-section spans radii
    ``[radius - width/2, radius + width/2]`` and axial offsets
    ``[-height/2, height/2]``. The density is divergence free but only
    piecewise smooth, so the discrete load is projected before solving.
    """

    center: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    radius: float = 1.0
    width: float = 0.1
    height: float = 0.1
    current: float = 1.0

    def __post_init__(self):
        if self.radius <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("coil radius, width and height must be positive")
        if self.width >= 2 * self.radius:
            raise ValueError("coil cross-section reaches the axis")

    @property
    def density(self) -> float:
        return self.current / (self.width * self.height)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float)) - np.asarray(self.center, float)
        e = np.asarray(self.axis, float)
        e = e / np.linalg.norm(e)
        z = x @ e
        radial = x - z[:, None] * e
        r = np.linalg.norm(radial, axis=1)
        inside = (np.abs(z) <= 0.5 * self.height) & (np.abs(r - self.radius) <= 0.5 * self.width)
        with np.errstate(invalid="ignore", divide="ignore"):
            phi = np.cross(e, radial) / r[:, None]
        return np.where(inside[:, None] & (r[:, None] > 0), self.density * phi, 0.0)
