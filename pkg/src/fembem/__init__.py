"""Symmetric FEM-BEM coupling for 3D magnetostatics on solid parts only."""

from scipy.constants import mu_0 as MU0

__version__ = "0.1.0"

__all__ = ["MU0", "__version__"]
