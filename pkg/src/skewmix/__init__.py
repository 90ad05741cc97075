"""Skew-products over the doubling map with a singular fibre map.

Modules: ``dynamics`` (maps and fibre maps), ``hyperbolic_times``,
``tower`` (inducing scheme and tower), ``cohomology`` (periodic-orbit
obstruction), ``spectral`` (Ulam twisted operators and renewal blocks),
``statistics`` (Monte Carlo correlations, slow recurrence) and ``cli``.
"""
__version__ = "0.1.0"

from .dynamics import BaseMap, PowerFibre, SingularitySet, doubling_map, make_fibre  # noqa: E402
from .tower import InducedScheme  # noqa: E402

__all__ = ["BaseMap", "PowerFibre", "SingularitySet", "doubling_map", "make_fibre", "InducedScheme", "__version__"]
