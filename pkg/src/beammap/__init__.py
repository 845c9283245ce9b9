"""Beam map reconstruction from sparse directional RSS measurements.

Pipeline: simulate an indoor scene (``scene``), bin measurements into a polar
tensor (``polar``), fit a structured matrix-vector tensor decomposition
(``decomp`` for the general rank-R case, ``los`` for rank-1 specializations),
map the result back to the Cartesian grid (``interp``), and benchmark against
interpolation baselines (``bench``).
"""

from . import bench, decomp, interp, los, polar, scene

__version__ = "0.1.0"

__all__ = ["scene", "polar", "decomp", "los", "interp", "bench", "__version__"]
