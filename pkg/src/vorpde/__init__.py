"""vorpde: a numerical laboratory that recovers Voronoi and power tessellations
through four PDE-based constructions (a stochastic colonization game, heat-kernel
diffusion fronts, eikonal wavefront collision sets, and an optimal-transport
potential), cross-validating each against an exact geometric oracle.
"""

from .geometry import (
    GridSpec,
    LabelGrid,
    PLANE,
    Rect,
    ScalarField,
    SiteSet,
    TORUS,
    UNASSIGNED,
    boundary_nodes,
    metric_distance,
    mismatch_fraction,
    nearest_site_label,
    power_label,
    rasterize_tessellation,
)

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "LabelGrid",
    "PLANE",
    "Rect",
    "ScalarField",
    "SiteSet",
    "TORUS",
    "UNASSIGNED",
    "boundary_nodes",
    "metric_distance",
    "mismatch_fraction",
    "nearest_site_label",
    "power_label",
    "rasterize_tessellation",
    "__version__",
]
