"""hotspotlab: a desk-scale laboratory for 2-D semilinear elliptic equations.

Solve -Laplace(u) = f(u) under Dirichlet or Neumann conditions, classify the
critical points and level-set topology of solution fields, and audit local
Pohozaev integral ledgers term by term.
"""

__version__ = "0.1.0"

from .geometry import ConvexPolygon, Disk, Domain, Rectangle, domain_from_config
from .fields import AnalyticField, GridField, catalog, catalog_domain, sample
from .nonlinearity import (
    Constant,
    Example1Printed,
    Linear,
    Nonlinearity,
    Power,
    Tabulated,
    check_hypothesis_a,
    find_sign_change,
    nonlinearity_from_config,
    recover_f_from_radial,
)

__all__ = [
    "__version__",
    "AnalyticField", "GridField", "catalog", "catalog_domain", "sample",
    "ConvexPolygon", "Disk", "Domain", "Rectangle", "domain_from_config",
    "Constant", "Example1Printed", "Linear", "Nonlinearity", "Power", "Tabulated",
    "check_hypothesis_a", "find_sign_change", "nonlinearity_from_config",
    "recover_f_from_radial",
]
