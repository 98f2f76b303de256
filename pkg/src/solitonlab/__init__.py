"""solitonlab: numerics for spacelike translating solitons in Minkowski space.

Builds and certifies radial soliton profiles, explicit barrier functions,
Dirichlet solves of the quasilinear graph equation on convex planar domains,
the weighted-area variational checks, and exhaustion constructions of entire
solutions with prescribed behavior at infinity.
"""

__version__ = "0.1.0"

from . import profiles, geometry, dirichlet, variational, construction  # noqa: F401
