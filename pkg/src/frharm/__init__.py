"""frharm: weighted-extension laboratory for fractional-harmonic metrology.

Library layout:

- ``weights``:   exact moments and averages for the |y|^a geometry
- ``poly``:      exact even-polynomial algebra and harmonic bases
- ``extension``: Poisson-kernel extension and the p.v. nonlocal operator
- ``grids`` / ``solver``: degenerate-elliptic finite differences with
  Dirichlet, unilateral-thin-constraint and drift boundary conditions
- ``metrics``:   growth exponents, oscillation seminorms, iteration lemma
- ``trace``:     trace-by-averages and Holder estimation on the thin space
- ``gauge``:     almost-minimality excess measurement and verdicts
- ``cli``:       the experiment runner (E1..E6)
"""

from .errors import *  # noqa: F401,F403
from .weights import (  # noqa: F401
    BallSpec,
    MonomialExponent,
    WeightParam,
    ball_moment,
    sphere_moment,
    weighted_ball_average,
    weighted_volume,
)
from .grids import Grid, GridField  # noqa: F401
from .poly import (  # noqa: F401
    HarmonicBasis,
    WeightedPoly,
    canonical_quadratic,
    even_odd_split,
    expand,
    harmonic_basis,
    poly_dirichlet_solve,
    reduce_la,
    t_map,
    uniqueness_check,
)

__version__ = "0.1.0"
