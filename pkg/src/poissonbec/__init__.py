"""Monte Carlo spectral toolkit for Bose gases in 1D Poisson random potentials.

Poisson point configurations, soft-obstacle Schroedinger operators discretised
on a box, grand-canonical occupation numbers and the experiments that tie
them together.
"""

__version__ = "0.1.0"

from .errors import (
    DomainError,
    InvalidParameterError,
    NumericalFailure,
    PreconditionError,
    TruncationError,
)
from .point_process import (
    GapStatistics,
    PointConfiguration,
    clipped_gaps,
    count_concentration_bound,
    gap_difference_tail_exact,
    sample_configuration,
    top_gaps,
)
from .spectral import (
    DiscretizedOperator,
    GapEventParams,
    SingleSitePotential,
    Spectrum,
    assemble_potential,
    dirichlet_ground_upper_bound,
    discretize,
    gap_event_indicator,
    lowest_eigenvalues,
    luttinger_sy_eigenvalues,
    neumann_ground_lower_bound,
)
from .thermo import (
    CondensateStats,
    IdsCurve,
    ThermoState,
    analytic_ids_ls,
    bose_factor,
    condensate_statistics,
    critical_density,
    empirical_ids,
    lifshitz_slope_fit,
    occupation_numbers,
    solve_chemical_potential,
)
