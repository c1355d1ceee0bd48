"""Product-form stationary distributions for stochastic reaction networks
with non-mass-action kinetics, plus the brute-force oracles that check them."""

from .ctmc import (
    TruncatedGenerator,
    Trajectory,
    build_generator,
    empirical_distribution,
    simulate,
    simulate_ensemble,
    stationary_nullspace,
)
from .equilibrium import (
    Equilibrium,
    complex_balance_residual,
    mass_action_rhs,
    solve_complex_balanced,
)
from .kinetics import (
    KineticModel,
    PhiFunction,
    SpeciesPartition,
    ThetaFunction,
    build_phi,
    factor_theta_over_step,
    intensity,
    species_partition,
    validate_assumption,
)
from .network import (
    Complex,
    Reaction,
    ReactionNetwork,
    Species,
    StructureReport,
    complexes,
    deficiency,
    is_weakly_reversible,
    linkage_classes,
)
from .stationary import (
    Box,
    ConservationClass,
    DistributionVector,
    ProductFormMeasure,
    Reachability,
    StateClass,
    enumerate_class,
    log_pi,
    marginal,
    normalize,
)

__version__ = "0.1.0"
