"""Transportation-entropy inequalities for Poisson and Gibbs point processes:
exact finite-model computations and a verification harness."""

from .deviation import PoissonH, Quadratic, Tabulated, combine_mixture
from .dobrushin import DobrushinReport, dobrushin_continuum, dobrushin_discrete, dobrushin_empirical
from .measures import (
    FiniteMeasure,
    MixedPoissonSpec,
    SpinGibbsSpec,
    TruncatedPoisson,
    conditional_at_site,
    gibbs_exact,
    mixed_poisson,
    poisson_pmf,
    relative_entropy,
)
from .pointprocess import (
    Box,
    Configuration,
    ContinuumGibbsSpec,
    DiscretizationGrid,
    difference_operator,
    discretize,
    energy,
    push_forward,
    sample_gibbs_continuum,
    sample_ppp,
    uniform_grid,
)
from .transport import MetricSpec, distance, dual_lipschitz_bound, lipschitz_check_config, w1_integer_line, w1_lp
from .verify import InequalityReport

__version__ = "0.1.0"
