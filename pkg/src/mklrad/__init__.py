"""Rademacher complexity bounds, excess-risk rates, and Monte Carlo
verification for block-norm multiple kernel learning classes."""

from .core import (
    Exponent,
    BlockVector,
    MklClass,
    conjugate,
    lp_norm,
    block_norm,
    khintchine_constant,
    rosenthal_young_constant,
    lq_to_lp_factor,
)
from .spectra import (
    SpectrumSet,
    ExplicitSpectrum,
    FiniteRankSpectrum,
    AlgebraicSpectrum,
    GramSpectrum,
    gram_spectrum,
    tail_sum,
    truncated_min_sum,
)
from .bounds import (
    BoundReport,
    LocalQuery,
    grc_empirical,
    grc_population,
    lrc_upper_p12,
    lrc_upper_pge2,
    lrc_upper_p1,
    lrc_hparam,
    lrc_lower,
)
from .excess import (
    RiskParams,
    SoftSparseBayes,
    RateSpec,
    fixed_point_quadratic,
    fixed_point_bound,
    optimal_truncation,
    excess_risk_bound,
    nu_factor,
    bayes_radius,
    nu_curve,
    rate_comparison,
    phase_transition_locator,
)
from .empirical import (
    GeneratorSpec,
    McConfig,
    generate_sample,
    grc_empirical_mc,
    local_sup,
    local_sup_bruteforce,
    lrc_empirical_mc,
    verify_khintchine,
    verify_rosenthal_young,
    verify_poisson_moment,
)

__version__ = "0.1.0"
