"""Entropy-constrained quantization of Gaussian fields.

Numerical companion to the high-rate theory of quantization under
Renyi-entropy constraints: small-ball probability estimation and
inversion, ball-moment error representations, closed-form asymptotic
error laws, and brute-force oracles for the structural lemmas.
"""

__version__ = "0.1.0"

from .entropy import ProbVector, renyi_entropy
from .errors import QGaussError
from .gaussian import (
    FractionalBrownianSheet,
    FractionalOrnsteinUhlenbeck,
    GridSpec,
    IntegratedBrownianMotion,
    IntegratedBrownianSheet,
    LevyFractionalBrownianMotion,
    PathEnsemble,
    SlepianField,
    StandardNormal1D,
    build_kernel,
    covariance_matrix,
    psd_factor,
    sample_paths,
)
from .norms import Distortion, NormSpec, lp_norm, path_norm, sup_norm
from .oracles import (
    DiscreteGaussian1D,
    LemmaFunctionParams,
    Quantizer,
    build_ball_net_quantizer,
    check_monotone_F,
    empirical_entropy,
    lemma_function,
    oracle_ball_rearrangement,
    oracle_extreme_point,
)
from .quanterror import (
    ErrorEstimate,
    ErrorQuery,
    alpha_upper_bound,
    asymptotic_error,
    ball_moment_error,
    effective_rate,
    ratio_report,
    upper_bound_mass,
)
from .smallball import (
    AsymptoticLaw,
    SmallBallTable,
    b_function,
    estimate_small_ball,
    fit_asymptotic,
    invert_asymptotic,
    invert_b,
    ratio_condition_report,
    required_samples,
)

__all__ = [name for name in dir() if not name.startswith("_")]
