"""Proximal (implicit) and unadjusted (explicit) Langevin sampling toolkit.

Samplers for nu = e^{-f} with deterministic per-chain streams, the implicit
(proximal) step solver, closed-form Gaussian limits and KL/Renyi bias
oracles, convergence-bound calculators, the continuous-time representation
of one implicit step with its smoothness envelope, and trace diagnostics.
"""

from .diagnostics import (
    EmpiricalMoments,
    KlEstimate,
    ScalingFit,
    bias_scaling_fit,
    gaussian_fit_kl,
    kl_vs_quadrature_1d,
    moments,
)
from .errors import CapabilityError, NonConvergenceError
from .prox import BatchProxOutcome, ProxConfig, ProxOutcome, prox_forward, prox_step, prox_step_batch
from .samplers import (
    ChainConfig,
    InitSpec,
    Trace,
    chain_stream,
    pla_step,
    run_ensemble,
    ula_step,
)
from .sde import (
    ConvergenceStudy,
    InterpolationQuantities,
    Lemma4Report,
    check_lemma4,
    divergence_of_g_fd,
    interpolation_quantities,
    sde_convergence_study,
    verify_sde_representation,
)
from .targets import (
    GaussianTarget,
    PerturbedQuadratic1D,
    Potential,
    SmoothnessScan,
    find_stationary_point,
    target_from_json,
    verify_smoothness,
)
from .theory import (
    BiasReport,
    BoundParams,
    Budget,
    ExpansionFit,
    PoincareBound,
    RenyiBoundParams,
    bias_report,
    budget_cor2,
    gaussian_cov_recursion,
    gaussian_kl,
    gaussian_renyi,
    gaussian_w2,
    h_q_isotropic,
    kl_bias_expansion_check,
    kl_bias_pla,
    kl_bias_ula,
    kl_bound_thm1,
    pla_limit_gaussian,
    renyi_bias_pla,
    renyi_bias_ula,
    renyi_bound_lsi,
    renyi_bound_poincare,
    step_size_ceiling,
    ula_limit_gaussian,
)

__version__ = "0.1.0"
