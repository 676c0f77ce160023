"""Partially linear single-index models.

Profile least-squares estimation with local linear link smoothing, SCAD
variable selection with a BIC tuning selector, linear-hypothesis and
goodness-of-link tests, and reproducible Monte Carlo studies.
"""

__version__ = "0.1.0"

from plsim.model import (  # noqa: F401
    CoefParam,
    Dataset,
    IndexParam,
    ZetaParam,
    alpha_to_chart,
    chart_to_alpha,
    make_zeta,
    validate_dataset,
)
from plsim.kernels import KERNELS, get_kernel  # noqa: F401
from plsim.smoother import (  # noqa: F401
    Bandwidth,
    LocalFit,
    conditional_mean_smooth,
    cv_bandwidth,
    eta_hat,
    local_linear_fit,
)
from plsim.profile import (  # noqa: F401
    PlsimFit,
    estimate_dhat,
    fit_plsim,
    profile_gradient,
    profile_objective,
    standard_errors,
)
from plsim.scad import (  # noqa: F401
    PenaltyPlan,
    ScadPath,
    ScadPenalty,
    bic_search,
    lambda_plan,
    penalized_fit,
    scad_deriv,
    scad_value,
)
from plsim.chi2 import chi2_cdf, chi2_quantile  # noqa: F401
from plsim.inference import (  # noqa: F401
    LinearHypothesis,
    TestResult,
    kernel_constants,
    test_linear_t1,
    test_linear_wald,
    test_link_t2,
    theoretical_power_t1,
)
from plsim.simlab import (  # noqa: F401
    SimDesign,
    SimReport,
    gen_example1_model41,
    gen_example1_model42,
    gen_example2,
    gen_example3,
    gen_example4,
    run_mc_estimation,
    run_mc_power,
    run_mc_selection,
)
