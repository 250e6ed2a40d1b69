"""Monte Carlo verification of graduation limits and Euler error laws.

Modules
-------
measures     probability laws, expectations and Fourier decay
graduation   graduation schemes, square field and bias operators
paths        Brownian paths and fast oscillatory integrals
euler        Euler scheme for a mechanical SDE and its error limit
stats        estimates, moments, KS tests and verdicts
experiments  named experiments producing reports
cli          the ``gradlim`` command
"""

__version__ = "0.1.0"

from .stats import MCEstimate, Verdict, verdict  # noqa: E402
from .measures import ProbabilityLaw, rajchman_decay_test  # noqa: E402
from .graduation import (  # noqa: E402
    GraduationScheme,
    TestFunction,
    estimate_bias_operators,
    estimate_gamma,
    gamma_change_of_measure,
    graduate,
    uniformity_independence_test,
)
from .paths import (  # noqa: E402
    PeriodicFunction,
    SamplePath,
    StepFunction,
    euler_error_covariance,
    oscillatory_integral,
    quadratic_form_limit,
    simulate_brownian,
    verify_rootzen_limit,
)
from .euler import MechanicalSDE, error_distribution_compare, euler_solve, simulate_error_limit  # noqa: E402
from .experiments import ExperimentConfig, run  # noqa: E402

__all__ = [
    "__version__", "MCEstimate", "Verdict", "verdict", "ProbabilityLaw", "rajchman_decay_test",
    "GraduationScheme", "TestFunction", "estimate_bias_operators", "estimate_gamma",
    "gamma_change_of_measure", "graduate", "uniformity_independence_test", "PeriodicFunction",
    "SamplePath", "StepFunction", "euler_error_covariance", "oscillatory_integral",
    "quadratic_form_limit", "simulate_brownian", "verify_rootzen_limit", "MechanicalSDE",
    "error_distribution_compare", "euler_solve", "simulate_error_limit", "ExperimentConfig", "run",
]
