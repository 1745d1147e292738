"""Coupling-induced destabilization of synchronous periodic solutions in n-patch ODE models."""

__version__ = "0.1.0"

from .expr import parse, differentiate, evaluate, SymbolTable  # noqa: E402
from .kinetics import KineticSystem, PerturbedSystem, make_holling_tanner  # noqa: E402
from .ode import IntegratorConfig, Section, integrate, integrate_to_section  # noqa: E402
from .cycle import LimitCycle, find_cycle, monodromy, nontrivial_multiplier_2d  # noqa: E402
from .period import PeriodDerivativeReport, fd_p1, urabe_p1  # noqa: E402
from .hopf import (  # noqa: E402
    HopfReport,
    first_lyapunov_coefficient,
    holling_tanner_positive_equilibrium,
    hopf_period_eps_slope,
    perturbed_trace_det,
)
from .patch import (  # noqa: E402
    DestabilizationVerdict,
    PatchSystem,
    build_patch_system,
    largest_lyapunov_exponent,
    linearize_about_sync,
    multiplier_slopes,
    patch_floquet,
    predict_and_verify,
)

__all__ = [
    "__version__",
    "parse", "differentiate", "evaluate", "SymbolTable",
    "KineticSystem", "PerturbedSystem", "make_holling_tanner",
    "IntegratorConfig", "Section", "integrate", "integrate_to_section",
    "LimitCycle", "find_cycle", "monodromy", "nontrivial_multiplier_2d",
    "PeriodDerivativeReport", "fd_p1", "urabe_p1",
    "HopfReport", "first_lyapunov_coefficient", "holling_tanner_positive_equilibrium",
    "hopf_period_eps_slope", "perturbed_trace_det",
    "DestabilizationVerdict", "PatchSystem", "build_patch_system", "largest_lyapunov_exponent",
    "linearize_about_sync", "multiplier_slopes", "patch_floquet", "predict_and_verify",
]
