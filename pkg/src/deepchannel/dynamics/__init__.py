"""Polynomial ODE systems for the learning dynamics, their integration,
closed-form fixed-point prediction, stability analysis, and monitors."""

from .polynomial import (  # noqa: F401
    FixedPointReport,
    Polynomial,
    classify_1d,
    real_roots,
    solve_depressed_cubic,
)
from .systems import (  # noqa: F401
    A111,
    A1111,
    Chain,
    CompressiveAN1N,
    ExpansiveA1N1,
    GeneralDeepLinear,
    GeneralThreeLayer,
    PowerA111,
)
from .integrate import Trajectory, integrate, integrate_batch  # noqa: F401
from .predict import (  # noqa: F401
    check_power_nofprime,
    chain_polynomial,
    monitor_general3,
    predict_a111,
    predict_a1111,
    predict_a1N1,
    predict_autoencoder_N1N,
    predict_chain,
    predict_power_a111,
    stability_a111,
)
from .field import vector_field  # noqa: F401
from .empirical import empirical_vs_ode, net_for_system  # noqa: F401
