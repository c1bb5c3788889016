"""Combined Markov generators in a random environment with product-form stationary measure."""

__version__ = "0.1.0"

from .core import (
    DTYPE,
    GeneratorFamily,
    Measure,
    RateMatrix,
    StateSpace,
    ValidationReport,
    scale_family,
    solve_stationary,
    total_variation,
    validate_dissipative,
    verify_stationary,
)
from .diagnostics import (
    classification_census,
    jump_criterion,
    theorem_ratio_sweep,
    verify_recurrences,
)
from .errors import *  # noqa: F401,F403
from .multi import MultiChain, assemble_multi, extract_v_profile
from .queueing import Mode, QueueingParams, build_A_family, build_Q_family, build_queueing_instance
from .sim import Trajectory, compare_occupation, merge_trajectories, simulate, simulate_replicas
from .single import (
    CombinedChain,
    Label,
    ProductMeasure,
    TauField,
    TauMode,
    Variant,
    assemble_single,
    build_product_measure,
    classify_states,
    compute_tau_minimal,
    compute_tau_uniform,
    product_kernel,
)
