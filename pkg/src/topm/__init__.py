"""Fixed-confidence top-m arm identification in linear bandits.

The library exposes four layers: problem instances (features, truth, reward
law), the gap-index algorithm engine with its five presets (lucb, ugape,
lingape, m-lingape, lingifa), sample-complexity tools (constants, optimal
L1 designs, fixed-point bounds), and a Monte-Carlo campaign harness.

Hot loops are numba-compiled with a pure-numpy fallback selected by setting
TOPM_DISABLE_NUMBA=1 before import; both backends produce bit-identical
results.
"""

from ._jit import NUMBA_ENABLED, active_backend
from .complexity import (
    H_KINDS,
    H_LUCB,
    H_MLINGAPE_1,
    H_MLINGAPE_2,
    H_UGAPE,
    ComplexityReport,
    DesignWeights,
    FractionResult,
    complexity_fraction_experiment,
    h_constant,
    sample_complexity_bound,
    solve_l1_design,
)
from .engine import (
    B_MAX_OVER_MTH,
    B_MAX_OVER_OUTSIDE,
    J_MIN_MAX_INDEX,
    J_TOP_M_EMPIRICAL,
    PRESET_NAMES,
    SEL_BOTH_ARMS,
    SEL_GREEDY,
    SEL_LARGEST_VARIANCE,
    SEL_OPTIMIZED,
    STOP_LUCB,
    STOP_UGAPE,
    AlgorithmSpec,
    RunResult,
    Trace,
    compute_Jt,
    compute_bt,
    compute_ct,
    pair_designs,
    preset,
    run_trial,
    select_arm,
    stopping_stat,
)
from .errors import (
    BoundOverflow,
    ConfigError,
    DimensionMismatch,
    InfeasibleDesign,
    InstanceFormatError,
    TopmError,
)
from .estimator import EstimatorState
from .harness import (
    CampaignConfig,
    EventReport,
    RunSummary,
    emit_outputs,
    load_run_csv,
    nearest_rank_quantiles,
    run_campaign,
    run_trials,
    summarize,
    validate_trace,
)
from .indices import (
    CLASSICAL,
    HEURISTIC,
    INDIVIDUAL,
    PAIRED,
    THEORETICAL,
    IndexConfig,
    ThresholdSpec,
)
from .instances import (
    EMPIRICAL_TABLE,
    GAUSSIAN_LINEAR,
    GapProfile,
    Instance,
    eps_top_set,
    gap_profile,
    load_instance,
    make_canonical_instance,
    make_classic_instance,
    make_random_unit_instance,
    make_table_instance,
    sample_reward,
    save_instance,
)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmSpec", "BoundOverflow", "CampaignConfig", "ComplexityReport",
    "ConfigError", "DesignWeights", "DimensionMismatch", "EstimatorState",
    "EventReport", "FractionResult", "GapProfile", "IndexConfig",
    "InfeasibleDesign", "Instance", "InstanceFormatError", "RunResult",
    "RunSummary", "ThresholdSpec", "TopmError", "Trace",
    "CLASSICAL", "EMPIRICAL_TABLE", "GAUSSIAN_LINEAR", "HEURISTIC",
    "INDIVIDUAL", "NUMBA_ENABLED", "PAIRED", "PRESET_NAMES", "THEORETICAL",
    "H_KINDS", "H_LUCB", "H_MLINGAPE_1", "H_MLINGAPE_2", "H_UGAPE",
    "B_MAX_OVER_MTH", "B_MAX_OVER_OUTSIDE", "J_MIN_MAX_INDEX",
    "J_TOP_M_EMPIRICAL", "SEL_BOTH_ARMS", "SEL_GREEDY",
    "SEL_LARGEST_VARIANCE", "SEL_OPTIMIZED", "STOP_LUCB", "STOP_UGAPE",
    "active_backend", "complexity_fraction_experiment", "compute_Jt",
    "compute_bt", "compute_ct", "emit_outputs", "eps_top_set", "gap_profile",
    "h_constant", "load_instance", "load_run_csv", "make_canonical_instance",
    "make_classic_instance", "make_random_unit_instance",
    "make_table_instance", "nearest_rank_quantiles", "pair_designs", "preset",
    "run_campaign", "run_trial", "run_trials", "sample_complexity_bound",
    "sample_reward", "save_instance", "select_arm", "solve_l1_design",
    "stopping_stat", "summarize", "validate_trace",
]
