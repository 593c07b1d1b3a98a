"""Multiuser wideband movable-antenna simulator.

Channel synthesis over a candidate-position grid, sparse CSI estimation
from pilot sweeps, antenna position selection, sum-rate beamforming and a
deterministic Monte Carlo harness.
"""

from .scenario import (
    SPEED_OF_LIGHT,
    ChannelTensor,
    OfdmConfig,
    PathComponent,
    PositionGrid,
    UserChannel,
    build_channel_tensor,
    build_grid,
    channel_coeff,
    sample_user_channel,
    steering_vector,
)
from .estimation import (
    CePattern,
    Dictionary,
    PilotConfig,
    PilotObservations,
    SparseEstimate,
    assemble_initial_csi,
    build_ce_pattern,
    build_dictionary,
    estimate_user_csi,
    ls_refit,
    nmse,
    somp,
    synthesize_pilots,
)
from .selection import (
    CeoParams,
    EquivalentChannelTensor,
    PositionAssignment,
    apply_assignment,
    ceo_select,
    exhaustive_select,
    greedy_select,
    random_select,
    sequential_unique_assign,
)
from .beamforming import (
    BeamformerConfig,
    BeamformingSolution,
    ParametricBeamformer,
    WmmseState,
    build_parametric_w,
    extract_params,
    mrt,
    refine_params,
    sinr,
    sum_rate,
    wmmse,
    zf,
    zf_rate_evaluator,
    wmmse_rate_evaluator,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    NetRateConfig,
    ResultTable,
    TrialRecord,
    config_from_dict,
    derive_seed,
    net_rate,
    run_ce_sweep,
    run_net_rate_sweep,
    run_rate_sweep,
    run_sweep,
)

__version__ = "0.1.0"
