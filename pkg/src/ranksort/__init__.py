"""Rank & Sort loss, the pairwise error framework it is built on, baselines and a toy trainer."""
from .baselines import (
    AP_DEFAULT_DELTA,
    AlrpTargetConfig,
    alrp_target_error,
    ap_gradients,
    ap_loss,
    ap_primary_terms,
)
from .core import (
    DEFAULT_DELTA,
    EmptyPositivesError,
    PairStats,
    RankingProblem,
    SmoothStep,
    pair_stats,
    partition,
    smooth_step,
)
from .framework import (
    LossReport,
    PairwiseErrors,
    PositiveErrors,
    compute_gradients_generic,
    compute_loss,
    evaluate,
)
from .localisation import (
    BalanceMode,
    Box,
    DegenerateBoxWarning,
    TaskBalancer,
    WeightingMode,
    giou,
    giou_with_grad,
    instance_weights,
    iou,
    task_balance,
    weighted_box_loss,
    weighted_box_loss_with_grad,
)
from .metrics import UndefinedCorrelationError, average_precision, spearman_rho
from .rs_loss import (
    RsErrorBreakdown,
    ranking_only_primary_terms,
    rs_errors,
    rs_gradients,
    rs_loss,
    rs_loss_value,
    rs_pmfs,
    rs_primary_terms,
)
from .synth import (
    DivergenceError,
    LossChoice,
    SynthConfig,
    TrainReport,
    imbalance_sweep,
    sorting_ablation,
    train,
)

__version__ = "0.1.0"
