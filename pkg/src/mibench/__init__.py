"""Mutual-information estimation toolkit.

Classifier-based and variational MI estimators (demi, mine, smile,
infonce, ccmi) trained with a small self-contained dense-network engine
and benchmarked on correlated-Gaussian tasks whose mutual information
is known in closed form.
"""

from ._accel import NUMBA_ENABLED
from .bench import (
    ExperimentGrid,
    ResultRow,
    TracePoint,
    emit_report,
    gradient_suite,
    load_report,
    run_grid,
    run_longrun,
    run_selfconsistency,
    summarize,
)
from .errors import (
    CacheMismatchError,
    ConfigurationError,
    DomainError,
    EstimateUnstableError,
    IdxFormatError,
    MibenchError,
    ShapeError,
    TrainingDivergenceError,
)
from .estimators import (
    EstimateReport,
    EstimatorSpec,
    ccmi_estimate,
    demi_estimate,
    demi_loss,
    dv_objective,
    estimate,
    infonce_objective,
    parse_variant,
    smile_estimate,
    smile_objective,
    train,
)
from .lifting import LiftedBatch, draw_lifted, epoch_stream
from .nn import (
    AdamState,
    DenseNet,
    GradCheckReport,
    adam_step,
    backward,
    forward,
    grad_check,
    init_adam,
    init_net,
    load_model,
    logit,
    save_model,
)
from .oracle import (
    MiSampleEstimate,
    OptimalPosterior,
    bayes_optimal_ce_loss,
    optimal_posterior_score,
    sample_average_mi,
)
from .seeding import derive_seed
from .tasks import (
    GaussianTask,
    SamplePool,
    analytic_log_ratio,
    load_pool_binary,
    load_pool_csv,
    rho_for_mi,
    sample_pool,
    sample_product_pool,
    save_pool_binary,
    save_pool_csv,
    true_mi,
)

__version__ = "0.1.0"
