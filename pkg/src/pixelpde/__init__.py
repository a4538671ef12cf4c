"""pixelpde: PDE surrogates built from two-layer periodic CNNs.

The package covers the full pipeline: finite-difference stencils and their
exact representation by small convolutional networks, reference solvers and
random initial data, rollout training with exact reverse-mode gradients,
norm-preserving integration, and evaluation metrics. See README.md for a
tour; the ``pixelpde`` command exposes the same functionality from the shell.
"""

from .errors import (
    ConfigError,
    DegenerateInputError,
    DivergenceError,
    FormatError,
    PixelPDEError,
    SolverFailureError,
)
from .fields import (
    ChannelStack,
    Field,
    FilterBank,
    conv2d_same,
    conv_bank,
    embed_stencil,
    pad_periodic,
)
from .stencils import (
    Interaction,
    PDESpec,
    Stencil,
    advection_spec,
    d2_dx2,
    d2_dy2,
    d_dx,
    d_dxdy,
    d_dy,
    eval_rhs,
    fisher_spec,
    heat_spec,
    identity_stencil,
    laplacian_5pt,
    pdespec_from_json,
    pdespec_to_json,
)
from .network import (
    RELU,
    RELU2,
    Activation,
    TwoLayerNetParams,
    activate,
    construct_linear,
    construct_quadratic,
    count_params,
    eval_net,
    leaky_relu,
    load_checkpoint,
    save_checkpoint,
)
from .integrators import (
    DiagnosticReport,
    StepperConfig,
    euler_step,
    local_error_diagnostic,
    network_vector_field,
    norm_projected_euler_step,
    project_tangent,
    rk4_flow,
    rollout,
    step,
    tangent_projected_field,
)
from .training import (
    AdamState,
    Gradients,
    LossConfig,
    TrainConfig,
    adam_step,
    grad_loss,
    init_adam_state,
    init_params,
    loss,
    save_history_csv,
    train_curriculum,
)
from .datagen import (
    Dataset,
    default_dt,
    fisher_norm_threshold,
    generate_dataset,
    load_dataset,
    random_ic_advection,
    random_ic_heat,
    ref_solve_advection,
    ref_solve_fisher,
    ref_solve_heat,
    save_dataset,
    stencil_symbol,
)
from .metrics import MetricSeries, eval_metrics, save_metrics_csv

__version__ = "0.1.0"
