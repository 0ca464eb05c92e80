"""Provable spectral-norm bounds and exact norms for circular-convolution layers."""

from .bounds import (
    BRANCHES,
    BoundReport,
    branch_matrix,
    compute_bound,
    reshape_flat_in,
    reshape_flat_out,
    reshape_hw,
    reshape_to_filter,
    reshape_wh,
)
from .convops import conv_adjoint, conv_forward, exact_norm_matfree
from .errors import (
    ConvnormError,
    DivergenceError,
    DomainError,
    FilterFormatError,
    FilterIntegrityError,
    GeometryError,
    NotConvergedError,
    ShapeMismatchError,
    SizeCapError,
)
from .filters import (
    Filter4D,
    load_filter,
    random_filter,
    require_larger_input,
    save_filter,
    seeded_rng,
)
from .frequency import (
    FrequencyMatrixSet,
    PaddedFilter,
    exact_norm_fft,
    fourier_matrix,
    frequency_matrices,
    frequency_sigma_max,
    pad_filter,
)
from .gradients import (
    BoundGradient,
    FiniteDiffReport,
    finite_diff_check,
    grad_bound,
    init_warm_states,
    warm_grad_step,
)
from .jacobian import (
    DEFAULT_SIZE_CAP,
    JacobianMatrix,
    build_jacobian,
    circ_matrix,
    circ_vector,
    oracle_sigma_max,
    save_matrix_csv,
    tie_groups,
)
from .power import (
    BatchedEstimate,
    PowerIterState,
    SpectralEstimate,
    grad_sigma_wrt_matrix,
    init_state,
    spectral_norm,
    spectral_norm_batched,
    warm_step,
)
from .regdemo import RegDemoConfig, RegDemoTrace, StepRecord, run_regdemo

__version__ = "0.1.0"
