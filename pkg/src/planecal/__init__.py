"""Plane-constrained kinematic calibration of serial chains.

Measure a chain by pressing a three-point contact plate against a plane:
height, roll and pitch of the contact frame in the plane frame must vanish,
and the deviations over many postures identify the placement errors of every
joint together with the plane model itself.  The package covers the residual
model and its Jacobian, identifiable-parameter reduction, Levenberg-Marquardt
calibration, observability-driven posture selection and a synthetic-recovery
simulator, plus a CLI that renders report figures next to the CSV artifacts.
"""

from .calibrate import (
    CalibrationResult,
    CrossValidationResult,
    LMOptions,
    cross_validate,
    residual_stats,
    solve,
)
from .design import (
    DetmaxRun,
    SelectionResult,
    WeightOptimResult,
    default_k0,
    detmax_select,
    info_matrix,
    iroc_select,
    o1_index,
    optimize_weights,
    pool_info_matrices,
    random_select,
)
from .errors import (
    DegenerateOrientationError,
    InvalidArgumentError,
    NonFiniteResidualError,
    PartialPoolError,
    PlanecalError,
    SingularPoolError,
)
from .identifiability import (
    BaseParameterization,
    Regressor,
    build_random_regressor,
    qr_reduce,
    regressor_from_postures,
    remap_base_to_full,
)
from .kinematics import (
    Joint,
    JointPlacement,
    KinematicChain,
    Pose,
    chain_from_dict,
    chain_to_dict,
    contact_frame_pose,
    forward_kinematics,
    load_chain,
    placement_to_pose,
    whole_chain_com,
)
from .posegen import (
    PoolSpec,
    PosturePool,
    Rejection,
    TargetSpec,
    balance_check,
    build_pool,
    order_route,
    project,
    sample_and_project,
)
from .residual import (
    Dataset,
    ParameterVector,
    PlaneParams,
    ResidualTriple,
    n_parameters,
    param_labels,
    plane_residual,
    residual_jacobian,
    residual_jacobian_fd,
    stack_residuals,
)
from .simulator import (
    GroundTruth,
    NoiseModel,
    corrupt,
    make_scenario,
    recovery_report,
)

__version__ = "0.1.0"
