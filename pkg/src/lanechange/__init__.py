"""Safety-filtered autonomous lane change: an FSM-supervised CLF-CBF
quadratic-program controller over a kinematic bicycle model, with a traffic
simulator, Monte-Carlo harness and CLI."""

from .barriers import (
    BarrierEvaluation,
    ControllerGains,
    GapMeasures,
    SurroundingVehicle,
    VehiclesOfInterest,
    barrier_value,
    cbf_acc,
    cbf_back,
    cbf_lane_change,
    clf_rows,
    cost_matrix,
    gap_measures,
    switch_safety_check,
)
from .controller import (
    ControllerDiagnostics,
    FsmState,
    LaneChangeController,
    LaneLayout,
    SignalSet,
    compute_p,
    predictive_speed_check,
    select_vehicles_of_interest,
    transition,
)
from .dynamics import (
    ControlInput,
    InputLimits,
    VehicleGeometry,
    VehicleState,
    affine_terms,
    derivative,
    input_rows,
    steering_from_slip,
    step,
)
from .qp import (
    ConfigurationError,
    LinearInequality,
    QpSolution,
    QuadraticProgram,
    kkt_residual,
    regularized_cost,
    solve,
)
from .scenarios import (
    Scenario,
    SurroundingSpec,
    build_random,
    build_typical,
    load_scenario,
    save_scenario,
)
from .sim import SimTrace, classify_outcome, run
from .batch import BatchReport, run_batch

__version__ = "0.1.0"
