"""Surveillance-evasion game toolkit.

Pipeline: retrograde-characteristic data generation, learned value/feedback
synthesis, sample-and-hold closed-loop simulation, and one-hold-interval
gain/loss fields.
"""
from ._kernels import backend_name
from .characteristics import (
    Characteristic,
    CharacteristicPoint,
    Costate,
    Dataset,
    TerminalCondition,
    build_dataset,
    generate_characteristic,
    load_dataset_csv,
    terminal_costate,
    write_dataset_csv,
)
from .closed_loop import (
    SampleHoldConfig,
    Trajectory,
    game_time_table,
    simulate,
    trajectory_export,
)
from .feedback import (
    SelectionPolicy,
    evader_feedback,
    pursuer_feedback,
    select_controls,
)
from .gain_loss import (
    GainLossField,
    field_sweep,
    v_max_delta,
    v_min_delta,
    value_eval,
)
from .game import (
    Controls,
    DegenerateCrossing,
    GameParams,
    InertialStates,
    State,
    boundary_crossing,
    dynamics,
    rk4_step,
    to_evader_frame,
)
from .mlp import (
    MlpModel,
    TrainConfig,
    forward,
    input_gradient,
    kappa10,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
