"""Voltage regulation of radial feeders hosting AI-training data centers.

Fixed- and switching-reference droop control on a LinDistFlow feeder, with
the contraction analysis that certifies the closed loop.
"""
from .analysis import (
    ContractionCertificate,
    ErrorSystem,
    SteadyStateExtrema,
    disturbance,
    ideal_mode_references,
    measure_extrema,
    optimal_bias,
    step_error,
    theorem_bound,
    validate_gain,
)
from .control import (
    ControlLimits,
    DroopGain,
    SwitchingRefState,
    droop_update,
    fixed_reference,
    select_sign,
    switching_reference_step,
    update_amplitude,
    update_bias,
)
from .errors import ConfigError, ParseError, TopologyError, ValidationError
from .feeder import FeederModel, build_feeder, load_ieee33, solve_voltage
from .scenario import ScenarioConfig, load_config
from .sim import SimResult, compare_controllers, run_scenario
from .workload import StorageSmoother, TwoModeProfile, WorkloadTrace, generate_trace, load_trace_csv, smooth_step

__version__ = "0.1.0"
