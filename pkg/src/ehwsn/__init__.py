"""Distributed detection with energy-harvesting sensors over fading channels."""

from .battery import BatteryChain, ChainError, build_chain, steady_state, transition_matrix
from .config import ConfigError, dump_config, load_config, parse_config
from .detection import operating_point, threshold_for_pd
from .divergence import conditional_alpha, conditional_j, quadrature_conditional_j
from .fusion import decide, llr_fc, pe_clt, pe_low_snr
from .model import (
    Deployment,
    ExperimentConfig,
    HarvestModel,
    OperatingPoint,
    PowerPolicy,
    Priors,
    Quantizer,
    SensorModel,
)
from .optimize import DesignPoint, SensorDesign, SolveReport, fixed_design, solve_p1, solve_p2
from .simulate import PeEstimate, run_trials, simulate_battery

__all__ = [
    "BatteryChain",
    "ChainError",
    "build_chain",
    "steady_state",
    "transition_matrix",
    "ConfigError",
    "dump_config",
    "load_config",
    "parse_config",
    "operating_point",
    "threshold_for_pd",
    "conditional_alpha",
    "conditional_j",
    "quadrature_conditional_j",
    "decide",
    "llr_fc",
    "pe_clt",
    "pe_low_snr",
    "Deployment",
    "ExperimentConfig",
    "HarvestModel",
    "OperatingPoint",
    "PowerPolicy",
    "Priors",
    "Quantizer",
    "SensorModel",
    "DesignPoint",
    "SensorDesign",
    "SolveReport",
    "fixed_design",
    "solve_p1",
    "solve_p2",
    "PeEstimate",
    "run_trials",
    "simulate_battery",
]
