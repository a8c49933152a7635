"""Linear and cubic Luenberger-type state observers for LTI plants.

Covers plain LTI plants, plants with an unknown input, plants with state
and input delays, and plants with delayed outputs.
"""
__version__ = "0.1.0"

from .design import (
    DesignReport,
    ObserverDesign,
    PlantModel,
    alpha_compatible_z1,
    compute_cbar,
    design_cubic_gain,
    design_delay_observer,
    design_linear_alpha,
    design_linear_fullorder,
    design_unknown_input,
)
from .estimators import CubicObserver, LinearObserver
from .exceptions import (
    ConfigError,
    DelayDesignInfeasibleError,
    DesignRejectedError,
    DimensionError,
    DivergenceError,
    InfeasibleDesignError,
    InvalidInputError,
    ObserverError,
)
from .signals import SignalSpec
from .simulate import SimulationConfig, Trace, simulate_output_delay_pair, simulate_pair

__all__ = [
    "ConfigError", "CubicObserver", "DelayDesignInfeasibleError", "DesignRejectedError", "DesignReport",
    "DimensionError", "DivergenceError", "InfeasibleDesignError", "InvalidInputError", "LinearObserver",
    "ObserverDesign", "ObserverError", "PlantModel", "SignalSpec", "SimulationConfig", "Trace",
    "alpha_compatible_z1", "compute_cbar", "design_cubic_gain", "design_delay_observer",
    "design_linear_alpha", "design_linear_fullorder", "design_unknown_input",
    "simulate_output_delay_pair", "simulate_pair",
]
