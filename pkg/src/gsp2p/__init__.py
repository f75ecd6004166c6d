"""Frequency-support headroom for inverter-based resources.

Aggregate frequency-response models, peak-to-peak synthesis of virtual
inertia and damping, headroom curves and frequency-constrained unit
commitment.
"""
from .errors import (ConfigError, FleetError, Gsp2pError, HeadroomError, KernelError, PipelineError, RegimeError,
                     ReportError, SchedulingError, SynthesisError)
from .p2p_synthesis import ControllerGain, SynthesisResult, synthesize_gains
from .system_model import (AggregateModel, ConverterUnit, FleetDescription, SyncGenerator, aggregate_fleet,
                           closed_loop_params)

__version__ = "0.1.0"

__all__ = [
    "AggregateModel", "ConfigError", "ControllerGain", "ConverterUnit", "FleetDescription", "FleetError",
    "Gsp2pError", "HeadroomError", "KernelError", "PipelineError", "RegimeError", "ReportError",
    "SchedulingError", "SyncGenerator", "SynthesisError", "SynthesisResult", "aggregate_fleet",
    "closed_loop_params", "synthesize_gains",
]
