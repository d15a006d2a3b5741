"""Simulator for an 11-mode, mode-division-multiplexed coherent link.

Modules
-------
sigproc     bits, QAM mapping, RRC shaping, resampling, noise and phase noise
mdmchannel  transfer matrices, crosstalk profiles, polarization pairing, TDM
rxdsp       stitching, synchronisation, frequency-domain MIMO LMS, estimates
metrics     BER / EVM, MDL, capacity and spectral efficiency
config      experiment configuration (INI) and its schema
pipeline    end-to-end runs, sweeps, matrix characterisation, result files
plots       SVG figures from a result directory
cli         ``mdmlink`` command line
"""

from .config import ExperimentConfig, config_schema
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidArgumentError,
    MatrixParseError,
    MdmError,
    MdmRuntimeError,
    PipelineError,
    StaleStateError,
    SyncError,
)
from .pipeline import RunResult, characterize, run_simulation, sweep, write_result

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DivergenceError",
    "ExperimentConfig",
    "InvalidArgumentError",
    "MatrixParseError",
    "MdmError",
    "MdmRuntimeError",
    "PipelineError",
    "RunResult",
    "StaleStateError",
    "SyncError",
    "characterize",
    "config_schema",
    "run_simulation",
    "sweep",
    "write_result",
]
