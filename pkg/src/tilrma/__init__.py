"""Determined blind source separation with a heavy-tailed low-rank source model."""

from .engine import HyperParams, SeparationResult, TwoStageSchedule, run, run_two_stage, separate
from .metrics import EvalReport, align_permutation, sdr_projection, si_sdr
from .source_model import NmfFactors, init_factors
from .stft import ComplexSpectrogram, StftConfig, analyze, synthesize
from .wavio import read_wav, write_wav

__all__ = [
    "ComplexSpectrogram",
    "EvalReport",
    "HyperParams",
    "NmfFactors",
    "SeparationResult",
    "StftConfig",
    "TwoStageSchedule",
    "align_permutation",
    "analyze",
    "init_factors",
    "read_wav",
    "run",
    "run_two_stage",
    "sdr_projection",
    "separate",
    "si_sdr",
    "synthesize",
    "write_wav",
]

__version__ = "0.1.0"
