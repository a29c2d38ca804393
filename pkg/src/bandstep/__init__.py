"""bandstep: multi-stage speech bandwidth extension.

A cascade of dual-stream (log-amplitude / wrapped-phase) spectrum-painting
blocks steps audio up a ladder of sampling rates.  The package bundles the
DSP front end, a small reverse-mode autodiff engine the blocks train on,
GAN-based training, quality metrics, a real-time-factor benchmark, and a
FastAPI service with a thin command-line client.
"""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, load_model, save_checkpoint
from .config import RunConfig, desk_preset, dump_run_config, load_run_config
from .dsp import (
    StftConfig,
    Waveform,
    band_cutoff_bin,
    from_log_amp_phase,
    istft,
    sinc_resample,
    stft,
    to_log_amp_phase,
)
from .errors import (
    BandstepError,
    CheckpointError,
    DataError,
    InvalidArgumentError,
    NumericError,
)
from .metrics import LsdConfig, lsd, lsd_band, spectral_snr
from .model import (
    CascadeConfig,
    CascadeModel,
    cascade_extend,
    desk_scale_config,
    extend_waveform,
    full_scale_config,
)
from .train import run_training, train_from_config
from .wavio import read_wav, write_wav

__all__ = [
    "BandstepError",
    "CascadeConfig",
    "CascadeModel",
    "CheckpointError",
    "DataError",
    "InvalidArgumentError",
    "LsdConfig",
    "NumericError",
    "RunConfig",
    "StftConfig",
    "Waveform",
    "band_cutoff_bin",
    "cascade_extend",
    "desk_preset",
    "desk_scale_config",
    "dump_run_config",
    "extend_waveform",
    "from_log_amp_phase",
    "full_scale_config",
    "istft",
    "load_checkpoint",
    "load_model",
    "load_run_config",
    "lsd",
    "lsd_band",
    "run_training",
    "save_checkpoint",
    "sinc_resample",
    "spectral_snr",
    "stft",
    "to_log_amp_phase",
    "train_from_config",
    "read_wav",
    "write_wav",
    "__version__",
]
