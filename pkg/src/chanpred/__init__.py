"""Continual-learning engine for MIMO channel prediction.

Synthesizes correlated urban-cell channel tensors, trains small sequence
predictors on a stream of propagation scenarios, and applies replay-,
regularization-, and distillation-based continual-learning methods to
resist catastrophic forgetting across scenario handovers.
"""

from .channel import (ChannelDataset, generate_dataset, read_dataset,
                      write_dataset)
from .harness import (ExperimentConfig, MetricsRecord, export_results,
                      forgetting, import_results, run_baseline, run_continual,
                      run_many, snr_sweep_eval)
from .models import (OptimConfig, ParameterVector, PredictorConfig,
                     loss_and_grad, make_backbone, param_count, sgd_step)
from .numerics import (awgn_corrupt, bessel_j0, finite_diff_grad, from_db,
                       nmse, nmse_batch, to_db)
from .regularization import EwcState, SiState
from .replay import Experience, ReplayBuffer
from .scenarios import PRESETS, ScenarioConfig, get_preset

__version__ = "0.1.0"

__all__ = [
    "ChannelDataset", "ExperimentConfig", "MetricsRecord", "OptimConfig",
    "ParameterVector", "PredictorConfig", "PRESETS", "ScenarioConfig",
    "Experience", "ReplayBuffer", "EwcState", "SiState",
    "awgn_corrupt", "bessel_j0", "export_results", "finite_diff_grad",
    "forgetting", "from_db", "generate_dataset", "get_preset",
    "import_results", "loss_and_grad", "make_backbone", "nmse", "nmse_batch",
    "param_count", "read_dataset", "run_baseline", "run_continual",
    "run_many", "sgd_step", "snr_sweep_eval", "to_db", "write_dataset",
    "__version__",
]
