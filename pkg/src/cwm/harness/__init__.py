from cwm.harness.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from cwm.harness.metrics import MetricsWriter, iqm_ci

__all__ = [
    "CheckpointError",
    "MetricsWriter",
    "iqm_ci",
    "load_checkpoint",
    "save_checkpoint",
]
