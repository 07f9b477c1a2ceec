"""Experiment orchestration: configs, the search loop, checkpoints, retraining and reports."""
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config, save_config
from .report import LogFormatError, epochs_to_threshold, parse_log, report, summarize_log, summarize_modes
from .retrain import RetrainRow, retrain_best, train_from_scratch
from .search import EpochLogRecord, SearchState, read_log, run_search

__all__ = [
    "Checkpoint", "CheckpointError", "load_checkpoint", "save_checkpoint",
    "ConfigError", "RunConfig", "load_config", "save_config",
    "LogFormatError", "epochs_to_threshold", "parse_log", "report", "summarize_log", "summarize_modes",
    "RetrainRow", "retrain_best", "train_from_scratch",
    "EpochLogRecord", "SearchState", "read_log", "run_search",
]
