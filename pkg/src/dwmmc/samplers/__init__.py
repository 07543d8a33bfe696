"""Learning algorithms on simulated devices."""

from .langevin import (SAMPLERS, LangevinGradient, StepInfo, TrainConfig, dwsgd_step,
                       langevin_gradient, sgld_chain, sgld_step)
from .mh import filamentary_proposal, gaussian_proposal, mh_chain
from .synapse import SynapsePairs
from .thinning import (COMMIT, OVERWRITE, PosteriorStore, ThinningController, commits_after,
                       ensemble_infer, predict_proba, thinning_controller)
from .trainer import LOG_HEADER, SAMPLE_COUNTS, Trainer, TrainResult, accuracy, write_config

__all__ = [
    "SAMPLERS", "LangevinGradient", "StepInfo", "TrainConfig", "dwsgd_step", "langevin_gradient",
    "sgld_chain", "sgld_step", "filamentary_proposal", "gaussian_proposal", "mh_chain",
    "SynapsePairs", "COMMIT", "OVERWRITE", "PosteriorStore", "ThinningController",
    "commits_after", "ensemble_infer", "predict_proba", "thinning_controller", "LOG_HEADER",
    "SAMPLE_COUNTS", "Trainer", "TrainResult", "accuracy", "write_config",
]
