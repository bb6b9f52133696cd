"""rcvb: budget-aware backbone search with precision emulation and
multi-resolution flip ensembling, runnable end to end on a CPU."""

from .allocator import AllocatorStats, MemoryTracker
from .budget import (Budget, CostCoefficients, ModelSpec, ProfileResult, SkipRecord,
                     VirtualClock, WallClock, analytic_memory, compute_max_epochs,
                     estimate_one_epoch_time, find_max_batch_size, fits,
                     profile_grid, profile_model)
from .config import ExperimentConfig, config_from_dict, config_to_dict, load_config
from .dataset import Dataset, gen_dataset, gen_splits, read_dataset, write_dataset
from .ensemble import (ViewPolicy, combine, evaluate_ensemble, hflip, predict_views,
                       resize_bilinear)
from .errors import (ConfigError, DatasetFormatError, ModelDoesNotFit,
                     NoFeasibleCandidate, OutOfBudgetMemory, RcvbError,
                     TimeBudgetTooSmall)
from .nn import Network, backward, build_network, cross_entropy, forward
from .optim import AdamWConfig, AdamWState, adamw_step, cosine_lr
from .orchestrator import (Candidate, TrainReport, enumerate_candidates, instantiate,
                           rank, validation_epochs)
from .pipeline import run_pipeline, run_profile_phase
from .precision import AmpPolicy, Precision, Storage, quantize_fp16
from .report import build_report, emit_human, emit_machine, parse_machine
from .tensor import Tensor
from .training import EpochStats, evaluate, train_epoch

__version__ = "0.1.0"
