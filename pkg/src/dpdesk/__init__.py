"""dpdesk: desk-scale differentially private training.

DP-SGD with per-example gradient clipping and lot-level Gaussian noise, a
Renyi-DP accountant with inverse noise calibration, a layer-freezing
strategy taxonomy over a small model zoo, and an imbalance-aware evaluation
harness (confusion matrices, macro-F1, collapse-gap diagnostics).
"""

from .accountant import (EpsilonReport, RdpCurve, calibrate_sigma,
                         epsilon_for, rdp_step, to_epsilon)
from .backend import BACKEND_NAME
from .config import ExperimentConfig
from .data import (FeaturizedData, LabeledCorpus, SkewSpec, featurize,
                   gen_skewed_classification, gen_skewed_tagging, parse_conll,
                   parse_csv, serialize_conll)
from .dpsgd import (OptimizerConfig, PrivacyParams, clip, noisy_aggregate,
                    sample_lot, step, train)
from .grads import batch_grad, per_example_grads
from .metrics import ConfusionMatrix, MetricReport, collapse_gap, confusion, report
from .models import (FeaturizerSpec, FreezeMask, Model, ModelSpec,
                     TrainStrategy, apply_strategy, build, forward,
                     load_model, predict, save_model)
from .rng import Rng, gaussian, l2_norm

__version__ = "0.1.0"
