"""Flat key=value experiment configs.

The on-disk format is one `key = value` pair per line, `#` comments,
blank lines ignored. Flat and typed so configs are diff-friendly and
hashable; the canonical form (all keys, normalized string values, sorted)
is what gets digested into a run's identity.

Keys:

    task          conll_like | balanced_classification | skewed_classification
                  | conll | csv
    train_path    input file for the conll / csv tasks
    test_path     optional explicit held-out file
    size          synthetic corpus size (tokens or documents)
    classes       class count for balanced_classification
    class_probs   comma floats for skewed_classification
    separation    cluster mean separation for synthetic features
    seq_len       tokens per synthetic sentence
    feature_dim   per-token (base) feature dimension
    window        context window radius for tagging featurizers
    hidden        comma widths of hidden layers ("" = none)
    activation    relu | tanh
    strategy      head | lastK | all | head_recurrent
    recurrent_width  width of the recurrent head (head_recurrent only)
    epsilon       privacy budget; "inf" for non-private
    delta         DP failure probability (default 1e-5)
    clip          per-example L2 clip threshold C
    lot_size      expected lot size L (default 32)
    epochs        training epochs
    lr            learning rate
    lr_grid       comma floats for sweeps
    eps_list      comma budgets for privacy curves ("inf" allowed)
    seed          master seed
    seeds         comma seeds for trend reports
    out_dir       output directory (under DPDESK_OUT_ROOT if set)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

DEFAULTS = {
    "task": "balanced_classification",
    "train_path": "",
    "test_path": "",
    "size": "2000",
    "classes": "2",
    "class_probs": "",
    "separation": "2.0",
    "seq_len": "20",
    "feature_dim": "32",
    "window": "0",
    "hidden": "",
    "activation": "tanh",
    "strategy": "all",
    "recurrent_width": "0",
    "epsilon": "inf",
    "delta": "1e-5",
    "clip": "1.0",
    "lot_size": "32",
    "epochs": "10",
    "lr": "0.01",
    "lr_grid": "0.1,0.01,0.001,0.0001,0.00001",
    "eps_list": "1,2,5,inf",
    "seed": "0",
    "seeds": "",
    "out_dir": "runs",
}

TASKS = ("conll_like", "balanced_classification", "skewed_classification",
         "conll", "csv")


def parse_flat(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _float_or_inf(s: str) -> float:
    return math.inf if s.strip().lower() in ("inf", "infinity") else float(s)


def _csv_floats(s: str):
    return tuple(_float_or_inf(x) for x in s.split(",") if x.strip())


def _csv_ints(s: str):
    return tuple(int(x) for x in s.split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    flat: dict = field(default_factory=dict)  # canonical string values

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        flat = dict(DEFAULTS)
        flat.update({k: str(v).strip() for k, v in raw.items()})
        cfg = ExperimentConfig(flat)
        if cfg.task not in TASKS:
            raise ValueError(f"unknown task {cfg.task!r}")
        return cfg

    @staticmethod
    def from_text(text: str) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(parse_flat(text))

    @staticmethod
    def from_file(path: str) -> "ExperimentConfig":
        with open(path) as f:
            return ExperimentConfig.from_text(f.read())

    def override(self, **kwargs) -> "ExperimentConfig":
        flat = dict(self.flat)
        flat.update({k: str(v) for k, v in kwargs.items()})
        return ExperimentConfig.from_dict(flat)

    # typed accessors
    @property
    def task(self): return self.flat["task"]
    @property
    def train_path(self): return self.flat["train_path"]
    @property
    def test_path(self): return self.flat["test_path"]
    @property
    def size(self): return int(self.flat["size"])
    @property
    def classes(self): return int(self.flat["classes"])
    @property
    def class_probs(self): return _csv_floats(self.flat["class_probs"])
    @property
    def separation(self): return float(self.flat["separation"])
    @property
    def seq_len(self): return int(self.flat["seq_len"])
    @property
    def feature_dim(self): return int(self.flat["feature_dim"])
    @property
    def window(self): return int(self.flat["window"])
    @property
    def hidden(self): return _csv_ints(self.flat["hidden"])
    @property
    def activation(self): return self.flat["activation"]
    @property
    def strategy(self): return self.flat["strategy"]
    @property
    def recurrent_width(self): return int(self.flat["recurrent_width"])
    @property
    def epsilon(self): return _float_or_inf(self.flat["epsilon"])
    @property
    def delta(self): return float(self.flat["delta"])
    @property
    def clip(self): return float(self.flat["clip"])
    @property
    def lot_size(self): return int(self.flat["lot_size"])
    @property
    def epochs(self): return int(self.flat["epochs"])
    @property
    def lr(self): return float(self.flat["lr"])
    @property
    def lr_grid(self): return _csv_floats(self.flat["lr_grid"])
    @property
    def eps_list(self): return _csv_floats(self.flat["eps_list"])
    @property
    def seed(self): return int(self.flat["seed"])
    @property
    def seeds(self): return _csv_ints(self.flat["seeds"])
    @property
    def out_dir(self): return self.flat["out_dir"]
