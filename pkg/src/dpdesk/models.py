"""Model zoo: frozen featurizer + trainable layered heads with freeze masks.

The stand-in for a pretrained encoder is a fixed random projection applied
to hashed / windowed input features. It owns a parameter group that is frozen
under every training strategy, so the "frozen encoder vs fine-tuned layers"
structure is preserved while the whole model stays desk-scale.

Parameter groups, in declaration order:

    featurizer (W, dim x dim)         -- always frozen
    hidden_1 .. hidden_L (W, b)
    recurrent (Wx, Wh, b)             -- only when recurrent_width > 0
    output (W, b)

Strategies map onto these groups: head-only trains output; last-k adds the
deepest k hidden layers; "all" trains everything but the featurizer; the
recurrent-head strategy trains the recurrent group plus output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

ACTIVATIONS = ("relu", "tanh")

MAGIC = b"DPDESK1\n"


@dataclass(frozen=True)
class FeaturizerSpec:
    kind: str  # "hashed_bow" | "window"
    dim: int
    window: int = 0

    def __post_init__(self):
        if self.kind not in ("hashed_bow", "window"):
            raise ValueError(f"unknown featurizer kind {self.kind!r}")
        if self.dim <= 0:
            raise ValueError("featurizer dim must be positive")
        if self.kind == "window":
            if self.window < 0:
                raise ValueError("window must be non-negative")
            if self.dim % (2 * self.window + 1) != 0:
                raise ValueError(
                    f"window featurizer dim {self.dim} not divisible by "
                    f"window span {2 * self.window + 1}"
                )

    @property
    def base_dim(self) -> int:
        """Per-token slot width (window kind) or full dim (bag kind)."""
        if self.kind == "window":
            return self.dim // (2 * self.window + 1)
        return self.dim


@dataclass(frozen=True)
class ModelSpec:
    featurizer: FeaturizerSpec
    hidden: tuple = ()  # ((width, activation), ...)
    classes: int = 2
    task: str = "classification"  # "classification" | "tagging"
    recurrent_width: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least 2 output classes")
        if self.task not in ("classification", "tagging"):
            raise ValueError(f"unknown task {self.task!r}")
        for width, act in self.hidden:
            if width <= 0:
                raise ValueError("hidden layer width must be positive")
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        if self.recurrent_width < 0:
            raise ValueError("recurrent width must be non-negative")


@dataclass(frozen=True)
class TrainStrategy:
    """Which parameter groups receive updates.

    Variants: "head" (output only), "last_k" (output + deepest k hidden),
    "all" (everything except the featurizer), "head_recurrent" (recurrent
    aggregation layer + output).
    """

    variant: str
    k: int = 0

    def __post_init__(self):
        if self.variant not in ("head", "last_k", "all", "head_recurrent"):
            raise ValueError(f"unknown strategy {self.variant!r}")
        if self.k < 0:
            raise ValueError("k must be non-negative")

    @staticmethod
    def parse(text: str) -> "TrainStrategy":
        text = text.strip().lower()
        if text in ("head", "head_only"):
            return TrainStrategy("head")
        if text == "all":
            return TrainStrategy("all")
        if text in ("head_recurrent", "recurrent"):
            return TrainStrategy("head_recurrent")
        if text.startswith("last"):
            return TrainStrategy("last_k", k=int(text[4:].lstrip("_")))
        raise ValueError(f"cannot parse strategy {text!r}")


@dataclass
class ParamGroup:
    name: str
    arrays: list  # list of float64 ndarrays

    @property
    def size(self) -> int:
        return int(sum(a.size for a in self.arrays))


@dataclass
class FreezeMask:
    """Per-group trainability flags, aligned with Model.groups."""

    trainable: tuple  # tuple of bools

    def trainable_indices(self, model: "Model") -> list:
        return [i for i, t in enumerate(self.trainable) if t]

    def trainable_size(self, model: "Model") -> int:
        return sum(model.groups[i].size for i in self.trainable_indices(model))


@dataclass
class Model:
    spec: ModelSpec
    groups: list = field(default_factory=list)

    def group(self, name: str) -> ParamGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    @property
    def hidden_widths(self) -> list:
        return [w for w, _ in self.spec.hidden]

    def head_parameter_count(self) -> int:
        """Parameters in all non-featurizer groups."""
        return sum(g.size for g in self.groups if g.name != "featurizer")

    def copy(self) -> "Model":
        return Model(
            self.spec,
            [ParamGroup(g.name, [a.copy() for a in g.arrays]) for g in self.groups],
        )


def _init_uniform(rng: Rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    n = int(np.prod(shape))
    return (bound * (2.0 * rng.uniform(n) - 1.0)).reshape(shape)


def build(spec: ModelSpec, rng: Rng) -> Model:
    """Initialize a model; uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
    dim = spec.featurizer.dim
    groups = [ParamGroup("featurizer", [_init_uniform(rng, dim, (dim, dim))])]
    in_dim = dim
    for i, (width, _act) in enumerate(spec.hidden, start=1):
        groups.append(
            ParamGroup(
                f"hidden_{i}",
                [_init_uniform(rng, in_dim, (in_dim, width)),
                 _init_uniform(rng, in_dim, (width,))],
            )
        )
        in_dim = width
    if spec.recurrent_width > 0:
        r = spec.recurrent_width
        groups.append(
            ParamGroup(
                "recurrent",
                [_init_uniform(rng, in_dim, (in_dim, r)),
                 _init_uniform(rng, r, (r, r)),
                 _init_uniform(rng, in_dim, (r,))],
            )
        )
        in_dim = r
    groups.append(
        ParamGroup(
            "output",
            [_init_uniform(rng, in_dim, (in_dim, spec.classes)),
             _init_uniform(rng, in_dim, (spec.classes,))],
        )
    )
    return Model(spec, groups)


def apply_strategy(model: Model, strategy: TrainStrategy) -> FreezeMask:
    """Compute per-group trainability flags for a strategy.

    The featurizer is frozen under every strategy. last_k with k >= number
    of hidden layers is equivalent to "all" (minus the recurrent group when
    absent); last_0 is identical to head-only.
    """
    names = [g.name for g in model.groups]
    n_hidden = sum(1 for n in names if n.startswith("hidden_"))
    flags = {n: False for n in names}
    flags["output"] = True
    if strategy.variant == "head":
        pass
    elif strategy.variant == "last_k":
        for i in range(n_hidden - min(strategy.k, n_hidden) + 1, n_hidden + 1):
            flags[f"hidden_{i}"] = True
    elif strategy.variant == "all":
        for n in names:
            if n != "featurizer":
                flags[n] = True
    elif strategy.variant == "head_recurrent":
        if "recurrent" not in names:
            raise ValueError("head_recurrent strategy needs a model with recurrent_width > 0")
        flags["recurrent"] = True
    return FreezeMask(tuple(flags[n] for n in names))


def _act(name: str, x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) if name == "relu" else np.tanh(x)


def forward_activations(model: Model, x: np.ndarray) -> list:
    """All layer activations, A0 = featurized input ... A_L, then logits.

    Rows of `x` are independent unless the model has a recurrent layer, in
    which case rows are treated as time steps of one sequence.

    Returns [A0, A1, ..., A_L, logits]. A0 is the (frozen) featurizer
    projection of the raw features.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.featurizer.dim:
        raise ValueError(
            f"expected input of shape (n, {model.spec.featurizer.dim}), got {x.shape}"
        )
    acts = [x @ model.group("featurizer").arrays[0]]
    for i, (_w, actname) in enumerate(model.spec.hidden, start=1):
        W, b = model.group(f"hidden_{i}").arrays
        acts.append(_act(actname, acts[-1] @ W + b))
    if model.spec.recurrent_width > 0:
        Wx, Wh, b = model.group("recurrent").arrays
        h = np.zeros(model.spec.recurrent_width)
        states = np.empty((acts[-1].shape[0], model.spec.recurrent_width))
        for t in range(acts[-1].shape[0]):
            h = np.tanh(acts[-1][t] @ Wx + h @ Wh + b)
            states[t] = h
        acts.append(states)
    Wo, bo = model.group("output").arrays
    acts.append(acts[-1] @ Wo + bo)
    return acts


def forward(model: Model, x: np.ndarray) -> np.ndarray:
    """Class scores per row (per token for tagging, per document otherwise)."""
    return forward_activations(model, x)[-1]


def predict(model: Model, x: np.ndarray) -> np.ndarray:
    """Argmax predictions; ties break to the lowest class index."""
    return np.argmax(forward(model, x), axis=1)


# --- flat parameter views over trainable groups ---

def flatten_trainable(model: Model, mask: FreezeMask) -> np.ndarray:
    parts = []
    for i in mask.trainable_indices(model):
        parts.extend(a.ravel() for a in model.groups[i].arrays)
    if not parts:
        raise ValueError("no trainable parameter group under this mask")
    return np.concatenate(parts)


def unflatten_trainable(model: Model, mask: FreezeMask, theta: np.ndarray) -> None:
    """Write a flat trainable vector back into the model's arrays, in place."""
    pos = 0
    for i in mask.trainable_indices(model):
        for a in model.groups[i].arrays:
            a[...] = theta[pos:pos + a.size].reshape(a.shape)
            pos += a.size
    if pos != theta.size:
        raise ValueError(f"flat vector has {theta.size} entries, expected {pos}")


# --- checkpoints: JSON header + raw little-endian float64 groups ---

def save_model(model: Model, path: str) -> None:
    header = {
        "featurizer": {
            "kind": model.spec.featurizer.kind,
            "dim": model.spec.featurizer.dim,
            "window": model.spec.featurizer.window,
        },
        "hidden": list(list(h) for h in model.spec.hidden),
        "classes": model.spec.classes,
        "task": model.spec.task,
        "recurrent_width": model.spec.recurrent_width,
        "groups": [
            {"name": g.name, "shapes": [list(a.shape) for a in g.arrays]}
            for g in model.groups
        ],
    }
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for g in model.groups:
            for a in g.arrays:
                f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path: str) -> Model:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a dpdesk checkpoint")
        header = json.loads(f.readline().decode())
        spec = ModelSpec(
            featurizer=FeaturizerSpec(**header["featurizer"]),
            hidden=tuple((int(w), a) for w, a in header["hidden"]),
            classes=header["classes"],
            task=header["task"],
            recurrent_width=header["recurrent_width"],
        )
        groups = []
        for g in header["groups"]:
            arrays = []
            for shape in g["shapes"]:
                n = int(np.prod(shape))
                buf = f.read(8 * n)
                if len(buf) != 8 * n:
                    raise ValueError(f"{path}: truncated checkpoint")
                arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
            groups.append(ParamGroup(g["name"], arrays))
    return Model(spec, groups)
