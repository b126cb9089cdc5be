"""Dataset ingestion and synthetic skewed corpus generation.

Corpora hold either string tokens (real data, hashed at featurization time)
or precomputed feature rows (synthetic data drawn from class-conditional
Gaussian clusters). The "conll-like" preset reproduces the tag skew of the
CoNLL'03 training split, where the outside tag accounts for about 83.6% of
all tokens.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .models import FeaturizerSpec
from .rng import Rng, gaussian

# CoNLL'03 training-split tag counts. The published test-column counts are
# anomalous for B-* tags (several are zero), so presets use the train column.
CONLL_TRAIN_TAG_COUNTS = {
    "O": 170524,
    "I-LOC": 1157,
    "B-PER": 6600,
    "I-PER": 4528,
    "I-ORG": 3704,
    "I-MISC": 1155,
    "B-MISC": 3438,
    "B-LOC": 7140,
    "B-ORG": 6321,
}


class ParseError(ValueError):
    pass


@dataclass
class LabeledCorpus:
    task: str  # "classification" | "tagging"
    examples: list  # [(tokens, label(s))]; tokens: list[str] or float array
    label_vocab: list

    def __post_init__(self):
        k = len(self.label_vocab)
        for tokens, labels in self.examples:
            if self.task == "tagging":
                if len(labels) != len(tokens):
                    raise ValueError("tagging needs one label per token")
                if any(not 0 <= l < k for l in labels):
                    raise ValueError("label index out of vocab range")
            elif not 0 <= labels < k:
                raise ValueError("label index out of vocab range")

    def label_counts(self) -> np.ndarray:
        counts = np.zeros(len(self.label_vocab), dtype=np.int64)
        for _tokens, labels in self.examples:
            if self.task == "tagging":
                np.add.at(counts, np.asarray(labels, dtype=np.int64), 1)
            else:
                counts[labels] += 1
        return counts


@dataclass(frozen=True)
class SkewSpec:
    class_probabilities: tuple
    size: int
    seed: int

    def __post_init__(self):
        p = np.asarray(self.class_probabilities, dtype=np.float64)
        if abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
            raise ValueError("class probabilities must be a simplex vector")
        if self.size <= 0:
            raise ValueError("size must be positive")


# --- CoNLL column format ---

def parse_conll(source) -> LabeledCorpus:
    """Parse whitespace-separated column data: token first, tag last.

    One or more blank lines separate sentences; -DOCSTART- lines are
    skipped. Column counts must be consistent within a sentence.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    sentences = []
    tokens, tags = [], []
    ncols = None
    vocab: dict = {}
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if line.startswith("-DOCSTART-"):
            continue
        if not line:
            if tokens:
                sentences.append((tokens, tags))
                tokens, tags = [], []
            ncols = None
            continue
        cols = line.split()
        if ncols is None:
            ncols = len(cols)
        elif len(cols) != ncols:
            raise ParseError(
                f"line {lineno}: expected {ncols} columns, got {len(cols)}"
            )
        tokens.append(cols[0])
        tag = cols[-1]
        if tag not in vocab:
            vocab[tag] = len(vocab)
        tags.append(tag)
    if tokens:
        sentences.append((tokens, tags))
    examples = [(toks, [vocab[t] for t in tgs]) for toks, tgs in sentences]
    return LabeledCorpus("tagging", examples, list(vocab))


def serialize_conll(corpus: LabeledCorpus) -> str:
    if corpus.task != "tagging":
        raise ValueError("only tagging corpora serialize to CoNLL format")
    blocks = []
    for tokens, labels in corpus.examples:
        if isinstance(tokens, np.ndarray):
            raise ValueError("feature-row corpora have no token text to serialize")
        blocks.append("\n".join(
            f"{tok} {corpus.label_vocab[l]}" for tok, l in zip(tokens, labels)
        ))
    return "\n\n".join(blocks) + "\n"


# --- labeled CSV (header row, last column = label) ---

def parse_csv(source) -> LabeledCorpus:
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        next(reader)  # header
    except StopIteration:
        return LabeledCorpus("classification", [], [])
    vocab: dict = {}
    examples = []
    for row in reader:
        if not row:
            continue
        label = row[-1]
        if label not in vocab:
            vocab[label] = len(vocab)
        tokens = [t for cell in row[:-1] for t in cell.split()]
        examples.append((tokens, vocab[label]))
    return LabeledCorpus("classification", examples, list(vocab))


def serialize_csv(corpus: LabeledCorpus) -> str:
    if corpus.task != "classification":
        raise ValueError("only classification corpora serialize to CSV")
    out = io.StringIO()
    w = csv.writer(out)
    w.writerow(["text", "label"])
    for tokens, label in corpus.examples:
        w.writerow([" ".join(tokens), corpus.label_vocab[label]])
    return out.getvalue()


# --- synthetic skewed corpora ---

def _class_means(k: int, dim: int, separation: float) -> np.ndarray:
    """Deterministic cluster means: scaled axis vectors at pairwise distance
    `separation` (requires dim >= k)."""
    if dim < k:
        raise ValueError(f"feature dim {dim} must be >= number of classes {k}")
    means = np.zeros((k, dim))
    means[np.arange(k), np.arange(k)] = separation / np.sqrt(2.0)
    return means


def gen_skewed_tagging(spec: SkewSpec, feature_dim: int, separation: float = 2.0,
                       seq_len: int = 20, label_names=None) -> LabeledCorpus:
    """Token sequences with class-conditional unit-variance Gaussian features.

    Labels are i.i.d. draws from the skew spec; tokens are grouped into
    sequences of `seq_len`. Deterministic per seed.
    """
    p = np.asarray(spec.class_probabilities)
    k = len(p)
    means = _class_means(k, feature_dim, separation)
    rng = Rng(spec.seed)
    labels = np.searchsorted(np.cumsum(p), rng.uniform(spec.size), side="right")
    labels = np.minimum(labels, k - 1).astype(np.int64)
    feats = means[labels] + gaussian(rng, 1.0, (spec.size, feature_dim))
    examples = []
    for s in range(0, spec.size, seq_len):
        e = min(s + seq_len, spec.size)
        examples.append((feats[s:e], labels[s:e].tolist()))
    vocab = list(label_names) if label_names is not None else [str(i) for i in range(k)]
    return LabeledCorpus("tagging", examples, vocab)


def gen_skewed_classification(spec: SkewSpec, feature_dim: int,
                              separation: float = 2.0,
                              label_names=None) -> LabeledCorpus:
    """One feature row per example, same cluster construction as tagging."""
    p = np.asarray(spec.class_probabilities)
    k = len(p)
    means = _class_means(k, feature_dim, separation)
    rng = Rng(spec.seed)
    labels = np.searchsorted(np.cumsum(p), rng.uniform(spec.size), side="right")
    labels = np.minimum(labels, k - 1).astype(np.int64)
    feats = means[labels] + gaussian(rng, 1.0, (spec.size, feature_dim))
    examples = [(feats[i:i + 1], int(labels[i])) for i in range(spec.size)]
    vocab = list(label_names) if label_names is not None else [str(i) for i in range(k)]
    return LabeledCorpus("classification", examples, vocab)


def conll_like_spec(size: int, seed: int) -> SkewSpec:
    """Skew spec proportional to the CoNLL'03 train tag counts."""
    counts = np.array(list(CONLL_TRAIN_TAG_COUNTS.values()), dtype=np.float64)
    return SkewSpec(tuple(counts / counts.sum()), size, seed)


CONLL_LIKE_LABELS = list(CONLL_TRAIN_TAG_COUNTS)


# --- featurization ---

@dataclass
class FeaturizedData:
    """Featurized corpus: all rows stacked plus example boundaries."""

    X: np.ndarray        # (rows, dim)
    labels: np.ndarray   # (rows,)
    starts: np.ndarray   # (n_examples + 1,)
    label_vocab: list = field(default_factory=list)
    task: str = "classification"

    @property
    def n(self) -> int:
        return len(self.starts) - 1

    def subset(self, idx) -> "FeaturizedData":
        idx = np.asarray(idx, dtype=np.int64)
        rows = np.concatenate(
            [np.arange(self.starts[i], self.starts[i + 1]) for i in idx]
        ) if len(idx) else np.empty(0, dtype=np.int64)
        counts = self.starts[idx + 1] - self.starts[idx]
        starts = np.concatenate([[0], np.cumsum(counts)])
        return FeaturizedData(self.X[rows], self.labels[rows], starts,
                              self.label_vocab, self.task)


def _hash_token(token: str, dim: int):
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    v = int.from_bytes(h, "little")
    return (v >> 1) % dim, 1.0 if v & 1 else -1.0


def hashed_bow_vector(tokens, dim: int) -> np.ndarray:
    """Signed feature hashing of a token multiset into `dim` buckets."""
    x = np.zeros(dim)
    for tok in tokens:
        i, sign = _hash_token(tok, dim)
        x[i] += sign
    n = np.linalg.norm(x)
    return x / n if n > 0 else x


def featurize(corpus: LabeledCorpus, featurizer: FeaturizerSpec) -> FeaturizedData:
    """Deterministic featurization into the model's input space.

    hashed_bow: one row per document. window: one row per token, the
    (2w+1)-token window of per-token base vectors concatenated; positions
    outside the sequence use an all-zero pad vector. Feature-row corpora
    pass through (their base dim must match the featurizer's base dim).
    """
    rows, labels, starts = [], [], [0]
    if featurizer.kind == "hashed_bow":
        if corpus.task != "classification":
            raise ValueError("hashed_bow featurizer expects a classification corpus")
        for tokens, label in corpus.examples:
            if isinstance(tokens, np.ndarray):
                if tokens.shape != (1, featurizer.dim):
                    raise ValueError(
                        f"feature row shape {tokens.shape} != (1, {featurizer.dim})"
                    )
                rows.append(tokens[0])
            else:
                rows.append(hashed_bow_vector(tokens, featurizer.dim))
            labels.append(label)
            starts.append(starts[-1] + 1)
    else:
        if corpus.task != "tagging":
            raise ValueError("window featurizer expects a tagging corpus")
        w = featurizer.window
        base = featurizer.base_dim
        for tokens, tags in corpus.examples:
            if isinstance(tokens, np.ndarray):
                if tokens.shape[1] != base:
                    raise ValueError(
                        f"feature rows have dim {tokens.shape[1]}, expected {base}"
                    )
                vecs = tokens
            else:
                vecs = np.stack([_one_hot_hashed(t, base) for t in tokens]) \
                    if tokens else np.zeros((0, base))
            nt = len(vecs)
            padded = np.vstack([np.zeros((w, base)), vecs, np.zeros((w, base))])
            for t in range(nt):
                rows.append(padded[t:t + 2 * w + 1].ravel())
            labels.extend(tags)
            starts.append(starts[-1] + nt)
    X = np.stack(rows) if rows else np.zeros((0, featurizer.dim))
    return FeaturizedData(X, np.asarray(labels, dtype=np.int64),
                          np.asarray(starts, dtype=np.int64),
                          list(corpus.label_vocab), corpus.task)


def _one_hot_hashed(token: str, dim: int) -> np.ndarray:
    x = np.zeros(dim)
    i, sign = _hash_token(token, dim)
    x[i] = sign
    return x


def train_eval_split(data: FeaturizedData, rng: Rng, eval_fraction: float = 0.2):
    """Deterministic held-out split by seeded shuffle of example indices."""
    perm = rng.permutation(data.n)
    n_eval = max(1, int(round(data.n * eval_fraction)))
    return data.subset(np.sort(perm[n_eval:])), data.subset(np.sort(perm[:n_eval]))
