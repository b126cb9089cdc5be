"""Experiment runner: wires data -> model -> DP-SGD -> accountant -> metrics.

Every run is reproducible from (config, seed): data generation, splits,
initialization, lot sampling and noise all derive from the master seed.
Private runs calibrate sigma for the target epsilon up front and re-verify
the realized epsilon post hoc.
"""

from __future__ import annotations

import csv
import io
import math
import os

import numpy as np

from . import data as datamod
from .accountant import calibrate_sigma, epsilon_for
from .backend import BACKEND_NAME
from .config import ExperimentConfig
from .dpsgd import OptimizerConfig, PrivacyParams, train
from .metrics import collapse_gap, confusion, report
from .models import (FeaturizerSpec, Model, ModelSpec, TrainStrategy, build,
                     forward, predict, save_model)
from .records import append_record, config_digest, load_records
from .rng import Rng
from .svg import privacy_curve_chart

EPS_VERIFY_RTOL = 1e-3  # realized epsilon must match the target this closely


# Tuned so that non-private training handles the rare tags while an
# epsilon = 1 run at the same settings drops them: a wide head means the
# calibrated noise swamps the small per-lot signal the minority classes
# contribute after clipping.
COLLAPSE_PRESET = {
    "task": "conll_like",
    "size": "10000",
    "feature_dim": "128",
    "separation": "6.0",
    "seq_len": "20",
    "window": "0",
    "hidden": "",
    "strategy": "head",
    "lot_size": "25",
    "epochs": "40",
    "lr": "0.1",
}


def collapse_preset(seed: int, epsilon: str = "inf") -> ExperimentConfig:
    """The stock imbalance demo configuration at a given seed and budget."""
    return ExperimentConfig.from_dict(
        dict(COLLAPSE_PRESET, seed=str(seed), epsilon=epsilon))


def resolve_out_dir(config: ExperimentConfig) -> str:
    root = os.environ.get("DPDESK_OUT_ROOT", "")
    return os.path.join(root, config.out_dir) if root else config.out_dir


def build_corpus(config: ExperimentConfig) -> datamod.LabeledCorpus:
    seed = Rng(config.seed).spawn("data").seed
    task = config.task
    if task == "conll_like":
        return datamod.gen_skewed_tagging(
            datamod.conll_like_spec(config.size, seed), config.feature_dim,
            separation=config.separation, seq_len=config.seq_len,
            label_names=datamod.CONLL_LIKE_LABELS,
        )
    if task == "balanced_classification":
        probs = (1.0 / config.classes,) * config.classes
        spec = datamod.SkewSpec(probs, config.size, seed)
        return datamod.gen_skewed_classification(spec, config.feature_dim,
                                                 separation=config.separation)
    if task == "skewed_classification":
        spec = datamod.SkewSpec(config.class_probs, config.size, seed)
        return datamod.gen_skewed_classification(spec, config.feature_dim,
                                                 separation=config.separation)
    if task == "conll":
        with open(config.train_path) as f:
            return datamod.parse_conll(f)
    if task == "csv":
        with open(config.train_path) as f:
            return datamod.parse_csv(f)
    raise ValueError(f"unknown task {task!r}")


def featurizer_for(config: ExperimentConfig, corpus) -> FeaturizerSpec:
    if corpus.task == "tagging":
        span = 2 * config.window + 1
        return FeaturizerSpec("window", config.feature_dim * span, config.window)
    return FeaturizerSpec("hashed_bow", config.feature_dim)


def model_spec_for(config: ExperimentConfig, corpus,
                   fspec: FeaturizerSpec) -> ModelSpec:
    strategy = TrainStrategy.parse(config.strategy)
    rec = config.recurrent_width
    if strategy.variant == "head_recurrent" and rec == 0:
        rec = 16
    return ModelSpec(
        featurizer=fspec,
        hidden=tuple((w, config.activation) for w in config.hidden),
        classes=len(corpus.label_vocab),
        task=corpus.task,
        recurrent_width=rec,
    )


def predict_data(model: Model, d: datamod.FeaturizedData) -> np.ndarray:
    if model.spec.recurrent_width > 0:
        preds = [
            np.argmax(forward(model, d.X[d.starts[i]:d.starts[i + 1]]), axis=1)
            for i in range(d.n)
        ]
        return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)
    return predict(model, d.X)


def _eval(model: Model, d: datamod.FeaturizedData) -> dict:
    cm = confusion(d.labels, predict_data(model, d), d.label_vocab)
    r = report(cm)
    return {"accuracy": r.accuracy, "macro_f1": r.macro_f1}, cm


def run(config: ExperimentConfig, persist: bool = True,
        save_checkpoint: bool = False):
    """Train one configuration and persist its RunRecord.

    Returns (record, trained model).
    """
    corpus = build_corpus(config)
    fspec = featurizer_for(config, corpus)
    full = datamod.featurize(corpus, fspec)
    root = Rng(config.seed)

    if config.test_path:
        train_data = full
        with open(config.test_path) as f:
            test_corpus = (datamod.parse_conll(f) if corpus.task == "tagging"
                           else datamod.parse_csv(f))
        eval_data = datamod.featurize(test_corpus, fspec)
    else:
        train_data, eval_data = datamod.train_eval_split(full, root.spawn("split"))

    spec = model_spec_for(config, corpus, fspec)
    model = build(spec, root.spawn("init"))
    strategy = TrainStrategy.parse(config.strategy)

    N = train_data.n
    L = min(config.lot_size, N)
    steps_per_epoch = math.ceil(N / L)
    T = config.epochs * steps_per_epoch
    eps = config.epsilon
    if math.isinf(eps):
        sigma, realized = 0.0, None
        privacy = PrivacyParams(math.inf, config.delta, config.clip, 0.0, L,
                                L / N, T)
    else:
        q = L / N
        sigma = calibrate_sigma(eps, config.delta, q, T)
        realized = epsilon_for(sigma, q, T, config.delta).epsilon
        if abs(realized - eps) / eps > EPS_VERIFY_RTOL:
            raise RuntimeError(
                f"calibrated sigma {sigma} realizes epsilon {realized}, "
                f"more than {EPS_VERIFY_RTOL:.0%} from target {eps}"
            )
        privacy = PrivacyParams(eps, config.delta, config.clip, sigma, L, q, T)

    opt = OptimizerConfig(config.lr, config.epochs, root.spawn("train").seed)

    def eval_fn(m):
        return _eval(m, eval_data)[0]

    trained, history = train(model, train_data, strategy, privacy, opt, eval_fn)
    final, cm = _eval(trained, eval_data)

    record = {
        "config": dict(config.flat),
        "config_digest": config_digest(config.flat),
        "seed": config.seed,
        "backend": BACKEND_NAME,
        "epochs": [
            {"epoch": h["epoch"], "loss": h["loss"],
             "accuracy": h["accuracy"], "macro_f1": h["macro_f1"]}
            for h in history
        ],
        "final": {**final, "collapse_gap": collapse_gap(cm)},
        "final_confusion": {"labels": cm.labels,
                            "counts": cm.counts.tolist()},
        "privacy": {
            "epsilon_target": config.flat["epsilon"],
            "delta": config.delta,
            "sigma": sigma,
            "q": privacy.sampling_rate,
            "lot_size": L,
            "steps": T,
            "realized_epsilon": realized,
        },
        "timing": {"epoch_times": [h["epoch_time"] for h in history]},
    }
    if persist:
        out_dir = resolve_out_dir(config)
        append_record(out_dir, record)
        if save_checkpoint:
            save_model(trained, os.path.join(
                out_dir, f"model-{record['config_digest'][:12]}-seed{config.seed}.ckpt"))
    return record, trained


def verify_records(records) -> list:
    """Post-hoc accountant check: recompute realized epsilon for every
    private record; returns a list of (record, ok, recomputed) tuples."""
    out = []
    for r in records:
        p = r["privacy"]
        if p["realized_epsilon"] is None:
            continue
        eps = epsilon_for(p["sigma"], p["q"], p["steps"], p["delta"]).epsilon
        target = float(p["epsilon_target"])
        out.append((r, abs(eps - target) / target <= EPS_VERIFY_RTOL, eps))
    return out


def sweep_lr(config: ExperimentConfig, grid=None, persist: bool = True) -> dict:
    """Grid-search the learning rate per privacy level.

    The full grid is searched at epsilon = 1 and epsilon = inf; other finite
    budgets reuse the epsilon = 1 winner. Best is by held-out macro-F1 with
    ties going to the larger rate.
    """
    grid = tuple(grid) if grid is not None else config.lr_grid
    if not grid:
        raise ValueError("empty learning-rate grid")
    eps_levels = config.eps_list
    results = {}

    def sweep_one(eps_text):
        rows = []
        for lr in sorted(grid, reverse=True):  # ties -> larger rate wins
            rec, _ = run(config.override(epsilon=eps_text, lr=repr(lr)),
                         persist=persist)
            rows.append((lr, rec))
        best_lr, best_rec = max(rows, key=lambda r: r[1]["final"]["macro_f1"])
        return {"lr": best_lr, "record": best_rec,
                "table": [(lr, r["final"]["macro_f1"]) for lr, r in rows]}

    searched = {}
    for eps in eps_levels:
        if math.isinf(eps):
            searched["inf"] = sweep_one("inf")
        elif eps == 1.0:
            searched["1"] = sweep_one("1")
    if any(not math.isinf(e) and e != 1.0 for e in eps_levels) and "1" not in searched:
        searched["1"] = sweep_one("1")

    for eps in eps_levels:
        key = "inf" if math.isinf(eps) else f"{eps:g}"
        if key in searched:
            results[key] = searched[key]
        else:
            lr = searched["1"]["lr"]
            rec, _ = run(config.override(epsilon=key, lr=repr(lr)),
                         persist=persist)
            results[key] = {"lr": lr, "record": rec,
                            "table": [(lr, rec["final"]["macro_f1"])]}

    if persist:
        out_dir = resolve_out_dir(config)
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epsilon", "lr", "macro_f1", "best"])
            for key, res in results.items():
                for lr, f1 in res["table"]:
                    w.writerow([key, lr, f1, int(lr == res["lr"])])
    return results


def privacy_curve(config: ExperimentConfig, eps_list=None,
                  persist: bool = True):
    """Macro-F1 vs epsilon for every strategy listed in the config.

    Emits curve.csv and a self-contained curve.svg; returns the table rows.
    """
    eps_list = tuple(eps_list) if eps_list is not None else config.eps_list
    strategies = [s.strip() for s in config.strategy.split(",") if s.strip()]
    series = {}
    rows = []
    for strat in strategies:
        for eps in eps_list:
            eps_text = "inf" if math.isinf(eps) else f"{eps:g}"
            rec, _ = run(config.override(strategy=strat, epsilon=eps_text),
                         persist=persist)
            f1 = rec["final"]["macro_f1"]
            series.setdefault(strat, []).append((eps, f1))
            rows.append({"strategy": strat, "epsilon": eps_text, "macro_f1": f1,
                         "accuracy": rec["final"]["accuracy"]})
    chart = privacy_curve_chart(series, eps_list)
    if persist:
        out_dir = resolve_out_dir(config)
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "curve.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["strategy", "epsilon", "macro_f1", "accuracy"])
            for r in rows:
                w.writerow([r["strategy"], r["epsilon"], r["macro_f1"],
                            r["accuracy"]])
        with open(os.path.join(out_dir, "curve.svg"), "w") as f:
            f.write(chart)
    return rows, chart


def _pair_key(record: dict) -> str:
    cfg = {k: v for k, v in record["config"].items() if k != "epsilon"}
    return config_digest(cfg) + f"-seed{record['seed']}"


def timing_report(records):
    """Mean epoch time per config and the DP-minus-non-DP difference.

    Returns (rows, unpaired) where unpaired lists records lacking a partner
    (excluded from differences).
    """
    groups = {}
    for r in records:
        groups.setdefault(_pair_key(r), []).append(r)
    rows, unpaired = [], []
    for key, rs in sorted(groups.items()):
        dp = [r for r in rs if r["privacy"]["realized_epsilon"] is not None]
        ndp = [r for r in rs if r["privacy"]["realized_epsilon"] is None]
        if not dp or not ndp:
            unpaired.extend(rs)
            continue
        dp_t = float(np.mean([t for r in dp for t in r["timing"]["epoch_times"]]))
        ndp_t = float(np.mean([t for r in ndp for t in r["timing"]["epoch_times"]]))
        rows.append({
            "key": key,
            "strategy": rs[0]["config"]["strategy"],
            "seed": rs[0]["seed"],
            "dp_mean_epoch_time": dp_t,
            "nondp_mean_epoch_time": ndp_t,
            "difference": dp_t - ndp_t,
        })
    return rows, unpaired


def summarize(out_dir: str) -> str:
    """Text summary of a results directory: final metrics, post-hoc epsilon
    verification and the timing table."""
    records = load_records(out_dir)
    buf = io.StringIO()
    buf.write(f"{len(records)} records in {out_dir}\n\n")
    buf.write(f"{'eps':>8} {'strategy':>16} {'seed':>6} {'lr':>10} "
              f"{'acc':>8} {'macroF1':>8} {'gap':>8}\n")
    for r in records:
        f = r["final"]
        buf.write(f"{r['privacy']['epsilon_target']:>8} "
                  f"{r['config']['strategy']:>16} {r['seed']:>6} "
                  f"{float(r['config']['lr']):>10g} "
                  f"{f['accuracy']:>8.4f} {f['macro_f1']:>8.4f} "
                  f"{f['collapse_gap']:>8.4f}\n")
    checks = verify_records(records)
    if checks:
        bad = [c for c in checks if not c[1]]
        buf.write(f"\nepsilon verification: {len(checks) - len(bad)}/{len(checks)} "
                  f"private records within {EPS_VERIFY_RTOL:.1%} of target\n")
    rows, unpaired = timing_report(records)
    if rows:
        buf.write("\ntiming (seconds per epoch):\n")
        for row in rows:
            buf.write(f"  {row['strategy']:>16} seed {row['seed']}: "
                      f"dp {row['dp_mean_epoch_time']:.3f} "
                      f"non-dp {row['nondp_mean_epoch_time']:.3f} "
                      f"diff {row['difference']:+.3f}\n")
    if unpaired:
        buf.write(f"\nwarning: {len(unpaired)} records lack a DP/non-DP partner "
                  f"and were excluded from timing differences\n")
    return buf.getvalue()
