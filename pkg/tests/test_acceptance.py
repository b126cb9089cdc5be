"""Acceptance suite: property checks plus desk-scale phenomenon reproduction.

Each criterion prints one PASS/FAIL line (criterion 10 emits informational
trend lines and never hard-fails). Tolerances are pinned in the assertions.
"""

import math

import numpy as np

from dpdesk import harness
from dpdesk.accountant import (calibrate_sigma, epsilon_for, rdp_step,
                               to_epsilon)
from dpdesk.config import ExperimentConfig
from dpdesk.dpsgd import (OptimizerConfig, PrivacyParams, clip,
                          noisy_aggregate, train)
from dpdesk.grads import per_example_grads
from dpdesk.metrics import ConfusionMatrix, report
from dpdesk.models import (FeaturizerSpec, ModelSpec, TrainStrategy,
                           apply_strategy, build, flatten_trainable,
                           unflatten_trainable)
from dpdesk.records import canonical_bytes
from dpdesk.rng import Rng, gaussian, l2_norm


# One line per criterion; echoed after the run by the conftest summary hook
# so the lines survive output capture.
STATUS_LINES = []


def _status(line):
    STATUS_LINES.append(line)
    print(line, flush=True)


def _passfail(ok):
    return "PASS" if ok else "FAIL"


# --- criterion 1: gradient correctness ------------------------------------

def _fd_worst(model, strategy, X, labels, starts, n_entries, h=1e-6):
    mask = apply_strategy(model, strategy)
    G, _ = per_example_grads(model, mask, X, labels, starts)
    analytic = G.mean(axis=0)
    theta = flatten_trainable(model, mask)
    probe = Rng(777)
    idx = np.unique((probe.uniform(n_entries * 4) * theta.size).astype(int))[:n_entries]

    def mean_loss(t):
        m = model.copy()
        unflatten_trainable(m, mask, t)
        _, losses = per_example_grads(m, mask, X, labels, starts)
        return float(losses.mean())

    worst = 0.0
    for j in idx:
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        numeric = (mean_loss(tp) - mean_loss(tm)) / (2 * h)
        worst = max(worst, abs(analytic[j] - numeric) / max(abs(analytic[j]), 1e-8))
    return worst, len(idx)


def test_criterion_1_gradient_correctness():
    rng = Rng(301)
    cases = []

    spec = ModelSpec(FeaturizerSpec("hashed_bow", 12),
                     hidden=((11, "tanh"), (12, "relu")), classes=10)
    model = build(spec, rng.spawn("a"))
    X = gaussian(rng.spawn("ax"), 1.0, (10, 12))
    labels = (rng.spawn("ay").uniform(10) * 10).astype(np.int64)
    starts = np.arange(11, dtype=np.int64)
    cases.append(("hidden tanh/relu + output",
                  _fd_worst(model, TrainStrategy("all"), X, labels, starts, 120)))
    cases.append(("output only",
                  _fd_worst(model, TrainStrategy("head"), X, labels, starts, 100)))

    spec = ModelSpec(FeaturizerSpec("window", 8), classes=3, task="tagging",
                     recurrent_width=10)
    model = build(spec, rng.spawn("b"))
    X = gaussian(rng.spawn("bx"), 1.0, (12, 8))
    labels = (rng.spawn("by").uniform(12) * 3).astype(np.int64)
    starts = np.array([0, 5, 9, 12], dtype=np.int64)
    cases.append(("recurrent + output",
                  _fd_worst(model, TrainStrategy("head_recurrent"),
                            X, labels, starts, 100)))

    worst = max(w for _, (w, _) in cases)
    checked = sum(n for _, (_, n) in cases)
    ok = worst < 1e-5 and all(n >= 100 for _, (_, n) in cases)
    _status(f"[criterion 1] {_passfail(ok)} gradient finite differences: "
            f"worst rel err {worst:.2e} over {checked} entries (limit 1e-5)")
    assert ok


# --- criterion 2: clipping invariant ---------------------------------------

def test_criterion_2_clipping_invariant():
    rng = Rng(302)
    violations = 0
    for _ in range(10**4):
        dim = 1 + int(rng.uniform(1)[0] * 30)
        g = gaussian(rng, 2.0, dim)
        c = float(rng.uniform(1)[0] * 10) + 1e-9
        out = clip(g, c)
        if l2_norm(out) > c + 1e-12:
            violations += 1
        gnorm = l2_norm(g)
        if gnorm <= c and not np.array_equal(out, g):
            violations += 1
        if gnorm > c > 0:
            cos = float(out @ g) / (l2_norm(out) * gnorm)
            if abs(cos - 1.0) > 1e-12:
                violations += 1
    ok = violations == 0
    _status(f"[criterion 2] {_passfail(ok)} clipping invariant: "
            f"{violations} violations over 10^4 fuzzed (g, C) pairs")
    assert ok


# --- criterion 3: noise contract -------------------------------------------

def test_criterion_3_noise_contract():
    worst = 0.0
    for seed, (sigma, c, L) in enumerate([(1.0, 1.0, 1), (2.0, 3.0, 10),
                                          (0.7, 2.5, 32)]):
        out = noisy_aggregate([np.zeros(10**5)], sigma, c, L, Rng(400 + seed))
        want = (sigma * c / L) ** 2
        worst = max(worst, abs(float(np.var(out)) - want) / want)
    grads = [gaussian(Rng(5), 1.0, 20) for _ in range(8)]
    clipped = [clip(g, 1.0) for g in grads]
    exact = np.max(np.abs(noisy_aggregate(clipped, 0.0, 1.0, 8, Rng(0))
                          - np.mean(clipped, axis=0)))
    ok = worst < 0.05 and exact == 0.0
    _status(f"[criterion 3] {_passfail(ok)} noise contract: worst variance "
            f"rel err {worst:.3f} over 10^5 draws x 3 triples (limit 0.05); "
            f"sigma=0 max deviation {exact:.1e}")
    assert ok


# --- criterion 4: DP-SGD degeneration ---------------------------------------

def test_criterion_4_degeneration():
    rng = Rng(304)
    from dpdesk.data import FeaturizedData
    n = 60
    X = gaussian(rng, 1.0, (n, 8))
    labels = (rng.uniform(n) * 2).astype(np.int64)
    X[:, 0] += np.where(labels == 0, -3.0, 3.0)
    data = FeaturizedData(X, labels, np.arange(n + 1, dtype=np.int64),
                          ["a", "b"], "classification")
    spec = ModelSpec(FeaturizerSpec("hashed_bow", 8), hidden=((5, "tanh"),),
                     classes=2)
    model = build(spec, rng.spawn("init"))
    strat = TrainStrategy("all")
    mask = apply_strategy(model, strat)
    privacy = PrivacyParams(math.inf, 1e-5, 1e9, 0.0, n, 1.0, 100)
    opt = OptimizerConfig(0.05, 100, seed=17)
    dp_model, _ = train(model, data, strat, privacy, opt, use_dp_path=True)
    sgd_model, _ = train(model, data, strat, privacy, opt, use_dp_path=False)
    diff = float(np.max(np.abs(flatten_trainable(dp_model, mask)
                               - flatten_trainable(sgd_model, mask))))
    ok = diff < 1e-10
    _status(f"[criterion 4] {_passfail(ok)} DP-SGD degeneration: max "
            f"trajectory deviation {diff:.1e} over 100 steps (limit 1e-10)")
    assert ok


# --- criterion 5: accountant correctness ------------------------------------

def _oracle_rdp(q, sigma, alpha, points=400001, span=25.0):
    """Independent quadrature oracle (direct Renyi-divergence definition)."""
    xs = np.linspace(-span * sigma, 1.0 + span * sigma, points)
    log_norm = -0.5 * math.log(2.0 * math.pi) - math.log(sigma)
    log_mu0 = -(xs ** 2) / (2.0 * sigma ** 2) + log_norm
    log_mu1 = -((xs - 1.0) ** 2) / (2.0 * sigma ** 2) + log_norm
    log_nu = np.logaddexp(math.log1p(-q) + log_mu0, math.log(q) + log_mu1)
    li = alpha * log_nu - (alpha - 1.0) * log_mu0
    m = li.max()
    return (m + math.log(np.trapezoid(np.exp(li - m), xs))) / (alpha - 1.0)


def test_criterion_5_accountant_correctness():
    # analytic Gaussian-mechanism anchor at q = 1
    worst_q1 = 0.0
    curve = rdp_step(1.0, 2.3)
    for a, v in zip(curve.orders, curve.values):
        want = a / (2.0 * 2.3 ** 2)
        worst_q1 = max(worst_q1, abs(v - want) / want)

    # subsampled configs vs the quadrature oracle
    worst_sub = 0.0
    for q, sigma in [(0.01, 1.0), (0.05, 2.0), (0.2, 0.8)]:
        c = rdp_step(q, sigma, orders=(2.0, 3.5, 16.0))
        for a, v in zip(c.orders, c.values):
            worst_sub = max(worst_sub, abs(v - _oracle_rdp(q, sigma, a))
                            / _oracle_rdp(q, sigma, a))

    # monotonicity in sigma, T, q, delta plus subadditivity, 10^3 fuzzed configs
    rng = np.random.Generator(np.random.PCG64(305))
    mono_bad = sub_bad = 0
    for i in range(1000):
        q = float(rng.uniform(0.001, 0.5))
        sigma = float(rng.uniform(0.5, 5.0))
        T = int(rng.integers(2, 5000))
        delta = float(10.0 ** rng.uniform(-8, -3))
        c = rdp_step(q, sigma)
        eps = to_epsilon(c, T, delta).epsilon
        t1 = int(rng.integers(1, T))
        if eps > (to_epsilon(c, t1, delta).epsilon
                  + to_epsilon(c, T - t1, delta).epsilon) + 1e-9:
            sub_bad += 1
        kind = i % 4
        if kind == 0:
            if epsilon_for(sigma * 1.25, q, T, delta).epsilon >= eps:
                mono_bad += 1
        elif kind == 1:
            q2 = min(1.0, q * 1.5)
            if to_epsilon(rdp_step(q2, sigma), T, delta).epsilon <= eps:
                mono_bad += 1
        elif kind == 2:
            if to_epsilon(c, T + max(1, T // 4), delta).epsilon <= eps:
                mono_bad += 1
        else:
            if to_epsilon(c, T, delta / 10.0).epsilon <= eps:
                mono_bad += 1

    ok = worst_q1 < 1e-6 and worst_sub < 0.02 and mono_bad == 0 and sub_bad == 0
    _status(f"[criterion 5] {_passfail(ok)} accountant: q=1 rel err "
            f"{worst_q1:.1e} (limit 1e-6), oracle rel err {worst_sub:.1e} "
            f"(limit 0.02), monotonicity violations {mono_bad}, "
            f"subadditivity violations {sub_bad} over 10^3 configs")
    assert ok


# --- criterion 6: calibration round-trip ------------------------------------

def test_criterion_6_calibration_round_trip():
    worst = 0.0
    overshoot = 0
    for q, T in [(0.01, 500), (0.05, 2000), (0.002, 10000)]:
        for target in (1.0, 2.0, 5.0):
            sigma = calibrate_sigma(target, 1e-5, q, T)
            realized = epsilon_for(sigma, q, T, 1e-5).epsilon
            worst = max(worst, abs(realized - target) / target)
            if realized > target:
                overshoot += 1
    ok = worst <= 1e-3 and overshoot == 0
    _status(f"[criterion 6] {_passfail(ok)} calibration round-trip: worst "
            f"rel err {worst:.1e} (limit 1e-3), {overshoot} budget overshoots "
            f"across 9 (eps, q, T) settings")
    assert ok


# --- criterion 7: metric oracle equivalence ---------------------------------

def test_criterion_7_metric_oracle_equivalence():
    from test_metrics import (NER_DP_COLLAPSE, SENTIMENT_COLLAPSE,
                              oracle_report)
    exact = True
    for cm in (SENTIMENT_COLLAPSE, NER_DP_COLLAPSE):
        r = report(cm)
        acc, f1s, macro = oracle_report(cm.counts)
        exact &= (r.accuracy == acc and r.macro_f1 == macro
                  and np.array_equal(r.per_class_f1, f1s))
    ner = report(NER_DP_COLLAPSE)
    direction = ner.accuracy >= 0.80 and ner.macro_f1 <= 0.25
    ok = exact and direction
    _status(f"[criterion 7] {_passfail(ok)} metric oracle: exact match "
            f"{exact}; published DP tagging matrix accuracy "
            f"{ner.accuracy:.4f} (>= 0.80), macro-F1 {ner.macro_f1:.4f} "
            f"(<= 0.25)")
    assert ok


# --- criterion 8: collapse reproduction at desk scale -----------------------

def test_criterion_8_collapse_reproduction(tmp_path):
    np_f1, dp_f1, dp_acc = [], [], []
    for seed in range(1, 6):
        cfg = harness.collapse_preset(seed).override(
            out_dir=str(tmp_path / "runs"))
        r_np, _ = harness.run(cfg, persist=False)
        r_dp, _ = harness.run(cfg.override(epsilon="1"), persist=False)
        np_f1.append(r_np["final"]["macro_f1"])
        dp_f1.append(r_dp["final"]["macro_f1"])
        dp_acc.append(r_dp["final"]["accuracy"])
    m_np, m_f1, m_acc = (float(np.median(v)) for v in (np_f1, dp_f1, dp_acc))
    ok = m_np >= 0.7 and m_acc >= 0.75 and m_f1 <= 0.4
    _status(f"[criterion 8] {_passfail(ok)} collapse reproduction (median "
            f"of 5 seeds): non-private macro-F1 {m_np:.3f} (>= 0.7); eps=1 "
            f"accuracy {m_acc:.3f} (>= 0.75), macro-F1 {m_f1:.3f} (<= 0.4)")
    assert ok


# --- criterion 9: determinism ------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "task": "skewed_classification", "class_probs": "0.8,0.15,0.05",
        "size": "400", "feature_dim": "8", "separation": "4.0",
        "strategy": "head", "epsilon": "2", "lot_size": "40", "epochs": "3",
        "lr": "0.05", "seed": "11", "out_dir": str(tmp_path / "a"),
    })
    r1, _ = harness.run(cfg)
    r2, _ = harness.run(cfg)
    r3, _ = harness.run(cfg.override(epsilon="inf"), persist=False)
    r4, _ = harness.run(cfg.override(epsilon="inf"), persist=False)
    ok = (canonical_bytes(r1) == canonical_bytes(r2)
          and canonical_bytes(r3) == canonical_bytes(r4))
    _status(f"[criterion 9] {_passfail(ok)} determinism: repeated private "
            f"and non-private runs produce byte-identical run records")
    assert ok


# --- criterion 10: soft trend reports (informational, never hard-fail) ------

def test_criterion_10_soft_trends(tmp_path):
    seeds = range(1, 6)

    # (a) DP-optimal learning rate vs non-private optimal
    dp_lrs, np_lrs = [], []
    for s in seeds:
        cfg = ExperimentConfig.from_dict({
            "task": "balanced_classification", "size": "400",
            "feature_dim": "8", "separation": "3.0", "strategy": "head",
            "lot_size": "40", "epochs": "4", "seed": str(s),
            "eps_list": "1,inf", "lr_grid": "0.1,0.01,0.001",
            "out_dir": str(tmp_path / "sweep"),
        })
        res = harness.sweep_lr(cfg, persist=False)
        dp_lrs.append(res["1"]["lr"])
        np_lrs.append(res["inf"]["lr"])
    lr_ok = float(np.median(dp_lrs)) >= float(np.median(np_lrs))
    _status(f"[criterion 10a] {_passfail(lr_ok)}-INFO DP-optimal lr "
            f"{float(np.median(dp_lrs)):g} >= non-private optimal "
            f"{float(np.median(np_lrs)):g} (median of 5 seeds)")

    # (b) DP epoch time exceeds non-DP and grows with trainable parameters
    diffs = {"head": [], "all": []}
    slower = 0
    for s in seeds:
        for strat in ("head", "all"):
            cfg = ExperimentConfig.from_dict({
                "task": "balanced_classification", "size": "3000",
                "feature_dim": "32", "separation": "3.0",
                "hidden": "32,32", "strategy": strat, "lot_size": "50",
                "epochs": "3", "lr": "0.05", "seed": str(s),
                "out_dir": str(tmp_path / "timing"),
            })
            r_dp, _ = harness.run(cfg.override(epsilon="2"), persist=False)
            r_np, _ = harness.run(cfg, persist=False)
            t_dp = float(np.mean(r_dp["timing"]["epoch_times"]))
            t_np = float(np.mean(r_np["timing"]["epoch_times"]))
            diffs[strat].append(t_dp - t_np)
            slower += t_dp > t_np
    grow_ok = float(np.median(diffs["all"])) > float(np.median(diffs["head"]))
    time_ok = slower == 2 * len(list(seeds))
    _status(f"[criterion 10b] {_passfail(time_ok and grow_ok)}-INFO DP "
            f"slower in {slower}/10 runs; median epoch-time overhead head "
            f"{float(np.median(diffs['head'])):.4f}s vs all "
            f"{float(np.median(diffs['all'])):.4f}s")

    # (c) non-private macro-F1 non-decreasing with more trainable layers
    f1s = {"head": [], "last1": [], "all": []}
    for s in seeds:
        for strat in ("head", "last1", "all"):
            cfg = ExperimentConfig.from_dict({
                "task": "skewed_classification",
                "class_probs": "0.7,0.2,0.1", "size": "600",
                "feature_dim": "16", "separation": "3.0",
                "hidden": "16,16", "strategy": strat, "lot_size": "50",
                "epochs": "8", "lr": "0.1", "seed": str(s),
                "out_dir": str(tmp_path / "layers"),
            })
            rec, _ = harness.run(cfg, persist=False)
            f1s[strat].append(rec["final"]["macro_f1"])
    med = {k: float(np.median(v)) for k, v in f1s.items()}
    layer_ok = med["head"] <= med["last1"] + 1e-9 and \
        med["last1"] <= med["all"] + 1e-9
    _status(f"[criterion 10c] {_passfail(layer_ok)}-INFO non-private "
            f"macro-F1 by trainable depth: head {med['head']:.3f}, last1 "
            f"{med['last1']:.3f}, all {med['all']:.3f} (median of 5 seeds)")
