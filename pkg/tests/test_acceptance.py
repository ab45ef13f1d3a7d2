"""Acceptance suite: one test per top-level criterion, each printing a single
PASS/FAIL line with the measured quantity at its stated tolerance.

The training criterion is the slow one (two full 5000-step runs); everything
else is seconds.  Run with `pytest -v -s tests/test_acceptance.py` to watch.
"""

import os
import time

import numpy as np
import pytest

from divkit.analysis import capture_features, effective_dimension_profile, pca_export
from divkit.checkpoint import checkpoint_checksum
from divkit.metrics import attention_contraction, diversity, diversity_oracle
from divkit.model import (ModelConfig, count_flops, init_params, model_forward,
                          param_count, siaf)
from divkit.sinkhorn import sinkhorn
from divkit.training import (CorpusDataset, TrainConfig, cross_entropy, grad_check,
                             load_model_checkpoint, train)
from divkit.verifier import BOUND_KINDS, collapse_demo, run_suite

VERIFY_TRIALS = 1000
TRAIN_STEPS = 5000


def report(ok: bool, line: str):
    # echoed in the run summary via the -rP addopt
    print(f"\n[{'PASS' if ok else 'FAIL'}] {line}")
    assert ok, line


@pytest.fixture(scope="module")
def theory_report():
    t0 = time.time()
    workers = min(os.cpu_count() or 1, 8)
    rep = run_suite(trials=VERIFY_TRIALS, base_seed=0, workers=workers)
    rep.elapsed = time.time() - t0
    return rep


def test_theorem_suite_1000_trials(theory_report):
    rep = theory_report
    n = len(rep.checks)
    ok = (n == VERIFY_TRIALS * len(BOUND_KINDS)
          and rep.failures == 0 and rep.inconclusive == 0
          and rep.elapsed < 600.0)
    report(ok, f"theorem suite: {n} checks across {len(BOUND_KINDS)} kinds, "
               f"{rep.failures} failures, {rep.inconclusive} inconclusive, "
               f"tolerance 1e-9 relative, {rep.elapsed:.1f}s (< 600s)")


def test_equality_checks(theory_report):
    concat = [c for c in theory_report.checks if c.kind == "LEMMA2_CONCAT_EQ"]
    worst_eq = max(abs(c.slack) / max(1.0, abs(c.rhs)) for c in concat)
    rng = np.random.default_rng(1)
    worst_oracle = 0.0
    for _ in range(1000):
        H = rng.standard_normal((int(rng.integers(2, 40)), int(rng.integers(2, 40))))
        H *= rng.uniform(0.1, 100.0)
        a, b = diversity(H), diversity_oracle(H)
        worst_oracle = max(worst_oracle, abs(a - b) / max(1.0, b))
    ok = worst_eq <= 1e-10 and worst_oracle <= 1e-10
    report(ok, f"equalities: concat relation worst {worst_eq:.2e}, "
               f"metric-oracle agreement worst {worst_oracle:.2e} (both <= 1e-10 relative)")


def test_perron_frobenius_sinkhorn():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(3, 33))
        A = sinkhorn(rng.uniform(0.01, 1.0, size=(n, n)), 50)
        r = attention_contraction(A)
        assert r.converged
        worst = max(worst, r.lambda_max)
    ok = worst < 1.0
    report(ok, f"doubly stochastic contraction: 1000 Sinkhorn-projected matrices, "
               f"max lambda {worst:.6f} < 1")


def test_collapse_and_prevention():
    dims = {"N": 16, "d": 16, "H": 4, "T": 1}
    van = collapse_demo("vanilla-MSA", 20, dims, seed=0)
    aug = collapse_demo("AugMSA", 20, dims, seed=0)
    r_van = van.measured[-1] / van.measured[0]
    r_aug = aug.measured[-1] / aug.measured[0]
    # the absolute floor absorbs float rounding noise once the true diversity
    # hits exact zero (attention becomes uniform, bound factor = 0)
    noise_floor = 1e-12 * van.measured[0]
    dominated = all(m <= b * (1 + 1e-9) + noise_floor
                    for m, b in zip(van.measured, van.bound))
    ok = (r_van < 1e-3 and dominated and r_aug >= 0.1
          and not van.truncated and not aug.truncated)
    report(ok, f"collapse demo: vanilla depth-20 ratio {r_van:.2e} < 1e-3, "
               f"bound dominates at all layers: {dominated}; "
               f"augmented-shortcut ratio {r_aug:.3f} >= 0.1")


def test_degeneracy_exact():
    cfg_v = ModelConfig(d_model=32, n_heads=4, n_layers=2, reduction_r=4,
                        max_seq_len=64, siaf_n=1, shortcut_T=0, block_style="vanilla")
    cfg_a = ModelConfig(**{**cfg_v.to_dict(), "block_style": "augmented"})
    params = init_params(cfg_v, seed=0)
    rng = np.random.default_rng(3)
    identical = 0
    for _ in range(100):
        tokens = rng.integers(0, 256, size=int(rng.integers(2, 64)))
        if np.array_equal(model_forward(tokens, params, cfg_v),
                          model_forward(tokens, params, cfg_a)):
            identical += 1
    x = rng.standard_normal((50, 50))
    from divkit.activations import act_forward
    siaf_exact = np.array_equal(siaf(x, [(1.0, 0.0, "gelu")]), act_forward("gelu", x))
    ok = identical == 100 and siaf_exact
    report(ok, f"degeneracy: shortcut-free augmented forward bit-identical to vanilla "
               f"on {identical}/100 inputs; single-branch series activation exact: {siaf_exact}")


def test_gradient_correctness():
    cfg = ModelConfig(d_model=64, n_heads=4, n_layers=2, reduction_r=8,
                      max_seq_len=16, siaf_n=2, shortcut_T=1, precision="f64")
    params = init_params(cfg, seed=4)
    tokens = np.random.default_rng(4).integers(0, 256, size=9)

    def loss_fn(p):
        return cross_entropy(model_forward(tokens[:-1], p, cfg), tokens[1:])

    t0 = time.time()
    rep = grad_check(params, loss_fn, coords_per_group=200, seed=0)
    ok = rep["passed"] and rep["max_rel_error"] < 1e-4
    report(ok, f"gradient check: {len(rep['groups'])} parameter groups, "
               f">=200 coords/group (or full tensor), max relative error "
               f"{rep['max_rel_error']:.2e} < 1e-4 ({time.time() - t0:.0f}s)")


def test_cost_model():
    n, d = 128, 128
    cfg32 = ModelConfig(d_model=d, n_heads=4, n_layers=2, reduction_r=32,
                        shortcut_T=1, max_seq_len=n)
    per = count_flops(cfg32, seq_len=n)["per_layer"]
    exact = (per["shortcut_dense_per_branch"] == n * d * d
             and per["shortcut_bottleneck_per_branch"] * 16 == n * d * d)
    enum_ok = True
    for kw in ({}, {"block_style": "vanilla", "shortcut_T": 0},
               {"d_model": 64, "n_heads": 8, "reduction_r": 16, "siaf_n": 3}):
        c = ModelConfig(**{**dict(d_model=32, n_heads=4, n_layers=2, reduction_r=4,
                                  shortcut_T=2), **kw})
        enum_ok &= param_count(c)["total"] == sum(v.size for v in init_params(c, 0).values())
    ok = exact and enum_ok
    report(ok, f"cost model: dense shortcut Nd^2 and r=32 bottleneck Nd^2/16 exact: {exact}; "
               f"parameter counts match shape enumeration: {enum_ok}")


def make_corpus(path, n_bytes=1_000_000, seed=123):
    """~1 MB of deterministic synthetic word-like text (low byte entropy)."""
    rng = np.random.default_rng(seed)
    words = ["the", "quick", "brown", "fox", "jumps", "over", "lazy", "dog",
             "feature", "diversity", "layer", "token", "shortcut", "series",
             "activation", "attention", "residual", "network"]
    probs = np.arange(len(words), 0, -1.0)
    probs /= probs.sum()
    parts = []
    size = 0
    while size < n_bytes:
        w = words[int(rng.choice(len(words), p=probs))]
        parts.append(w)
        size += len(w) + 1
    data = " ".join(parts).encode("ascii")[:n_bytes]
    path.write_bytes(data)
    return data


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    make_corpus(root / "corpus.txt")
    corpus = CorpusDataset.from_file(root / "corpus.txt")
    mcfg = ModelConfig(d_model=128, n_heads=4, n_layers=2, reduction_r=32,
                       max_seq_len=256, siaf_n=2, shortcut_T=1)
    tcfg = TrainConfig(total_steps=TRAIN_STEPS, warmup_steps=100, batch_size=1,
                       seq_len=256, seed=0, checkpoint_every=TRAIN_STEPS)
    t0 = time.time()
    r1 = train(mcfg, tcfg, corpus, root / "run1")
    r2 = train(mcfg, tcfg, corpus, root / "run2")
    elapsed = time.time() - t0
    return root, corpus, mcfg, tcfg, r1, r2, elapsed


def test_toy_training(toy_run):
    root, corpus, mcfg, tcfg, r1, r2, elapsed = toy_run
    init_loss = r1.metrics[0]["loss"]
    final_loss = r1.metrics[-1]["loss"]
    ln_vocab = float(np.log(mcfg.vocab_size))
    init_ok = abs(init_loss - ln_vocab) <= 0.05 * ln_vocab
    final_ok = final_loss < 0.7 * init_loss
    deterministic = ([m["loss"] for m in r1.metrics] == [m["loss"] for m in r2.metrics]
                     and checkpoint_checksum(r1.checkpoint_dir)
                     == checkpoint_checksum(r2.checkpoint_dir))
    time_ok = elapsed < 1800.0
    cfg, params, _ = load_model_checkpoint(r1.checkpoint_dir)
    tokens = corpus.val_tokens[:200]
    rows, _ = effective_dimension_profile(params, cfg, tokens,
                                          csv_path=root / "effdim.csv")
    records = capture_features(params, cfg, tokens)
    paths = pca_export(records, root / "pca")
    artifacts_ok = len(rows) == cfg.n_layers and len(paths) == cfg.n_layers
    ok = (not r1.diverged and init_ok and final_ok and deterministic
          and time_ok and artifacts_ok)
    report(ok, f"toy training: {TRAIN_STEPS} steps x2 in {elapsed:.0f}s (< 1800s); "
               f"initial loss {init_loss:.4f} within 5% of ln(256)={ln_vocab:.4f}; "
               f"final {final_loss:.4f} < 0.7x initial ({0.7 * init_loss:.4f}); "
               f"deterministic: {deterministic}; diagnostics emitted: {artifacts_ok}")


def test_diagnostic_effective_dimension_trend(toy_run, tmp_path):
    # reported, not asserted: matched-parameter short runs of both styles
    root, corpus, mcfg, _, _, _, _ = toy_run
    steps = 600
    tcfg = TrainConfig(total_steps=steps, warmup_steps=50, batch_size=1,
                       seq_len=128, seed=0, checkpoint_every=steps)
    profiles = {}
    for style, siaf_n, T in (("augmented", 2, 1), ("vanilla", 1, 0)):
        cfg = ModelConfig(d_model=64, n_heads=4, n_layers=2, reduction_r=32,
                          max_seq_len=128, siaf_n=siaf_n, shortcut_T=T,
                          block_style=style)
        r = train(cfg, tcfg, corpus, tmp_path / style)
        c2, params, _ = load_model_checkpoint(r.checkpoint_dir)
        rows, _ = effective_dimension_profile(params, c2, corpus.val_tokens[:128])
        profiles[style] = rows
    lines = ["layer  augmented  vanilla"]
    for (l, a), (_, v) in zip(profiles["augmented"], profiles["vanilla"]):
        lines.append(f"{l:>5}  {a:>9}  {v:>7}")
    table = "\n".join(lines)
    higher = sum(a >= v for (_, a), (_, v) in
                 zip(profiles["augmented"], profiles["vanilla"]))
    report(True, "diagnostic trend (reported, not asserted): per-layer effective "
                 f"dimension, augmented >= vanilla on {higher}/{len(profiles['vanilla'])} "
                 f"layers\n{table}")
