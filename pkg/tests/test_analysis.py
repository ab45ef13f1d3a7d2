import csv
import json

import numpy as np
import pytest

from divkit.analysis import (BENCH_VARIANTS, analysis_sample, bench_export,
                             capture_features, effective_dimension_profile,
                             latency_bench, pca_export, saliency, saliency_export,
                             saliency_perturbation_probe, variant_config)
from divkit.model import ModelConfig, count_flops, init_params, param_count
from divkit.training import CorpusDataset


def small_cfg(**kw):
    base = dict(d_model=32, n_heads=4, n_layers=3, reduction_r=4, max_seq_len=64)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture(scope="module")
def setup():
    cfg = small_cfg()
    params = init_params(cfg, seed=0)
    tokens = np.random.default_rng(0).integers(0, 256, size=40)
    return cfg, params, tokens


def test_capture_one_record_per_layer(setup):
    cfg, params, tokens = setup
    records = capture_features(params, cfg, tokens, drop=1)
    assert len(records) == cfg.n_layers
    for r in records:
        assert r.features.shape == (39, cfg.d_model)
        assert r.tokens.shape == (39,)
        assert 0.0 <= r.explained <= 1.0
        assert np.linalg.matrix_rank(r.features) <= min(39, cfg.d_model)
    with pytest.raises(ValueError):
        capture_features(params, cfg, tokens, drop=len(tokens))


def test_capture_drop_count(setup):
    cfg, params, tokens = setup
    records = capture_features(params, cfg, tokens[:10], drop=1)
    assert records[0].features.shape[0] == 9


def test_effdim_profile_csv_and_range(setup, tmp_path):
    cfg, params, tokens = setup
    rows, degenerate = effective_dimension_profile(params, cfg, tokens,
                                                   csv_path=tmp_path / "effdim.csv")
    assert [r[0] for r in rows] == list(range(cfg.n_layers))
    assert all(1 <= d <= cfg.d_model for _, d in rows)
    assert degenerate == []
    with open(tmp_path / "effdim.csv") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["layer", "d_eps"]
    assert len(got) == 1 + cfg.n_layers


def test_pca_export_schema_and_determinism(setup, tmp_path):
    cfg, params, tokens = setup
    records = capture_features(params, cfg, tokens)
    paths = pca_export(records, tmp_path / "a")
    paths2 = pca_export(records, tmp_path / "b")
    assert len(paths) == cfg.n_layers
    for pa, pb in zip(paths, paths2):
        assert pa.read_text() == pb.read_text()
    payload = json.loads(paths[0].read_text())
    assert payload["k"] == 3
    assert len(payload["coordinates"]) == 39
    assert len(payload["top_tokens"]) <= 5
    assert payload["metadata"]["scope"] == "per-batch"
    # explained = 1 at full k
    full = capture_features(params, cfg, tokens, pca_k=cfg.d_model)
    assert full[0].explained == pytest.approx(1.0, abs=1e-9)


def test_saliency_properties(setup, tmp_path):
    cfg, params, tokens = setup
    pos = 20
    smap = saliency(params, cfg, tokens, pos)
    assert np.all(smap.values >= 0.0)
    assert smap.values.max() == 1.0
    assert np.all(smap.values[pos + 1:] == 0.0)  # causality
    assert not smap.all_zero
    path = saliency_export(smap, tmp_path / "saliency.json")
    payload = json.loads(path.read_text())
    assert payload["normalization"] == "per-sample"
    assert len(payload["matrix"]) == len(tokens) - 1
    with pytest.raises(ValueError):
        saliency(params, cfg, tokens, len(tokens) - 1)


def test_saliency_all_zero_flagged(setup):
    cfg, params, tokens = setup
    dead = {k: v.copy() for k, v in params.items()}
    dead["w_out"] = np.zeros_like(dead["w_out"])  # logits identically zero
    smap = saliency(dead, cfg, tokens, 10)
    assert smap.all_zero
    assert np.all(smap.values == 0.0)


def test_saliency_perturbation_consistency(setup):
    cfg, params, tokens = setup
    rng = np.random.default_rng(1)
    wins = 0
    probes = 10
    for _ in range(probes):
        seq = rng.integers(0, 256, size=24)
        pos = int(rng.integers(4, 20))
        smap = saliency(params, cfg, seq, pos)
        dmax, dmin = saliency_perturbation_probe(params, cfg, seq, pos, smap)
        wins += dmax > dmin
    assert wins >= 0.8 * probes


def test_variant_configs_cover_ablation_rows():
    base = small_cfg(siaf_n=2, shortcut_T=1)
    v = variant_config("vanilla", base)
    assert v.block_style == "vanilla" and v.siaf_n == 1 and v.shortcut_T == 0
    s = variant_config("+SIAF", base)
    assert s.block_style == "vanilla" and s.siaf_n == 2
    a = variant_config("+AS", base)
    assert a.block_style == "augmented" and a.siaf_n == 1 and a.shortcut_T == 1
    b = variant_config("+both", base)
    assert b.block_style == "augmented" and b.siaf_n == 2
    with pytest.raises(ValueError):
        variant_config("extra", base)


def test_latency_bench_table(tmp_path):
    base = small_cfg(n_layers=1, max_seq_len=16)
    rows = latency_bench(base, iterations=10, warmup_iterations=1, seq_len=16)
    assert [r.variant for r in rows] == list(BENCH_VARIANTS)
    for r in rows:
        assert r.median_ms_per_token > 0
        assert r.p90_ms_per_token >= r.median_ms_per_token
        assert r.flops == count_flops(variant_config(r.variant, base), seq_len=16)["total"]
        assert r.params == param_count(variant_config(r.variant, base))["total"]
    bench_export(rows, tmp_path / "bench.csv")
    with open(tmp_path / "bench.csv") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["variant", "median_ms_per_token", "p90_ms_per_token", "flops"]
    assert len(got) == 1 + len(BENCH_VARIANTS)
    with pytest.raises(ValueError):
        latency_bench(base, iterations=5)


def test_bench_flops_r32_reduction():
    cfg = ModelConfig(d_model=64, n_heads=4, n_layers=1, reduction_r=32,
                      shortcut_T=1, max_seq_len=64)
    per = count_flops(cfg, seq_len=64)["per_layer"]
    n, d = 64, 64
    assert per["shortcut_bottleneck_per_branch"] == n * d * d // 16
    assert per["shortcut_dense_per_branch"] == n * d * d


def test_analysis_sample_from_validation_split():
    rng = np.random.default_rng(2)
    corpus = CorpusDataset(bytes(rng.integers(0, 200, size=5000, dtype=np.uint8)))
    cfg = small_cfg()
    sample = analysis_sample(corpus, cfg, seed=0, length=32)
    assert sample.shape == (32,)
    # deterministic
    assert np.array_equal(sample, analysis_sample(corpus, cfg, seed=0, length=32))
    with pytest.raises(ValueError):
        analysis_sample(corpus, cfg, length=10 ** 6)
