"""Checkpoint diagnostics: per-layer diversity/effective dimension, PCA export,
saliency maps, and a latency/FLOPs micro benchmark.

Every operation here is read-only over the checkpoint; the CLI asserts that
with a payload checksum before and after.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .metrics import diversity, effective_dimension, pca_top_k
from .model import ModelConfig, count_flops, init_params, model_forward, param_count
from .training import CorpusDataset, load_model_checkpoint


@dataclass
class AnalysisRecord:
    layer: int
    features: np.ndarray       # (N - drop) x d, float64
    tokens: np.ndarray         # token ids aligned with the feature rows
    d_m: float
    eff_dim: int
    pca_coords: np.ndarray     # (N - drop) x k
    explained: float


@dataclass
class SaliencyMap:
    values: np.ndarray         # seq_len x d, nonnegative, max 1 unless all zero
    tokens: np.ndarray
    target_position: int
    all_zero: bool
    normalization: str = "per-sample"


def capture_features(params: dict, cfg: ModelConfig, tokens: np.ndarray,
                     drop: int = 1, epsilon: float = 0.8, pca_k: int = 3):
    """Forward pass with capture; one AnalysisRecord per layer.

    The first `drop` positions are discarded as outliers before statistics.
    """
    tokens = np.asarray(tokens)
    if drop < 0 or drop >= tokens.size:
        raise ValueError("drop must be in [0, len(tokens))")
    _, captured = model_forward(tokens, params, cfg, capture=True)
    kept = tokens[drop:]
    records = []
    for layer, F in enumerate(captured):
        F = F[drop:]
        k = min(pca_k, min(F.shape))
        coords, explained = pca_top_k(F, k)
        records.append(AnalysisRecord(
            layer=layer, features=F, tokens=kept, d_m=diversity(F),
            eff_dim=effective_dimension(F, epsilon),
            pca_coords=coords, explained=explained))
    return records


def effective_dimension_profile(params: dict, cfg: ModelConfig, tokens: np.ndarray,
                                epsilon: float = 0.8, drop: int = 1,
                                csv_path=None):
    """d(epsilon) per layer; optionally emitted as CSV with columns layer,d_eps."""
    records = capture_features(params, cfg, tokens, drop=drop, epsilon=epsilon)
    rows = [(r.layer, r.eff_dim) for r in records]
    degenerate = [r.layer for r in records if r.eff_dim == 0]
    if csv_path is not None:
        _write_csv(csv_path, ["layer", "d_eps"], rows)
    return rows, degenerate


def pca_export(records, out_dir, k: int = 3, top_tokens: int = 5):
    """One pca_layer<k>.json per layer: coordinates, explained ratio, token tags.

    The `top_tokens` most frequent token ids in the sample are tagged so a
    renderer can highlight them; metadata records the per-batch protocol.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in records:
        counts = Counter(int(t) for t in r.tokens)
        frequent = [tok for tok, _ in counts.most_common(top_tokens)]
        payload = {
            "layer": r.layer,
            "k": int(r.pca_coords.shape[1]),
            "coordinates": r.pca_coords.tolist(),
            "explained": r.explained,
            "tokens": [int(t) for t in r.tokens],
            "top_tokens": frequent,
            "metadata": {"scope": "per-batch", "drop_applied": True},
        }
        path = out_dir / f"pca_layer{r.layer}.json"
        _write_atomic(path, json.dumps(payload, indent=1))
        paths.append(path)
    return paths


def saliency(params: dict, cfg: ModelConfig, tokens: np.ndarray,
             target_position: int) -> SaliencyMap:
    """|d log p(next token at target) / d embedding rows|, normalized to max 1.

    Gradients at positions after the target are exactly zero by causality.
    """
    tokens = np.asarray(tokens)
    if not (0 <= target_position < tokens.size - 1):
        raise ValueError("target_position must leave a next token in range")
    target_token = int(tokens[target_position + 1])
    inputs = tokens[:-1]

    from .model import block_forward, rms_normalize

    tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
    # route the lookup through an explicit activation tensor so the gradient
    # lands per position rather than per vocabulary row
    acts = Tensor(params["embed"][inputs].copy(), requires_grad=True)
    Z = acts
    for l in range(cfg.n_layers):
        Z = block_forward(Z, tensors, cfg, layer=l, causal=True)
    Z = rms_normalize(Z, tensors["norm_f"])
    logits = Z @ tensors["w_out"]

    # seed the reverse pass with d log p(target) / d logits:
    # one-hot minus softmax on the target row, zero elsewhere
    row = logits.value[target_position]
    m = float(np.max(row))
    p = np.exp(row - m)
    p /= p.sum()
    grad_logits = np.zeros_like(logits.value)
    grad_logits[target_position] = -p
    grad_logits[target_position, target_token] += 1.0
    logits.grad = grad_logits
    _backward_from(logits)
    g = acts.grad if acts.grad is not None else np.zeros_like(acts.value)

    values = np.abs(np.asarray(g, dtype=np.float64))
    values[target_position + 1:] = 0.0  # causality guarantees these are zero already
    peak = float(values.max())
    all_zero = peak == 0.0
    if not all_zero:
        values = values / peak
    return SaliencyMap(values=values, tokens=inputs.copy(),
                       target_position=target_position, all_zero=all_zero)


def _backward_from(node: Tensor):
    """Reverse pass seeded with node.grad already set (non-scalar root)."""
    topo = []
    seen = set()
    stack = [(node, False)]
    while stack:
        n, expanded = stack.pop()
        if id(n) in seen:
            continue
        if expanded:
            seen.add(id(n))
            topo.append(n)
            continue
        stack.append((n, True))
        for p in n._parents:
            if id(p) not in seen:
                stack.append((p, False))
    for n in reversed(topo):
        if n._backward is None or n.grad is None:
            continue
        for parent, g in zip(n._parents, n._backward(n.grad)):
            if g is not None:
                parent._accumulate(g)


def saliency_export(smap: SaliencyMap, path):
    payload = {
        "tokens": [int(t) for t in smap.tokens],
        "matrix": smap.values.tolist(),
        "target_position": smap.target_position,
        "all_zero": smap.all_zero,
        "normalization": smap.normalization,
    }
    _write_atomic(Path(path), json.dumps(payload))
    return Path(path)


def saliency_perturbation_probe(params: dict, cfg: ModelConfig, tokens: np.ndarray,
                                target_position: int, smap: SaliencyMap,
                                position: int | None = None):
    """Zero the largest- vs smallest-saliency channel at one input position and
    compare the induced change in the target logit.  Returns (delta_max, delta_min)."""
    tokens = np.asarray(tokens)
    inputs = tokens[:-1]
    target_token = int(tokens[target_position + 1])
    pos = target_position if position is None else position
    row = smap.values[pos]
    ch_max = int(np.argmax(row))
    ch_min = int(np.argmin(row))

    def logit_with_zeroed(channel):
        acts = params["embed"][inputs].copy()
        acts[pos, channel] = 0.0
        from .model import block_forward, rms_normalize
        Z = acts.astype(np.float64)
        p64 = {k: v.astype(np.float64) for k, v in params.items()}
        for l in range(cfg.n_layers):
            Z = block_forward(Z, p64, cfg, layer=l, causal=True)
        Z = rms_normalize(Z, p64["norm_f"])
        return float((Z @ p64["w_out"])[target_position, target_token])

    base_acts = params["embed"][inputs].astype(np.float64)
    from .model import block_forward, rms_normalize
    Z = base_acts
    p64 = {k: v.astype(np.float64) for k, v in params.items()}
    for l in range(cfg.n_layers):
        Z = block_forward(Z, p64, cfg, layer=l, causal=True)
    Z = rms_normalize(Z, p64["norm_f"])
    base = float((Z @ p64["w_out"])[target_position, target_token])

    delta_max = abs(logit_with_zeroed(ch_max) - base)
    delta_min = abs(logit_with_zeroed(ch_min) - base)
    return delta_max, delta_min


# ---- latency / FLOPs bench ------------------------------------------------

BENCH_VARIANTS = ("vanilla", "+SIAF", "+AS", "+both")


def variant_config(variant: str, base: ModelConfig) -> ModelConfig:
    """Ablation configs: vanilla block / series activation / augmented shortcuts / both."""
    if variant not in BENCH_VARIANTS:
        raise ValueError(f"variant must be one of {BENCH_VARIANTS}")
    d = base.to_dict()
    d["block_style"] = "augmented" if variant in ("+AS", "+both") else "vanilla"
    d["siaf_n"] = base.siaf_n if variant in ("+SIAF", "+both") else 1
    if d["block_style"] == "vanilla":
        d["shortcut_T"] = 0
    return ModelConfig.from_dict(d)


@dataclass
class BenchRow:
    variant: str
    median_ms_per_token: float
    p90_ms_per_token: float
    flops: int
    params: int
    samples: list = field(default_factory=list, repr=False)


def latency_bench(base_cfg: ModelConfig, variants=BENCH_VARIANTS,
                  iterations: int = 20, warmup_iterations: int = 3,
                  seq_len: int | None = None, seed: int = 0,
                  min_total_seconds: float = 0.05):
    """Median / p90 wall-time per token for each ablation variant on this host.

    Absolute numbers are hardware-specific; consumers should compare rows.
    Iterations are increased automatically if the timer resolution would
    dominate (total sampled time below min_total_seconds).
    """
    if iterations < 10:
        raise ValueError("iterations must be >= 10")
    n = base_cfg.max_seq_len if seq_len is None else seq_len
    rng = np.random.default_rng(seed)
    tokens = rng.integers(0, base_cfg.vocab_size, size=n)
    rows = []
    for variant in variants:
        cfg = variant_config(variant, base_cfg)
        params = init_params(cfg, seed=seed)
        for _ in range(warmup_iterations):
            model_forward(tokens, params, cfg)
        samples = _time_forward(tokens, params, cfg, iterations)
        while sum(samples) < min_total_seconds and len(samples) < 10 * iterations:
            samples += _time_forward(tokens, params, cfg, iterations)
        per_token = [1000.0 * s / n for s in samples]
        per_token.sort()
        rows.append(BenchRow(
            variant=variant,
            median_ms_per_token=statistics.median(per_token),
            p90_ms_per_token=per_token[min(len(per_token) - 1, int(0.9 * len(per_token)))],
            flops=count_flops(cfg, seq_len=n)["total"],
            params=param_count(cfg)["total"],
            samples=samples))
    return rows


def _time_forward(tokens, params, cfg, iterations):
    out = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        model_forward(tokens, params, cfg)
        out.append(time.perf_counter() - t0)
    return out


def bench_export(rows, path):
    _write_csv(path, ["variant", "median_ms_per_token", "p90_ms_per_token", "flops"],
               [(r.variant, r.median_ms_per_token, r.p90_ms_per_token, r.flops)
                for r in rows])
    return Path(path)


# ---- small file helpers ----------------------------------------------------


def _write_atomic(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    tmp.replace(path)


def analysis_sample(corpus: CorpusDataset, cfg: ModelConfig, seed: int = 0,
                    length: int | None = None) -> np.ndarray:
    """Deterministic token sample from the validation split for diagnostics."""
    length = min(cfg.max_seq_len, len(corpus.val_tokens)) if length is None else length
    if len(corpus.val_tokens) < length:
        raise ValueError("validation split too small for the requested sample")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, len(corpus.val_tokens) - length + 1))
    return corpus.val_tokens[start:start + length]


def load_for_analysis(checkpoint_dir):
    """(cfg, model params) helper shared by the analyze/bench subcommands."""
    cfg, params, extra = load_model_checkpoint(checkpoint_dir)
    return cfg, params, extra
