"""AdamW training of the toy byte-level LM, plus the finite-difference checker.

Training is fully deterministic given the seed: batch order comes from a
single PCG64 generator and gradient summation order is fixed.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .autograd import Tensor, cross_entropy_logits
from .checkpoint import save_checkpoint, load_checkpoint
from .model import ModelConfig, init_params, model_forward, params_as_tensors


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.01
    warmup_steps: int = 100
    total_steps: int = 1000
    batch_size: int = 4
    seq_len: int = 256
    seed: int = 0
    precision: str = "f32"
    lr_floor_ratio: float = 0.1
    grad_clip: float = 1.0
    checkpoint_every: int = 1000
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.beta1 < self.beta2 < 1.0):
            raise ValueError("betas must satisfy 0 < beta1 < beta2 < 1")
        if self.warmup_steps > self.total_steps:
            raise ValueError("warmup_steps must be <= total_steps")


def cosine_lr(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to the peak rate, then cosine decay to the floor."""
    if step < 0 or step > cfg.total_steps:
        raise ValueError("step out of range")
    peak = cfg.learning_rate
    if cfg.warmup_steps > 0 and step <= cfg.warmup_steps:
        return peak * step / cfg.warmup_steps
    floor = peak * cfg.lr_floor_ratio
    span = max(cfg.total_steps - cfg.warmup_steps, 1)
    t = (step - cfg.warmup_steps) / span
    return floor + 0.5 * (peak - floor) * (1.0 + np.cos(np.pi * t))


def cross_entropy(logits, targets):
    """Mean next-token NLL with a numerically stable log-softmax."""
    return cross_entropy_logits(logits, targets)


def adamw_init(params: dict[str, np.ndarray]) -> dict:
    return {
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
        "step": 0,
    }


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: dict, lr: float, cfg: TrainConfig) -> None:
    """Decoupled weight decay + bias-corrected Adam moments; updates in place."""
    state["step"] += 1
    t = state["step"]
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state["m"][name]
        v = state["v"][name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if cfg.weight_decay != 0.0:
            p *= p.dtype.type(1.0 - lr * cfg.weight_decay)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + cfg.adam_eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= g.dtype.type(scale)
    return total


class CorpusDataset:
    """Byte-level token stream with a deterministic train/validation split."""

    def __init__(self, data: bytes, val_fraction: float = 0.1):
        if len(data) < 2:
            raise ValueError("corpus is empty")
        self.tokens = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
        split = int(len(self.tokens) * (1.0 - val_fraction))
        self.train_tokens = self.tokens[:split]
        self.val_tokens = self.tokens[split:]
        self.vocab_size = 256

    @classmethod
    def from_file(cls, path, val_fraction: float = 0.1) -> "CorpusDataset":
        return cls(Path(path).read_bytes(), val_fraction)

    def sample_batch(self, rng: np.random.Generator, batch_size: int, seq_len: int):
        """(batch, seq_len + 1) window of token ids from the training split."""
        hi = len(self.train_tokens) - seq_len - 1
        if hi < 1:
            raise ValueError("corpus too small for the requested seq_len")
        starts = rng.integers(0, hi, size=batch_size)
        return np.stack([self.train_tokens[s:s + seq_len + 1] for s in starts])


@dataclass
class TrainResult:
    checkpoint_dir: Path
    metrics: list
    diverged: bool


def compute_loss_and_grads(params: dict[str, np.ndarray], cfg: ModelConfig,
                           batch: np.ndarray):
    """One forward/backward over a batch of sequences; returns (loss, grads)."""
    tensors = params_as_tensors(params)
    total = None
    for row in batch:
        logits = model_forward(row[:-1], tensors, cfg)
        loss = cross_entropy_logits(logits, row[1:])
        total = loss if total is None else total + loss
    total = total * (1.0 / len(batch))
    total.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
             for k, t in tensors.items()}
    return float(total.value), grads


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, corpus: CorpusDataset,
          out_dir, log=None) -> TrainResult:
    """Next-token training loop; emits metrics.csv and periodic checkpoints."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(train_cfg.seed)
    params = init_params(model_cfg, seed=train_cfg.seed)
    state = adamw_init(params)
    metrics = []
    diverged = False

    ckpt_dir = out_dir / "checkpoint"
    save_checkpoint(ckpt_dir, model_cfg, params, extra={"step": 0})

    for step in range(1, train_cfg.total_steps + 1):
        t0 = time.perf_counter()
        batch = corpus.sample_batch(rng, train_cfg.batch_size, train_cfg.seq_len)
        loss, grads = compute_loss_and_grads(params, model_cfg, batch)
        if not np.isfinite(loss):
            diverged = True
            break
        clip_gradients(grads, train_cfg.grad_clip)
        lr = cosine_lr(step, train_cfg)
        adamw_step(params, grads, state, lr, train_cfg)
        dt = time.perf_counter() - t0
        tokens_per_sec = batch.shape[0] * (batch.shape[1] - 1) / dt
        metrics.append({"step": step, "loss": loss, "lr": lr,
                        "tokens_per_sec": tokens_per_sec})
        if log is not None and (step % 100 == 0 or step == 1):
            log(f"step {step} loss {loss:.4f} lr {lr:.2e} tok/s {tokens_per_sec:.0f}")
        if step % train_cfg.checkpoint_every == 0 or step == train_cfg.total_steps:
            opt_tensors = dict(params)
            opt_tensors.update({f"opt.m.{k}": v for k, v in state["m"].items()})
            opt_tensors.update({f"opt.v.{k}": v for k, v in state["v"].items()})
            save_checkpoint(ckpt_dir, model_cfg, opt_tensors,
                            extra={"step": step, "train_config": asdict(train_cfg)})

    path = out_dir / "metrics.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["step", "loss", "lr", "tokens_per_sec"])
        writer.writeheader()
        writer.writerows(metrics)
    return TrainResult(checkpoint_dir=ckpt_dir, metrics=metrics, diverged=diverged)


def load_model_checkpoint(directory):
    """(cfg, model params only) from a checkpoint that may also hold optimizer state."""
    cfg, tensors, extra = load_checkpoint(directory)
    params = {k: v for k, v in tensors.items() if not k.startswith("opt.")}
    return cfg, params, extra


# ---- finite-difference gradient checking ----------------------------------


def grad_check(params: dict[str, np.ndarray], loss_fn, h: float = 1e-5,
               tol: float = 1e-4, coords_per_group: int = 200, seed: int = 0,
               kink_fn=None) -> dict:
    """Compare backward() gradients against central differences.

    loss_fn(param_dict) must accept either a dict of Tensors (analytic pass)
    or a dict of ndarrays (numeric evaluations) and return the scalar loss.
    kink_fn(name, flat_index, params) -> True excludes a coordinate (used near
    non-smooth activation kinks).
    Returns a report with per-group max relative error and failures.
    """
    tensors = params_as_tensors(params)
    loss = loss_fn(tensors)
    if not isinstance(loss, Tensor):
        raise TypeError("loss_fn must return a Tensor when given Tensors")
    loss.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
                for k, t in tensors.items()}

    rng = np.random.default_rng(seed)
    groups = {}
    failures = []
    work = {k: v.copy() for k, v in params.items()}
    for name in sorted(params):
        size = params[name].size
        n_coords = min(coords_per_group, size)
        idxs = rng.choice(size, size=n_coords, replace=False) if size > n_coords \
            else np.arange(size)
        max_rel = 0.0
        checked = 0
        flat = work[name].reshape(-1)
        for idx in idxs:
            if kink_fn is not None and kink_fn(name, int(idx), params):
                continue
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = float(loss_fn(work))
            flat[idx] = orig - h
            f_minus = float(loss_fn(work))
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            max_rel = max(max_rel, rel)
            checked += 1
            if rel > tol:
                failures.append({"tensor": name, "index": int(idx),
                                 "analytic": a, "numeric": numeric, "rel_error": rel})
        groups[name] = {"max_rel_error": max_rel, "checked": checked}
    overall = max((g["max_rel_error"] for g in groups.values()), default=0.0)
    return {"groups": groups, "failures": failures, "max_rel_error": overall,
            "passed": not failures}
