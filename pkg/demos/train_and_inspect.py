#!/usr/bin/env python3
"""Train a tiny byte-level model for a few hundred steps, then look inside.

After training we capture per-layer features on a validation window and print
the effective dimension of each layer, i.e. how many principal directions it
takes to explain 80% of the variance.
"""

import tempfile
from pathlib import Path

import numpy as np

from divkit import CorpusDataset, ModelConfig, TrainConfig, train
from divkit.analysis import (analysis_sample, effective_dimension_profile,
                             load_for_analysis)

# small synthetic corpus: repeated word-like tokens, low entropy
rng = np.random.default_rng(0)
words = [b"alpha ", b"beta ", b"gamma ", b"delta ", b"omega "]
corpus = b"".join(words[i] for i in rng.integers(0, len(words), size=20_000))
data = CorpusDataset(corpus)

model_cfg = ModelConfig(d_model=64, n_heads=4, n_layers=2, reduction_r=8,
                        max_seq_len=128, shortcut_T=1)
train_cfg = TrainConfig(total_steps=300, warmup_steps=30, batch_size=4,
                        seq_len=128, seed=0)

out = Path(tempfile.mkdtemp(prefix="demo_train_"))
result = train(model_cfg, train_cfg, data, out)
print(f"loss: {result.metrics[0]['loss']:.3f} -> {result.metrics[-1]['loss']:.3f}")
print(f"artifacts in {out}")

_, params, _ = load_for_analysis(result.checkpoint_dir)
tokens = analysis_sample(data, model_cfg, seed=0)
rows, degenerate = effective_dimension_profile(params, model_cfg, tokens)
print(f"\n{'layer':>5}  {'effective dim':>13}   (of {model_cfg.d_model} channels)")
for layer, d_eps in rows:
    print(f"{layer:>5}  {d_eps:>13}")
if degenerate:
    print(f"degenerate layers: {degenerate}")
