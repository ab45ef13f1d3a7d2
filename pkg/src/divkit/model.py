"""Transformer decoder blocks with series-activation FFN and augmented shortcuts.

All forward functions accept either plain ndarrays or autograd Tensors for the
feature matrix and the weights, so the same code path serves theory checks
(numpy, float64) and training (Tensors, tracked gradients).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .activations import ACTIVATION_KINDS
from .autograd import Tensor, apply_activation, concat, masked_softmax, sum_, take_rows, val

BLOCK_STYLES = ("vanilla", "augmented")

_DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass
class ModelConfig:
    d_model: int
    n_heads: int
    n_layers: int
    siaf_n: int = 2
    shortcut_T: int = 1
    reduction_r: int = 32
    vocab_size: int = 256
    max_seq_len: int = 256
    base_activation: str = "gelu"
    shortcut_activation: str = "gelu"
    block_style: str = "augmented"
    d_ff: int | None = None
    rope_base: float = 10000.0
    precision: str = "f32"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.reduction_r < 1 or self.d_model % self.reduction_r != 0:
            raise ValueError("reduction_r must divide d_model")
        if self.siaf_n < 1:
            raise ValueError("siaf_n must be >= 1")
        if self.shortcut_T < 0:
            raise ValueError("shortcut_T must be >= 0")
        if self.block_style not in BLOCK_STYLES:
            raise ValueError(f"block_style must be one of {BLOCK_STYLES}")
        if self.base_activation not in ACTIVATION_KINDS:
            raise ValueError(f"unknown base_activation {self.base_activation!r}")
        if self.shortcut_activation not in ACTIVATION_KINDS:
            raise ValueError(f"unknown shortcut_activation {self.shortcut_activation!r}")
        if self.precision not in _DTYPES:
            raise ValueError("precision must be 'f32' or 'f64'")
        if (self.d_model // self.n_heads) % 2 != 0:
            raise ValueError("head dimension must be even (rotary embedding)")
        if self.d_ff is None:
            self.d_ff = 4 * self.d_model

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# ---- parameter initialization -------------------------------------------


def tensor_names(cfg: ModelConfig) -> list[str]:
    names = ["embed"]
    for l in range(cfg.n_layers):
        p = f"blocks.{l}"
        for h in range(cfg.n_heads):
            names += [f"{p}.attn.wq.{h}", f"{p}.attn.wk.{h}", f"{p}.attn.wv.{h}"]
        names.append(f"{p}.attn.wo")
        if cfg.block_style == "augmented":
            for t in range(cfg.shortcut_T):
                names += [f"{p}.shortcut.{t}.w_down", f"{p}.shortcut.{t}.w_up"]
        for i in range(cfg.siaf_n):
            names += [f"{p}.ffn.w1.{i}", f"{p}.ffn.a.{i}", f"{p}.ffn.b.{i}"]
        names.append(f"{p}.ffn.w2")
        names += [f"{p}.norm1", f"{p}.norm2"]
    names += ["norm_f", "w_out"]
    return names


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Gaussian init; output projection kept small so initial logits are near zero."""
    rng = np.random.default_rng(seed)
    dt = cfg.dtype
    d, dh, dff = cfg.d_model, cfg.d_head, cfg.d_ff

    def gauss(shape, std):
        return rng.standard_normal(shape).astype(dt) * dt(std)

    params: dict[str, np.ndarray] = {"embed": gauss((cfg.vocab_size, d), 0.02)}
    for l in range(cfg.n_layers):
        p = f"blocks.{l}"
        for h in range(cfg.n_heads):
            params[f"{p}.attn.wq.{h}"] = gauss((d, dh), 1.0 / np.sqrt(d))
            params[f"{p}.attn.wk.{h}"] = gauss((d, dh), 1.0 / np.sqrt(d))
            params[f"{p}.attn.wv.{h}"] = gauss((d, dh), 1.0 / np.sqrt(d))
        params[f"{p}.attn.wo"] = gauss((d, d), 1.0 / np.sqrt(2.0 * cfg.n_layers * d))
        if cfg.block_style == "augmented":
            dr = d // cfg.reduction_r
            for t in range(cfg.shortcut_T):
                params[f"{p}.shortcut.{t}.w_down"] = gauss((d, dr), 1.0 / np.sqrt(d))
                params[f"{p}.shortcut.{t}.w_up"] = gauss((dr, d), 1.0 / np.sqrt(2.0 * cfg.n_layers * dr))
        for i in range(cfg.siaf_n):
            params[f"{p}.ffn.w1.{i}"] = gauss((d, dff), 1.0 / np.sqrt(d))
            params[f"{p}.ffn.a.{i}"] = np.asarray(1.0, dtype=dt)
            params[f"{p}.ffn.b.{i}"] = np.asarray(0.0, dtype=dt)
        params[f"{p}.ffn.w2"] = gauss((dff, d), 1.0 / np.sqrt(2.0 * cfg.n_layers * cfg.siaf_n * dff))
        params[f"{p}.norm1"] = np.ones(d, dtype=dt)
        params[f"{p}.norm2"] = np.ones(d, dtype=dt)
    params["norm_f"] = np.ones(d, dtype=dt)
    params["w_out"] = gauss((d, cfg.vocab_size), 0.02)
    return params


def params_as_tensors(params: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=True) for k, v in params.items()}


# ---- elementary forward operations ---------------------------------------


def causal_mask(n: int, dtype=np.float64) -> np.ndarray:
    """Additive mask: 0 on/below the diagonal, -inf strictly above."""
    m = np.zeros((n, n), dtype=dtype)
    m[np.triu_indices(n, k=1)] = -np.inf
    return m


def _pair_rotate(x: np.ndarray) -> np.ndarray:
    # (x0, x1) -> (-x1, x0) on adjacent channel pairs
    out = np.empty_like(x)
    out[..., 0::2] = -x[..., 1::2]
    out[..., 1::2] = x[..., 0::2]
    return out


def _pair_rotate_adjoint(g: np.ndarray) -> np.ndarray:
    out = np.empty_like(g)
    out[..., 0::2] = g[..., 1::2]
    out[..., 1::2] = -g[..., 0::2]
    return out


def rope_angles(n_pos: int, d_head: int, base: float, dtype=np.float64):
    """cos/sin tables of shape (n_pos, d_head); channel pairs share an angle."""
    if d_head % 2 != 0:
        raise ValueError("head dimension must be even")
    j = np.arange(d_head // 2)
    inv_freq = base ** (-2.0 * j / d_head)
    ang = np.arange(n_pos)[:, None] * inv_freq[None, :]
    ang = np.repeat(ang, 2, axis=1)
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


def rope_apply(x, positions: np.ndarray, base: float = 10000.0):
    """Rotary position embedding on rows of x (N x d_head)."""
    d_head = val(x).shape[-1]
    dtype = val(x).dtype
    cos_t, sin_t = rope_angles(int(np.max(positions)) + 1, d_head, base, dtype)
    cos_t, sin_t = cos_t[positions], sin_t[positions]
    if isinstance(x, Tensor):
        out_val = x.value * cos_t + _pair_rotate(x.value) * sin_t

        def bw(g):
            return (g * cos_t + _pair_rotate_adjoint(g * sin_t),)
        return Tensor(out_val, parents=(x,), backward=bw, op="rope")
    return x * cos_t + _pair_rotate(x) * sin_t


def attention_matrix(Z, wq, wk, causal: bool = False, rope_base: float | None = None,
                     positions: np.ndarray | None = None):
    """Row-stochastic attention from a single head's query/key projections.

    Logits are scaled by sqrt(head_dim), the per-head convention.
    """
    n = val(Z).shape[0]
    dh = val(wq).shape[1]
    q = Z @ wq
    k = Z @ wk
    if rope_base is not None:
        if positions is None:
            positions = np.arange(n)
        q = rope_apply(q, positions, rope_base)
        k = rope_apply(k, positions, rope_base)
    logits = (q @ k.T) * (1.0 / np.sqrt(dh))
    if not np.all(np.isfinite(val(logits))):
        raise ValueError("attention logits are not finite")
    mask = causal_mask(n, val(Z).dtype) if causal else None
    return masked_softmax(logits, mask)


def msa_forward(Z, wq_list, wk_list, wv_list, wo, causal: bool = False,
                rope_base: float | None = None, attn_override=None,
                return_attn: bool = False):
    """Multi-head self-attention: Concat_h(A_h Z Wv_h) Wo.

    attn_override, if given, supplies precomputed per-head attention matrices.
    """
    heads = []
    attn = []
    for h in range(len(wv_list)):
        if attn_override is not None:
            A = attn_override[h]
        else:
            A = attention_matrix(Z, wq_list[h], wk_list[h], causal=causal, rope_base=rope_base)
        attn.append(A)
        heads.append(A @ (Z @ wv_list[h]))
    out = concat(heads, axis=1) @ wo
    if return_attn:
        return out, [val(A) for A in attn]
    return out


def bottleneck_shortcut(Z, w_down, w_up, activation: str = "gelu"):
    """Token-wise augmented shortcut in bottleneck form: sigma(Z Wd) Wu."""
    return apply_activation(activation, Z @ w_down) @ w_up


def aug_msa_forward(Z, wq_list, wk_list, wv_list, wo, shortcuts,
                    causal: bool = False, rope_base: float | None = None,
                    shortcut_activation: str = "gelu", attn_override=None,
                    return_attn: bool = False):
    """MSA(Z) + Z + sum of augmented shortcut branches.

    shortcuts: list of (w_down, w_up) pairs; empty list gives the plain
    residual form MSA(Z) + Z.
    """
    res = msa_forward(Z, wq_list, wk_list, wv_list, wo, causal=causal,
                      rope_base=rope_base, attn_override=attn_override,
                      return_attn=return_attn)
    out, attn = res if return_attn else (res, None)
    out = out + Z
    for w_down, w_up in shortcuts:
        out = out + bottleneck_shortcut(Z, w_down, w_up, shortcut_activation)
    if return_attn:
        return out, attn
    return out


def siaf(x, branches):
    """Series activation: sum_i sigma_i(a_i * x + b_i), elementwise.

    branches: list of (a, b, kind); a and b are scalars (or 0-d Tensors).
    """
    if not branches:
        raise ValueError("siaf needs at least one branch")
    out = None
    for a, b, kind in branches:
        term = apply_activation(kind, a * x + b)
        out = term if out is None else out + term
    return out


def siaf_mlp_forward(Z, w1_list, w2, a_list, b_list, kinds):
    """(sum_i sigma_i(a_i Z W1_i + b_i)) W2; one W1 per branch, shared W2."""
    n = len(w1_list)
    if not (len(a_list) == len(b_list) == len(kinds) == n) or n < 1:
        raise ValueError("branch/weight count mismatch")
    acc = None
    for i in range(n):
        term = apply_activation(kinds[i], a_list[i] * (Z @ w1_list[i]) + b_list[i])
        acc = term if acc is None else acc + term
    return acc @ w2


def rms_normalize(Z, gains, eps: float = 1e-6):
    """Scale each row to unit RMS (with an epsilon guard), then apply channel gains."""
    d = val(Z).shape[-1]
    ms = sum_(Z * Z, axis=-1, keepdims=True) * (1.0 / d)
    inv = (ms + eps) ** -0.5
    return Z * inv * gains


# ---- block and model ------------------------------------------------------


def block_forward(Z, params, cfg: ModelConfig, layer: int = 0, causal: bool = True,
                  use_rope: bool = True):
    """Pre-norm decoder block; style selects the attention sublayer's shortcuts."""
    p = f"blocks.{layer}"

    def w(name):
        return params[f"{p}.{name}"]

    wq = [w(f"attn.wq.{h}") for h in range(cfg.n_heads)]
    wk = [w(f"attn.wk.{h}") for h in range(cfg.n_heads)]
    wv = [w(f"attn.wv.{h}") for h in range(cfg.n_heads)]
    rope_base = cfg.rope_base if use_rope else None

    Zn = rms_normalize(Z, w("norm1"))
    if cfg.block_style == "augmented":
        shortcuts = [(w(f"shortcut.{t}.w_down"), w(f"shortcut.{t}.w_up"))
                     for t in range(cfg.shortcut_T)]
    else:
        shortcuts = []
    msa = msa_forward(Zn, wq, wk, wv, w("attn.wo"), causal=causal, rope_base=rope_base)
    out = msa + Z
    for w_down, w_up in shortcuts:
        out = out + bottleneck_shortcut(Zn, w_down, w_up, cfg.shortcut_activation)
    Z = out

    Zn2 = rms_normalize(Z, w("norm2"))
    ffn = siaf_mlp_forward(
        Zn2,
        [w(f"ffn.w1.{i}") for i in range(cfg.siaf_n)],
        w("ffn.w2"),
        [w(f"ffn.a.{i}") for i in range(cfg.siaf_n)],
        [w(f"ffn.b.{i}") for i in range(cfg.siaf_n)],
        [cfg.base_activation] * cfg.siaf_n,
    )
    return ffn + Z


def model_forward(tokens, params, cfg: ModelConfig, capture: bool = False):
    """Embedding -> L blocks -> final norm -> logits (N x vocab).

    With capture=True also returns the post-block hidden state of every layer
    as plain float64 arrays.
    """
    tokens = np.asarray(tokens)
    if tokens.ndim != 1:
        raise ValueError("tokens must be a 1-D id sequence")
    if tokens.size > cfg.max_seq_len:
        raise ValueError(f"sequence length {tokens.size} exceeds max_seq_len {cfg.max_seq_len}")
    if np.any(tokens < 0) or np.any(tokens >= cfg.vocab_size):
        raise ValueError("token id out of range")
    Z = take_rows(params["embed"], tokens)
    captures = []
    for l in range(cfg.n_layers):
        Z = block_forward(Z, params, cfg, layer=l, causal=True)
        if capture:
            captures.append(np.array(val(Z), dtype=np.float64))
    Z = rms_normalize(Z, params["norm_f"])
    logits = Z @ params["w_out"]
    if capture:
        return logits, captures
    return logits


# ---- cost model -----------------------------------------------------------


def count_flops(cfg: ModelConfig, seq_len: int | None = None) -> dict:
    """Analytic multiply-add counts per layer component, plus totals.

    Matches the matmul shapes of the actual forward pass (verified by graph
    enumeration in the tests); elementwise work is not counted.
    """
    n = cfg.max_seq_len if seq_len is None else seq_len
    d, dh, dff = cfg.d_model, cfg.d_head, cfg.d_ff
    H, T, r = cfg.n_heads, cfg.shortcut_T, cfg.reduction_r
    per_layer = {
        "attn_qkv": 3 * H * n * d * dh,
        "attn_scores": H * n * n * dh,
        "attn_apply": H * n * n * dh,
        "attn_out": n * d * d,
        "shortcut_bottleneck_per_branch": 2 * n * d * (d // r),
        "shortcut_dense_per_branch": n * d * d,
        "shortcuts_total": (T * 2 * n * d * (d // r)) if cfg.block_style == "augmented" else 0,
        "ffn_first": cfg.siaf_n * n * d * dff,
        "ffn_second": n * dff * d,
    }
    attention = (per_layer["attn_qkv"] + per_layer["attn_scores"]
                 + per_layer["attn_apply"] + per_layer["attn_out"])
    ffn = per_layer["ffn_first"] + per_layer["ffn_second"]
    out = {
        "per_layer": per_layer,
        "attention": cfg.n_layers * attention,
        "shortcuts": cfg.n_layers * per_layer["shortcuts_total"],
        "ffn": cfg.n_layers * ffn,
        "output_projection": n * d * cfg.vocab_size,
    }
    out["total"] = out["attention"] + out["shortcuts"] + out["ffn"] + out["output_projection"]
    return out


def param_count(cfg: ModelConfig) -> dict:
    """Exact parameter totals by component."""
    d, dh, dff = cfg.d_model, cfg.d_head, cfg.d_ff
    attn = cfg.n_layers * (3 * cfg.n_heads * d * dh + d * d)
    shortcuts = 0
    if cfg.block_style == "augmented":
        shortcuts = cfg.n_layers * cfg.shortcut_T * 2 * d * (d // cfg.reduction_r)
    ffn = cfg.n_layers * (cfg.siaf_n * (d * dff + 2) + dff * d)
    norms = cfg.n_layers * 2 * d + d
    embed = cfg.vocab_size * d
    head = d * cfg.vocab_size
    out = {
        "embedding": embed,
        "attention": attn,
        "shortcuts": shortcuts,
        "ffn": ffn,
        "norms": norms,
        "output_projection": head,
    }
    out["total"] = sum(v for k, v in out.items() if k != "total")
    return out
