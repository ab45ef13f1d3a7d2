"""Numerical certification of the diversity bounds on randomized instances.

Each BoundKind names one inequality/equality; check_inequality evaluates the
left side by running the actual module forward from model.py and the right
side from the closed form with measured spectral constants.  Non-strict kinds
pass when lhs <= rhs within 1e-9 relative; equalities within 1e-10; strict
kinds require positive slack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .activations import lipschitz_estimate
from .metrics import diversity
from .model import (aug_msa_forward, attention_matrix, bottleneck_shortcut,
                    msa_forward, siaf_mlp_forward)
from .sinkhorn import sinkhorn

BOUND_KINDS = (
    "LEMMA1_WEIGHT",
    "LEMMA1_ACTIVATION",
    "LEMMA1_CONVEX",
    "LEMMA1_ATTENTION",
    "LEMMA2_CONCAT_EQ",
    "THM1_SINGLEHEAD",
    "THM2_MSA",
    "THM2_MSA_STACK",
    "THM3_MLP",
    "THM3_MLP_STACK",
    "THM4_AUGMSA",
    "THM4_AUGMSA_STACK",
    "THM7_SIAF",
    "THM7_SIAF_STACK",
    "THM8_COMBINED_VANILLA",
    "THM9_COMBINED_AUGMENTED",
    "NOISE_LEMMA3_MSA",
    "NOISE_LEMMA4_LINEAR",
    "NOISE_THM5_NONLINEAR_STRICT",
    "NOISE_THM6_AUGMSA",
    "NOISE_DIVERSITY_TRIANGLE",
)

STRICT_KINDS = {"NOISE_THM5_NONLINEAR_STRICT"}
EQUALITY_KINDS = {"LEMMA2_CONCAT_EQ"}

TOL_INEQ = 1e-9
TOL_EQ = 1e-10

# Lipschitz constants reused across trials (grid estimation is deterministic)
_LIP_CACHE: dict[str, float] = {}


def _lip(kind: str) -> float:
    if kind not in _LIP_CACHE:
        _LIP_CACHE[kind] = lipschitz_estimate(kind, grid_points=100_000)
    return _LIP_CACHE[kind]


@dataclass
class TrialInstance:
    kind: str
    seed: int
    dims: dict
    data: dict = field(default_factory=dict)


@dataclass
class BoundCheck:
    kind: str
    lhs: float
    rhs: float
    slack: float
    passed: bool
    strict: bool
    seed: int
    dims: dict
    inconclusive: bool = False
    info: dict = field(default_factory=dict)

    def to_json(self) -> str:
        rec = {"kind": self.kind, "lhs": self.lhs, "rhs": self.rhs,
               "slack": self.slack, "pass": self.passed, "strict": self.strict,
               "seed": self.seed, "dims": self.dims,
               "inconclusive": self.inconclusive, "info": self.info}
        return json.dumps(rec, sort_keys=True)


class _SpectralWatch:
    """Collects spectral-constant computations and tracks convergence."""

    def __init__(self):
        self.ok = True

    def s(self, W) -> float:
        r = metrics.spectral_norm(W)
        self.ok = self.ok and r.converged
        return r.s

    def lam_attn(self, A) -> float:
        r = metrics.attention_contraction(A)
        self.ok = self.ok and r.converged
        return r.lambda_max

    def lam_proj(self, X) -> float:
        r = metrics.projector_gram_top_eig(X)
        self.ok = self.ok and r.converged
        return r.lambda_max


# ---- instance sampling ----------------------------------------------------


def _softmax_attention(rng, Z, d, dh):
    wq = rng.standard_normal((d, dh)) / np.sqrt(d)
    wk = rng.standard_normal((d, dh)) / np.sqrt(d)
    return attention_matrix(Z, wq, wk)


def _zero_colmean_noise(rng, n, d, scale):
    e = rng.standard_normal((n, d)) * scale
    return e - e.mean(axis=0, keepdims=True)


def _msa_weights(rng, d, H, scale=1.0):
    dh = d // H
    wq = [rng.standard_normal((d, dh)) / np.sqrt(d) for _ in range(H)]
    wk = [rng.standard_normal((d, dh)) / np.sqrt(d) for _ in range(H)]
    wv = [rng.standard_normal((d, dh)) * (scale / np.sqrt(d)) for _ in range(H)]
    wo = rng.standard_normal((d, d)) * (scale / np.sqrt(d))
    return wq, wk, wv, wo


def _shortcut_weights(rng, d, r, T, scale=1.0):
    dr = max(d // r, 1)
    return [(rng.standard_normal((d, dr)) * (scale / np.sqrt(d)),
             rng.standard_normal((dr, d)) * (scale / np.sqrt(dr)))
            for _ in range(T)]


def sample_instance(kind: str, dims: dict, seed: int) -> TrialInstance:
    """Deterministic randomized instance for (kind, dims, seed)."""
    if kind not in BOUND_KINDS:
        raise ValueError(f"unknown bound kind {kind!r}")
    n, d = dims["N"], dims["d"]
    H = dims.get("H", 1)
    if d % H != 0:
        raise ValueError("d must be divisible by H")
    if n < 1 or d < 1:
        raise ValueError("invalid dims")
    rng = np.random.default_rng(seed)
    data: dict = {"Z": rng.standard_normal((n, d))}

    if kind == "LEMMA1_WEIGHT":
        data["W"] = rng.standard_normal((d, dims.get("m", d))) / np.sqrt(d)
    elif kind == "LEMMA1_ACTIVATION":
        data["act"] = dims.get("act", "gelu")
    elif kind == "LEMMA1_CONVEX":
        data["B"] = rng.standard_normal((n, d))
        data["alpha"] = rng.uniform(0.0, 2.0, size=2)
    elif kind == "LEMMA1_ATTENTION":
        A = _softmax_attention(rng, data["Z"], d, max(d // H, 1))
        if dims.get("sinkhorn", False):
            A = sinkhorn(A, iterations=50)
        data["A"] = A
    elif kind == "LEMMA2_CONCAT_EQ":
        blocks = [rng.standard_normal((n, d)) for _ in range(H)]
        if dims.get("identical_blocks", False):
            blocks = [blocks[0].copy() for _ in range(H)]
        data["blocks"] = blocks
    elif kind == "THM1_SINGLEHEAD":
        data["wq"] = rng.standard_normal((d, d)) / np.sqrt(d)
        data["wk"] = rng.standard_normal((d, d)) / np.sqrt(d)
        data["W"] = rng.standard_normal((d, dims.get("m", d))) / np.sqrt(d)
    elif kind in ("THM2_MSA", "NOISE_LEMMA3_MSA"):
        data["msa"] = _msa_weights(rng, d, H)
        if kind == "NOISE_LEMMA3_MSA":
            data["eps"] = _zero_colmean_noise(rng, n, d, dims.get("noise_scale", 0.05))
    elif kind == "THM2_MSA_STACK":
        depth = dims.get("depth", 3)
        data["layers"] = [_msa_weights(rng, d, H) for _ in range(depth)]
    elif kind == "THM3_MLP":
        data["w1"] = rng.standard_normal((d, d)) / np.sqrt(d)
        data["w2"] = rng.standard_normal((d, d)) / np.sqrt(d)
        data["act"] = dims.get("act", "gelu")
    elif kind == "THM3_MLP_STACK":
        depth = dims.get("depth", 3)
        data["layers"] = [(rng.standard_normal((d, d)) / np.sqrt(d),
                           rng.standard_normal((d, d)) / np.sqrt(d))
                          for _ in range(depth)]
        data["act"] = dims.get("act", "gelu")
    elif kind in ("THM4_AUGMSA", "NOISE_THM6_AUGMSA"):
        T = dims.get("T", 2)
        data["msa"] = _msa_weights(rng, d, H)
        data["shortcuts"] = _shortcut_weights(rng, d, dims.get("r", 2), T)
        data["act"] = dims.get("act", "gelu")
        if kind == "NOISE_THM6_AUGMSA":
            data["eps"] = _zero_colmean_noise(rng, n, d, dims.get("noise_scale", 0.05))
    elif kind == "THM4_AUGMSA_STACK":
        depth = dims.get("depth", 3)
        T = dims.get("T", 1)
        data["layers"] = [(_msa_weights(rng, d, H, scale=0.5),
                           _shortcut_weights(rng, d, dims.get("r", 2), T, scale=0.5))
                          for _ in range(depth)]
        data["act"] = dims.get("act", "gelu")
    elif kind == "THM7_SIAF":
        n_br = dims.get("n_branches", 2)
        dff = dims.get("d_ff", d)
        data["w1"] = [rng.standard_normal((d, dff)) / np.sqrt(d) for _ in range(n_br)]
        data["w2"] = rng.standard_normal((dff, d)) / np.sqrt(dff)
        data["a"] = rng.uniform(0.5, 1.5, size=n_br)
        data["b"] = rng.uniform(-0.5, 0.5, size=n_br)
        data["acts"] = [["gelu", "tanh", "swish", "relu"][i % 4] for i in range(n_br)]
    elif kind == "THM7_SIAF_STACK":
        depth = dims.get("depth", 3)
        n_br = dims.get("n_branches", 2)
        layers = []
        for _ in range(depth):
            layers.append({
                "w1": [rng.standard_normal((d, d)) / np.sqrt(d) for _ in range(n_br)],
                "w2": rng.standard_normal((d, d)) / np.sqrt(d),
                "a": rng.uniform(0.5, 1.5, size=n_br),
                "b": rng.uniform(-0.5, 0.5, size=n_br),
                "acts": [["gelu", "tanh", "swish", "relu"][i % 4] for i in range(n_br)],
            })
        data["layers"] = layers
    elif kind == "THM8_COMBINED_VANILLA":
        p, q = dims.get("p", 2), dims.get("q", 2)
        data["msa_layers"] = [_msa_weights(rng, d, H) for _ in range(p)]
        data["mlp_layers"] = [(rng.standard_normal((d, d)) / np.sqrt(d),
                               rng.standard_normal((d, d)) / np.sqrt(d))
                              for _ in range(q)]
        data["act"] = dims.get("act", "gelu")
    elif kind == "THM9_COMBINED_AUGMENTED":
        p, q = dims.get("p", 2), dims.get("q", 2)
        T = dims.get("T", 1)
        n_br = dims.get("n_branches", 2)
        data["aug_layers"] = [(_msa_weights(rng, d, H, scale=0.5),
                               _shortcut_weights(rng, d, dims.get("r", 2), T, scale=0.5))
                              for _ in range(p)]
        siaf_layers = []
        for _ in range(q):
            siaf_layers.append({
                "w1": [rng.standard_normal((d, d)) / np.sqrt(d) for _ in range(n_br)],
                "w2": rng.standard_normal((d, d)) / np.sqrt(d),
                "a": rng.uniform(0.5, 1.5, size=n_br),
                "b": rng.uniform(-0.5, 0.5, size=n_br),
                "acts": [["gelu", "tanh"][i % 2] for i in range(n_br)],
            })
        data["siaf_layers"] = siaf_layers
        data["act"] = dims.get("act", "gelu")
    elif kind == "NOISE_LEMMA4_LINEAR":
        data["L"] = float(rng.uniform(0.5, 2.0))
        data["theta"] = rng.standard_normal((d, d)) / np.sqrt(d)
        data["eps"] = _zero_colmean_noise(rng, n, d, dims.get("noise_scale", 0.1))
    elif kind == "NOISE_THM5_NONLINEAR_STRICT":
        # inputs straddle the relu kink so the perturbed activation difference
        # has nonzero column means and the bound is strict
        data["Z"] = rng.standard_normal((n, d)) * 0.3
        data["theta"] = rng.standard_normal((d, d)) / np.sqrt(d)
        data["eps"] = _zero_colmean_noise(rng, n, d, dims.get("noise_scale", 0.1))
        data["act"] = "relu"
    elif kind == "NOISE_DIVERSITY_TRIANGLE":
        data["eps"] = _zero_colmean_noise(rng, n, d, dims.get("noise_scale", 0.5))
    return TrialInstance(kind=kind, seed=seed, dims=dict(dims), data=data)


# ---- per-kind evaluation --------------------------------------------------


def _msa_constants(watch: _SpectralWatch, attn, wv_list, wo):
    lam = max(watch.lam_attn(A) for A in attn)
    s = max(watch.s(w) for w in wv_list)
    ups = watch.s(wo)
    return lam, s, ups


def _siaf_constants(watch: _SpectralWatch, layer):
    s = max(watch.s(w) for w in layer["w1"])
    ups = watch.s(layer["w2"])
    lsum = sum(abs(a) * _lip(k) for a, k in zip(layer["a"], layer["acts"]))
    return s, ups, lsum


def _run_siaf(Z, layer):
    return siaf_mlp_forward(Z, layer["w1"], layer["w2"], list(layer["a"]),
                            list(layer["b"]), layer["acts"])


def check_inequality(kind: str, inst: TrialInstance) -> BoundCheck:
    if inst.kind != kind:
        raise ValueError("instance does not match kind")
    watch = _SpectralWatch()
    Z = inst.data["Z"]
    H = inst.dims.get("H", 1)
    info: dict = {}
    strict = kind in STRICT_KINDS
    equality = kind in EQUALITY_KINDS

    if kind == "LEMMA1_WEIGHT":
        W = inst.data["W"]
        lhs = diversity(Z @ W)
        rhs = watch.s(W) * diversity(Z)
    elif kind == "LEMMA1_ACTIVATION":
        act = inst.data["act"]
        from .activations import act_forward
        lhs = diversity(act_forward(act, Z))
        rhs = _lip(act) * diversity(Z)
    elif kind == "LEMMA1_CONVEX":
        a1, a2 = inst.data["alpha"]
        B = inst.data["B"]
        lhs = diversity(a1 * Z + a2 * B)
        rhs = a1 * diversity(Z) + a2 * diversity(B)
    elif kind == "LEMMA1_ATTENTION":
        A = inst.data["A"]
        lam = watch.lam_attn(A)
        lhs = diversity(A @ Z)
        rhs = np.sqrt(lam) * diversity(Z)
        info["lambda_max"] = lam
    elif kind == "LEMMA2_CONCAT_EQ":
        blocks = inst.data["blocks"]
        lhs = diversity(np.concatenate(blocks, axis=1))
        rhs = float(np.sqrt(sum(diversity(b) ** 2 for b in blocks)))
    elif kind == "THM1_SINGLEHEAD":
        A = attention_matrix(Z, inst.data["wq"], inst.data["wk"])
        W = inst.data["W"]
        lam = watch.lam_attn(A)
        s = watch.s(W)
        lhs = diversity(A @ Z @ W)
        rhs = np.sqrt(lam) * s * diversity(Z)
        info["note"] = "rhs omits upsilon_1 (no output projection in this form)"
    elif kind == "THM2_MSA":
        wq, wk, wv, wo = inst.data["msa"]
        out, attn = msa_forward(Z, wq, wk, wv, wo, return_attn=True)
        lam, s, ups = _msa_constants(watch, attn, wv, wo)
        lhs = diversity(out)
        rhs = np.sqrt(lam * H) * s * ups * diversity(Z)
        info["alpha_sqrt_lambda_H"] = np.sqrt(lam * H) * s * ups
        info["alpha_sqrt_lambda_times_H"] = np.sqrt(lam) * H * s * ups
    elif kind == "THM2_MSA_STACK":
        cur = Z
        factor = 0.0
        lam_m = s_m = u_m = 0.0
        for wq, wk, wv, wo in inst.data["layers"]:
            cur, attn = msa_forward(cur, wq, wk, wv, wo, return_attn=True)
            lam, s, ups = _msa_constants(watch, attn, wv, wo)
            lam_m, s_m, u_m = max(lam_m, lam), max(s_m, s), max(u_m, ups)
        depth = len(inst.data["layers"])
        factor = np.sqrt(lam_m * H) * s_m * u_m
        lhs = diversity(cur)
        rhs = factor ** depth * diversity(Z)
        info["factor"] = factor
    elif kind == "THM3_MLP":
        w1, w2, act = inst.data["w1"], inst.data["w2"], inst.data["act"]
        lhs = diversity(siaf_mlp_forward(Z, [w1], w2, [1.0], [0.0], [act]))
        rhs = _lip(act) * watch.s(w1) * watch.s(w2) * diversity(Z)
    elif kind == "THM3_MLP_STACK":
        act = inst.data["act"]
        cur = Z
        s_m = u_m = 0.0
        for w1, w2 in inst.data["layers"]:
            cur = siaf_mlp_forward(cur, [w1], w2, [1.0], [0.0], [act])
            s_m = max(s_m, watch.s(w1))
            u_m = max(u_m, watch.s(w2))
        depth = len(inst.data["layers"])
        lhs = diversity(cur)
        rhs = (_lip(act) * s_m * u_m) ** depth * diversity(Z)
    elif kind == "THM4_AUGMSA":
        wq, wk, wv, wo = inst.data["msa"]
        shortcuts = inst.data["shortcuts"]
        act = inst.data["act"]
        out, attn = aug_msa_forward(Z, wq, wk, wv, wo, shortcuts,
                                    shortcut_activation=act, return_attn=True)
        lam, s, ups = _msa_constants(watch, attn, wv, wo)
        theta = [watch.s(wd) * watch.s(wu) for wd, wu in shortcuts]
        lhs = diversity(out)
        rhs = (np.sqrt(lam * H) * s * ups + 1.0 + _lip(act) * sum(theta)) * diversity(Z)
        info["theta_norms"] = theta
    elif kind == "THM4_AUGMSA_STACK":
        act = inst.data["act"]
        cur = Z
        alpha_m = 0.0
        for (wq, wk, wv, wo), shortcuts in inst.data["layers"]:
            cur, attn = aug_msa_forward(cur, wq, wk, wv, wo, shortcuts,
                                        shortcut_activation=act, return_attn=True)
            lam, s, ups = _msa_constants(watch, attn, wv, wo)
            theta = sum(watch.s(wd) * watch.s(wu) for wd, wu in shortcuts)
            alpha_m = max(alpha_m, np.sqrt(lam * H) * s * ups + 1.0 + _lip(act) * theta)
        depth = len(inst.data["layers"])
        lhs = diversity(cur)
        rhs = alpha_m ** depth * diversity(Z)
    elif kind == "THM7_SIAF":
        s, ups, lsum = _siaf_constants(watch, inst.data)
        lhs = diversity(_run_siaf(Z, inst.data))
        rhs = lsum * s * ups * diversity(Z)
    elif kind == "THM7_SIAF_STACK":
        cur = Z
        factor_m = 0.0
        for layer in inst.data["layers"]:
            cur = _run_siaf(cur, layer)
            s, ups, lsum = _siaf_constants(watch, layer)
            factor_m = max(factor_m, lsum * s * ups)
        depth = len(inst.data["layers"])
        lhs = diversity(cur)
        rhs = factor_m ** depth * diversity(Z)
    elif kind == "THM8_COMBINED_VANILLA":
        act = inst.data["act"]
        cur = Z
        msa_f = 0.0
        for wq, wk, wv, wo in inst.data["msa_layers"]:
            cur, attn = msa_forward(cur, wq, wk, wv, wo, return_attn=True)
            lam, s, ups = _msa_constants(watch, attn, wv, wo)
            msa_f = max(msa_f, np.sqrt(lam * H) * s * ups)
        mlp_f = 0.0
        for w1, w2 in inst.data["mlp_layers"]:
            cur = siaf_mlp_forward(cur, [w1], w2, [1.0], [0.0], [act])
            mlp_f = max(mlp_f, _lip(act) * watch.s(w1) * watch.s(w2))
        p = len(inst.data["msa_layers"])
        q = len(inst.data["mlp_layers"])
        lhs = diversity(cur)
        rhs = msa_f ** p * mlp_f ** q * diversity(Z)
    elif kind == "THM9_COMBINED_AUGMENTED":
        act = inst.data["act"]
        cur = Z
        aug_f = 0.0
        for (wq, wk, wv, wo), shortcuts in inst.data["aug_layers"]:
            cur, attn = aug_msa_forward(cur, wq, wk, wv, wo, shortcuts,
                                        shortcut_activation=act, return_attn=True)
            lam, s, ups = _msa_constants(watch, attn, wv, wo)
            theta = sum(watch.s(wd) * watch.s(wu) for wd, wu in shortcuts)
            aug_f = max(aug_f, np.sqrt(lam * H) * s * ups + 1.0 + _lip(act) * theta)
        siaf_f = 0.0
        for layer in inst.data["siaf_layers"]:
            cur = _run_siaf(cur, layer)
            s, ups, lsum = _siaf_constants(watch, layer)
            siaf_f = max(siaf_f, lsum * s * ups)
        p = len(inst.data["aug_layers"])
        q = len(inst.data["siaf_layers"])
        lhs = diversity(cur)
        rhs = aug_f ** p * siaf_f ** q * diversity(Z)
    elif kind == "NOISE_LEMMA3_MSA":
        wq, wk, wv, wo = inst.data["msa"]
        eps = inst.data["eps"]
        out0, attn0 = msa_forward(Z, wq, wk, wv, wo, return_attn=True)
        out1, attn1 = msa_forward(Z + eps, wq, wk, wv, wo, return_attn=True)
        s = max(watch.s(w) for w in wv)
        ups = watch.s(wo)
        lam_pert = max(watch.lam_attn(A) for A in attn1)
        lam_delta = max(watch.lam_proj(A1 - A0) for A0, A1 in zip(attn0, attn1))
        lhs = diversity(out1 - out0)
        rhs = (np.sqrt(lam_pert * H) * s * ups * np.linalg.norm(eps)
               + np.sqrt(lam_delta * H) * s * ups * diversity(Z))
        info["lambda_perturbed"] = lam_pert
        info["lambda_delta"] = lam_delta
    elif kind == "NOISE_LEMMA4_LINEAR":
        L = inst.data["L"]
        theta = inst.data["theta"]
        eps = inst.data["eps"]
        lhs = diversity(L * (Z + eps) @ theta - L * Z @ theta)
        rhs = L * watch.s(theta) * float(np.linalg.norm(eps))
    elif kind == "NOISE_THM5_NONLINEAR_STRICT":
        theta = inst.data["theta"]
        eps = inst.data["eps"]
        act = inst.data["act"]
        from .activations import act_forward
        D = act_forward(act, (Z + eps) @ theta) - act_forward(act, Z @ theta)
        colmean = float(np.linalg.norm(D.mean(axis=0)))
        lhs = diversity(D)
        rhs = _lip(act) * watch.s(theta) * float(np.linalg.norm(eps))
        info["colmean_norm"] = colmean
        if colmean < 1e-12:
            # construction failed to break the zero-mean condition; strictness unproven
            return BoundCheck(kind, lhs, rhs, rhs - lhs, False, strict,
                              inst.seed, inst.dims, inconclusive=True, info=info)
    elif kind == "NOISE_THM6_AUGMSA":
        wq, wk, wv, wo = inst.data["msa"]
        shortcuts = inst.data["shortcuts"]
        act = inst.data["act"]
        eps = inst.data["eps"]
        out0, attn0 = aug_msa_forward(Z, wq, wk, wv, wo, shortcuts,
                                      shortcut_activation=act, return_attn=True)
        out1, attn1 = aug_msa_forward(Z + eps, wq, wk, wv, wo, shortcuts,
                                      shortcut_activation=act, return_attn=True)
        s = max(watch.s(w) for w in wv)
        ups = watch.s(wo)
        lam_pert = max(watch.lam_attn(A) for A in attn1)
        lam_delta = max(watch.lam_proj(A1 - A0) for A0, A1 in zip(attn0, attn1))
        theta = sum(watch.s(wd) * watch.s(wu) for wd, wu in shortcuts)
        lhs = diversity(out1 - out0)
        rhs = ((1.0 + np.sqrt(lam_pert * H) * s * ups + _lip(act) * theta)
               * np.linalg.norm(eps)
               + np.sqrt(lam_delta * H) * s * ups * diversity(Z))
    elif kind == "NOISE_DIVERSITY_TRIANGLE":
        eps = inst.data["eps"]
        d_eps = diversity(eps)
        lhs = abs(diversity(Z + eps) - diversity(Z))
        rhs = d_eps
        eps_fro = float(np.linalg.norm(eps))
        info["eps_frobenius"] = eps_fro
        info["d_eps"] = d_eps
        # zero-column-mean noise makes d(eps) = ||eps||_F an equality
        info["zero_mean_equality_error"] = abs(d_eps - eps_fro)
    else:
        raise ValueError(f"unknown bound kind {kind!r}")

    lhs = float(lhs)
    rhs = float(rhs)
    slack = rhs - lhs
    if not watch.ok:
        return BoundCheck(kind, lhs, rhs, slack, False, strict, inst.seed,
                          inst.dims, inconclusive=True, info=info)
    if strict:
        passed = slack > 0.0
    elif equality:
        passed = abs(slack) <= TOL_EQ * max(1.0, abs(rhs))
    else:
        passed = slack >= -TOL_INEQ * max(1.0, abs(rhs))
    if kind == "NOISE_DIVERSITY_TRIANGLE":
        passed = passed and info["zero_mean_equality_error"] <= TOL_EQ * max(1.0, rhs)
    return BoundCheck(kind, lhs, rhs, slack, passed, strict, inst.seed,
                      inst.dims, info=info)


# ---- randomized suite -----------------------------------------------------


def sample_dims(kind: str, rng: np.random.Generator) -> dict:
    """Random desk-scale dimensions valid for the kind."""
    H = int(rng.choice([1, 2, 4, 8]))
    dh = int(rng.integers(max(8 // H, 1), max(64 // H, 2) + 1))
    d = H * dh
    dims = {"N": int(rng.integers(4, 33)), "d": d, "H": H}
    if kind in ("LEMMA1_WEIGHT", "THM1_SINGLEHEAD"):
        dims["m"] = int(rng.integers(1, 65))
    if kind == "LEMMA1_ACTIVATION":
        dims["act"] = ["relu", "gelu", "swish", "tanh"][int(rng.integers(0, 4))]
    if kind == "LEMMA1_ATTENTION":
        dims["sinkhorn"] = bool(rng.integers(0, 2))
    if kind in ("THM2_MSA_STACK", "THM3_MLP_STACK", "THM4_AUGMSA_STACK",
                "THM7_SIAF_STACK"):
        dims["depth"] = int(rng.integers(2, 5))
    if kind in ("THM8_COMBINED_VANILLA", "THM9_COMBINED_AUGMENTED"):
        dims["p"] = int(rng.integers(1, 4))
        dims["q"] = int(rng.integers(1, 4))
    if kind in ("THM4_AUGMSA", "THM4_AUGMSA_STACK", "NOISE_THM6_AUGMSA",
                "THM9_COMBINED_AUGMENTED"):
        dims["T"] = int(rng.integers(1, 4))
        dims["r"] = int(rng.choice([r for r in (1, 2, 4) if d % r == 0]))
    if kind in ("THM7_SIAF", "THM7_SIAF_STACK", "THM9_COMBINED_AUGMENTED"):
        dims["n_branches"] = int(rng.integers(1, 4))
    return dims


@dataclass
class TheoryReport:
    checks: list
    summary: dict

    @property
    def failures(self) -> int:
        return sum(1 for c in self.checks if not c.passed and not c.inconclusive)

    @property
    def inconclusive(self) -> int:
        return sum(1 for c in self.checks if c.inconclusive)


def _trial_seed(base_seed: int, kind: str, trial: int) -> int:
    ss = np.random.SeedSequence([base_seed, BOUND_KINDS.index(kind), trial])
    return int(ss.generate_state(1)[0])


def run_trial(kind: str, base_seed: int, trial: int) -> BoundCheck:
    seed = _trial_seed(base_seed, kind, trial)
    dims = sample_dims(kind, np.random.default_rng(seed))
    inst = sample_instance(kind, dims, seed)
    return check_inequality(kind, inst)


def run_suite(kinds=None, trials: int = 100, base_seed: int = 0,
              jsonl_path=None, workers: int = 1, log=None) -> TheoryReport:
    """Execute `trials` randomized checks per kind; aggregate and optionally emit JSONL."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    kinds = list(BOUND_KINDS) if kinds is None else list(kinds)
    for k in kinds:
        if k not in BOUND_KINDS:
            raise ValueError(f"unknown bound kind {k!r}")
    checks: list[BoundCheck] = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        jobs = [(k, base_seed, t) for k in kinds for t in range(trials)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            checks = list(ex.map(_run_trial_star, jobs, chunksize=32))
    else:
        for k in kinds:
            for t in range(trials):
                checks.append(run_trial(k, base_seed, t))
            if log is not None:
                done = [c for c in checks if c.kind == k]
                bad = sum(1 for c in done if not c.passed)
                log(f"{k}: {len(done)} trials, {bad} failures")
    checks.sort(key=lambda c: (c.kind, c.seed))

    summary: dict = {}
    for k in kinds:
        ks = [c for c in checks if c.kind == k]
        fails = [c for c in ks if not c.passed and not c.inconclusive]
        inc = [c for c in ks if c.inconclusive]
        worst = min(ks, key=lambda c: c.slack / max(1.0, abs(c.rhs)))
        summary[k] = {
            "trials": len(ks),
            "failures": len(fails),
            "inconclusive": len(inc),
            "min_relative_slack": worst.slack / max(1.0, abs(worst.rhs)),
            "worst_seed": worst.seed,
        }
    if jsonl_path is not None:
        jsonl_path = Path(jsonl_path)
        jsonl_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = jsonl_path.with_suffix(jsonl_path.suffix + ".tmp")
        with open(tmp, "w") as fh:
            for c in checks:
                fh.write(c.to_json() + "\n")
        tmp.replace(jsonl_path)
    return TheoryReport(checks=checks, summary=summary)


def _run_trial_star(args):
    return run_trial(*args)


# ---- collapse demonstration ----------------------------------------------

COLLAPSE_VARIANTS = ("vanilla-MSA", "AugMSA", "MLP", "SIAF-MLP", "combined")


@dataclass
class DecayCurve:
    variant: str
    layers: list          # layer index 0..depth
    measured: list        # d_M(Z_l)
    bound: list           # product-form theorem bound at layer l
    truncated: bool = False

    def rows(self):
        return list(zip(self.layers, self.measured, self.bound))


def collapse_demo(variant: str, depth: int, dims: dict, seed: int,
                  weight_scale: float = 0.9, shortcut_scale: float = 0.5) -> DecayCurve:
    """Propagate a random Z0 through `depth` fresh modules and record d_M per layer.

    For attention variants the per-layer weights are rescaled at runtime so the
    measured contraction factor sqrt(lambda*H)*s*upsilon_1 equals weight_scale;
    attention matrices are Sinkhorn-projected (doubly stochastic, lambda < 1).
    The AugMSA variant adds bottleneck shortcuts on top of the same base weights.
    """
    if variant not in COLLAPSE_VARIANTS:
        raise ValueError(f"variant must be one of {COLLAPSE_VARIANTS}")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    n, d = dims["N"], dims["d"]
    H = dims.get("H", 1)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, d))
    measured = [diversity(Z)]
    bound = [diversity(Z)]
    truncated = False
    act = dims.get("act", "gelu")
    T = dims.get("T", 1)
    r = dims.get("r", 2)

    use_attention = variant in ("vanilla-MSA", "AugMSA", "combined")
    use_mlp_only = variant in ("MLP", "SIAF-MLP")

    for layer in range(1, depth + 1):
        watch = _SpectralWatch()
        if use_attention:
            wq, wk, wv, wo = _msa_weights(rng, d, H)
            # softmax rows can underflow to exact zeros once features grow
            # large; a tiny floor keeps Sinkhorn applicable (renormalization
            # restores stochasticity, and lambda is measured on the result)
            attn = [sinkhorn(np.maximum(attention_matrix(Z, wq[h], wk[h]), 1e-30), 50)
                    for h in range(H)]
            lam = max(watch.lam_attn(A) for A in attn)
            s = max(watch.s(w) for w in wv)
            ups = watch.s(wo)
            # rescale the output projection so s * ups == weight_scale; the
            # contraction factor sqrt(lam*H)*s*ups then comes from measured lam
            wo = wo * (weight_scale / (s * ups))
            ups = weight_scale / s
            factor = np.sqrt(lam * H) * s * ups
            if variant == "AugMSA" or (variant == "combined" and layer % 2 == 1):
                shortcuts = _shortcut_weights(rng, d, r, T, scale=shortcut_scale)
                theta = sum(watch.s(wd) * watch.s(wu) for wd, wu in shortcuts)
                Z_next = aug_msa_forward(Z, wq, wk, wv, wo, shortcuts,
                                         shortcut_activation=act,
                                         attn_override=attn)
                factor = factor + 1.0 + _lip(act) * theta
            else:
                Z_next = msa_forward(Z, wq, wk, wv, wo, attn_override=attn)
        elif use_mlp_only:
            w1 = rng.standard_normal((d, d)) / np.sqrt(d)
            w2 = rng.standard_normal((d, d)) / np.sqrt(d)
            s1, s2 = watch.s(w1), watch.s(w2)
            current = _lip(act) * s1 * s2
            w2 = w2 * (weight_scale / current)
            s2 = s2 * (weight_scale / current)
            if variant == "SIAF-MLP":
                layer_spec = {"w1": [w1, w1 * 0.7], "w2": w2,
                              "a": np.array([1.0, -1.0]), "b": np.array([0.0, 0.1]),
                              "acts": [act, "tanh"]}
                s, ups, lsum = _siaf_constants(watch, layer_spec)
                Z_next = _run_siaf(Z, layer_spec)
                factor = lsum * s * ups
            else:
                Z_next = siaf_mlp_forward(Z, [w1], w2, [1.0], [0.0], [act])
                factor = _lip(act) * s1 * s2
        else:
            raise AssertionError(variant)

        if not np.all(np.isfinite(Z_next)):
            truncated = True
            break
        Z = Z_next
        measured.append(diversity(Z))
        bound.append(bound[-1] * factor)

    return DecayCurve(variant=variant, layers=list(range(len(measured))),
                      measured=measured, bound=bound, truncated=truncated)
