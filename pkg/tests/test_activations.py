import numpy as np
import pytest

from divkit.activations import (ACTIVATION_KINDS, ActivationSpec, act_derivative,
                                act_forward, lipschitz_estimate, make_spec)


def test_forward_reference_values():
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    assert np.allclose(act_forward("relu", x), [0, 0, 0, 0.5, 2.0])
    assert np.allclose(act_forward("tanh", x), np.tanh(x))
    assert np.allclose(act_forward("identity", x), x)
    # gelu(0)=0, gelu is odd-symmetric about the sign flip of 0.5x(1+erf)
    g = act_forward("gelu", x)
    assert g[2] == 0.0
    assert np.allclose(g[-1], 2.0 * 0.9772498680518208, rtol=1e-9)  # x*Phi(x)
    s = act_forward("swish", x)
    assert np.allclose(s, x / (1.0 + np.exp(-x)))


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.uniform(-5, 5, size=500)
    h = 1e-6
    for kind in ACTIVATION_KINDS:
        if kind == "relu":
            x_safe = x[np.abs(x) > 1e-3]
        else:
            x_safe = x
        numeric = (act_forward(kind, x_safe + h) - act_forward(kind, x_safe - h)) / (2 * h)
        assert np.max(np.abs(act_derivative(kind, x_safe) - numeric)) < 1e-7


def test_lipschitz_exact_for_piecewise_linear():
    assert lipschitz_estimate("relu") == 1.0
    assert lipschitz_estimate("identity") == 1.0


def test_lipschitz_upper_bounds_known_suprema():
    # known derivative maxima: gelu ~1.1289, swish ~1.0998, tanh 1
    assert 1.1289 <= lipschitz_estimate("gelu") <= 1.16
    assert 1.0998 <= lipschitz_estimate("swish") <= 1.13
    assert 1.0 <= lipschitz_estimate("tanh") <= 1.02


def test_lipschitz_is_valid_bound_on_random_pairs():
    rng = np.random.default_rng(1)
    for kind in ACTIVATION_KINDS:
        L = lipschitz_estimate(kind)
        a = rng.uniform(-8, 8, size=1000)
        b = rng.uniform(-8, 8, size=1000)
        lhs = np.abs(act_forward(kind, a) - act_forward(kind, b))
        assert np.all(lhs <= L * np.abs(a - b) + 1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        ActivationSpec(kind="nope", lipschitz=1.0)
    with pytest.raises(ValueError):
        ActivationSpec(kind="relu", lipschitz=0.0)
    spec = make_spec("gelu")
    assert spec.kind == "gelu" and spec.lipschitz > 1.0


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        act_forward("softplus", np.zeros(3))
    with pytest.raises(ValueError):
        act_derivative("softplus", np.zeros(3))
