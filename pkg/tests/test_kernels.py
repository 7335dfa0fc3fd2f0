import importlib
import math
import os
import subprocess
import sys

import numpy as np
import pytest

import foretune.kernels as kernels
from foretune.kernels import _reference

try:
    from foretune.kernels import _speedups
except ImportError:
    _speedups = None

needs_speedups = pytest.mark.skipif(
    _speedups is None, reason="compiled extension not built"
)


def make_problem(n=24, dim=16, n_bins=101, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    chosen = rng.integers(0, n_bins, size=n).astype(np.int64)
    rejected = (chosen + 1 + rng.integers(0, n_bins - 1, size=n)) % n_bins
    rejected = rejected.astype(np.int64)
    ref_margin = rng.normal(scale=0.1, size=n)
    W = rng.normal(scale=0.05, size=(n_bins, dim))
    order = np.arange(n, dtype=np.int64)
    rng.shuffle(order)
    return W, X, chosen, rejected, ref_margin, order


def run_epochs(backend, epochs=2, **kw):
    W, X, chosen, rejected, ref_margin, order = make_problem(**kw)
    W = W.copy()
    step_start = 0
    total = []
    n = order.shape[0]
    group = 2 * 4
    steps_per_epoch = (n + group - 1) // group
    total_steps = epochs * steps_per_epoch
    for _ in range(epochs):
        loss, steps = backend.train_epoch(
            W, X, chosen, rejected, ref_margin, order,
            2, 4, 0.5, 0.3, step_start, total_steps,
        )
        total.append(loss)
        step_start += steps
    return W, total


def test_backend_is_declared():
    assert kernels.BACKEND in ("pure", "compiled")
    if kernels.BACKEND == "compiled":
        assert _speedups is not None
        assert kernels.train_epoch is _speedups.train_epoch
    else:
        assert kernels.train_epoch is _reference.train_epoch


def test_pure_env_forces_fallback():
    code = "import foretune.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, FORETUNE_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode == 0
    assert out.stdout.strip() == "pure"


def test_reference_epoch_matches_naive_simulation():
    W, X, chosen, rejected, ref_margin, order = make_problem(n=10)
    W_ref = W.copy()
    loss, steps = _reference.train_epoch(
        W_ref, X, chosen, rejected, ref_margin, order, 2, 2, 0.7, 0.25, 0, 3
    )

    # independent re-simulation: group of 4, short last group of 2
    W_sim = W.copy()
    expected_loss = 0.0
    groups = [order[0:4], order[4:8], order[8:10]]
    for step, group in enumerate(groups):
        grad = np.zeros_like(W_sim)
        for e in group:
            x = X[e]
            c, r = int(chosen[e]), int(rejected[e])
            m = W_sim[c] @ x - W_sim[r] @ x - ref_margin[e]
            expected_loss += math.log1p(math.exp(-abs(0.7 * m))) + max(0.0, -0.7 * m)
            g = 0.7 / (1.0 + math.exp(0.7 * m))
            grad[c] += g * x
            grad[r] -= g * x
        lr = 0.25 * (1.0 - step / 3)
        W_sim += (lr / len(group)) * grad

    assert steps == 3
    assert loss == pytest.approx(expected_loss, rel=1e-12)
    np.testing.assert_allclose(W_ref, W_sim, rtol=0, atol=1e-12)


def test_mean_pair_loss_matches_direct_softplus():
    W, X, chosen, rejected, ref_margin, order = make_problem(n=8)
    idx = np.array([0, 3, 5], dtype=np.int64)
    got = _reference.mean_pair_loss(W, X, chosen, rejected, ref_margin, idx, 0.4)
    direct = []
    for e in idx:
        m = W[int(chosen[e])] @ X[e] - W[int(rejected[e])] @ X[e] - ref_margin[e]
        direct.append(np.log1p(np.exp(-0.4 * m)))
    assert got == pytest.approx(float(np.mean(direct)), rel=1e-12)


def test_mean_pair_loss_rejects_empty():
    W, X, chosen, rejected, ref_margin, _ = make_problem(n=4)
    with pytest.raises(ValueError):
        _reference.mean_pair_loss(
            W, X, chosen, rejected, ref_margin, np.array([], dtype=np.int64), 0.4
        )


def test_epoch_is_deterministic():
    a, la = run_epochs(_reference)
    b, lb = run_epochs(_reference)
    assert np.array_equal(a, b)
    assert la == lb


def test_lr_decay_reaches_zero_on_the_last_step():
    # with total_steps equal to the step count, the final update applies a
    # zero rate and the last group leaves W unchanged
    W, X, chosen, rejected, ref_margin, order = make_problem(n=8)
    W1 = W.copy()
    _reference.train_epoch(
        W1, X, chosen, rejected, ref_margin, order, 2, 2, 0.5, 0.3, 1, 2
    )
    W2 = W.copy()
    _reference.train_epoch(
        W2, X, chosen, rejected, ref_margin, order[:4], 2, 2, 0.5, 0.3, 1, 2
    )
    # both runs take one full-rate-zero step over the first group; the
    # second group of W1 sees lr 0.3*(1 - 2/2) = 0
    np.testing.assert_array_equal(W1, W2)


def test_split_epochs_equal_one_epoch_at_group_boundary():
    W, X, chosen, rejected, ref_margin, order = make_problem(n=16)
    W_once = W.copy()
    _reference.train_epoch(
        W_once, X, chosen, rejected, ref_margin, order, 2, 4, 0.5, 0.3, 0, 2
    )
    W_twice = W.copy()
    _, s1 = _reference.train_epoch(
        W_twice, X, chosen, rejected, ref_margin, order[:8], 2, 4, 0.5, 0.3, 0, 2
    )
    _reference.train_epoch(
        W_twice, X, chosen, rejected, ref_margin, order[8:], 2, 4, 0.5, 0.3, s1, 2
    )
    np.testing.assert_array_equal(W_once, W_twice)


@needs_speedups
def test_backends_agree_on_weights_and_loss():
    W_c, losses_c = run_epochs(_speedups, epochs=3, n=40, dim=24, seed=7)
    W_p, losses_p = run_epochs(_reference, epochs=3, n=40, dim=24, seed=7)
    np.testing.assert_allclose(W_c, W_p, rtol=0, atol=1e-9)
    for lc, lp in zip(losses_c, losses_p):
        assert lc == pytest.approx(lp, rel=1e-9)


@needs_speedups
def test_backends_agree_on_mean_pair_loss():
    W, X, chosen, rejected, ref_margin, order = make_problem(n=30, seed=3)
    idx = order[:11]
    lc = _speedups.mean_pair_loss(W, X, chosen, rejected, ref_margin, idx, 0.5)
    lp = _reference.mean_pair_loss(W, X, chosen, rejected, ref_margin, idx, 0.5)
    assert lc == pytest.approx(lp, rel=1e-12)


@needs_speedups
def test_compiled_epoch_is_deterministic():
    a, la = run_epochs(_speedups, seed=11)
    b, lb = run_epochs(_speedups, seed=11)
    assert np.array_equal(a, b)
    assert la == lb


def test_training_via_each_backend_reaches_same_losses(monkeypatch):
    # swap the dispatched functions and retrain; curves agree to float noise
    from foretune.dpo import DpoConfig

    from tests.test_dpo import toy_dataset

    def train_with(backend):
        monkeypatch.setattr(kernels, "train_epoch", backend.train_epoch)
        monkeypatch.setattr(kernels, "mean_pair_loss", backend.mean_pair_loss)
        from foretune.dpo import train_toy

        cfg = DpoConfig(beta=0.5, learning_rate=2.0, epochs=3, feature_dim=32)
        return train_toy(toy_dataset(32), cfg)

    if _speedups is None:
        pytest.skip("compiled extension not built")
    r_pure = train_with(_reference)
    r_fast = train_with(_speedups)
    for a, b in zip(r_pure.curve, r_fast.curve):
        assert a.train_loss == pytest.approx(b.train_loss, rel=1e-9)
    np.testing.assert_allclose(
        r_pure.policy.weights, r_fast.policy.weights, rtol=0, atol=1e-9
    )
