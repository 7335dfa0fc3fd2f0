"""Pure numpy reference kernels.

The margin of a pair under the linear-softmax policy reduces to a difference
of two logits minus the frozen reference margin: the log-normalizer is
shared by the chosen and rejected bins and cancels.  Consequently each
example's gradient touches exactly two weight rows, scaled by the feature
vector.

Loss is softplus(-beta * margin); both softplus and sigmoid are evaluated
with the usual overflow-safe branches.
"""

from __future__ import annotations

import math

import numpy as np


def _softplus(t: float) -> float:
    if t > 0.0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


def _sigmoid(t: float) -> float:
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def train_epoch(
    W: np.ndarray,
    X: np.ndarray,
    chosen: np.ndarray,
    rejected: np.ndarray,
    ref_margin: np.ndarray,
    order: np.ndarray,
    batch_size: int,
    grad_accumulation: int,
    beta: float,
    lr0: float,
    step_start: int,
    total_steps: int,
) -> tuple[float, int]:
    """One epoch of accumulated SGD over `order`, updating W in place.

    Each optimizer step consumes batch_size * grad_accumulation examples
    (fewer for the final short group), averages their gradients, and applies
    the linearly decayed rate lr0 * (1 - t / total_steps).
    """
    n = int(order.shape[0])
    group_size = batch_size * grad_accumulation
    grad = np.zeros_like(W)
    loss_sum = 0.0
    steps = 0
    pos = 0
    while pos < n:
        group = order[pos : pos + group_size]
        gn = int(group.shape[0])
        grad[:] = 0.0
        for e in group:
            x = X[e]
            c = int(chosen[e])
            r = int(rejected[e])
            m = float(np.dot(W[c], x)) - float(np.dot(W[r], x)) - float(ref_margin[e])
            bm = beta * m
            loss_sum += _softplus(-bm)
            g = beta * _sigmoid(-bm)
            grad[c] += g * x
            grad[r] -= g * x
        lr = lr0 * (1.0 - (step_start + steps) / total_steps)
        W += (lr / gn) * grad
        steps += 1
        pos += gn
    return loss_sum, steps


def mean_pair_loss(
    W: np.ndarray,
    X: np.ndarray,
    chosen: np.ndarray,
    rejected: np.ndarray,
    ref_margin: np.ndarray,
    indices: np.ndarray,
    beta: float,
) -> float:
    if int(indices.shape[0]) == 0:
        raise ValueError("mean_pair_loss over zero examples")
    loss_sum = 0.0
    for e in indices:
        x = X[e]
        c = int(chosen[e])
        r = int(rejected[e])
        m = float(np.dot(W[c], x)) - float(np.dot(W[r], x)) - float(ref_margin[e])
        loss_sum += _softplus(-beta * m)
    return loss_sum / int(indices.shape[0])
