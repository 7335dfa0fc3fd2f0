"""DPO objective and a desk-scale trainer over a toy policy.

The loss is the pairwise logistic form: with margin
m = (chosen_theta - chosen_ref) - (rejected_theta - rejected_ref),
loss = -log sigmoid(beta * m), so an equal-margin pair costs ln 2 and the
gradient pushes probability mass from the rejected completion's bin toward
the chosen one's.

The toy policy is a linear-softmax categorical distribution over 101
forecast bins (0.00 through 1.00) on top of a hashed bag-of-words feature
vector.  Log-probabilities and gradients are exact, every pair's gradient
touches exactly two weight rows, and training at desk scale is
reproducible bit for bit under a fixed seed and backend.  Nothing here
emulates the full-size fine-tune; this proves the optimization math only.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import (
    EmptyDatasetError,
    NoForecastFoundError,
    NonFiniteInputError,
    NonFiniteLossError,
    OutOfRangeForecastError,
)
from .parsing import parse
from .rerank import DpoExample, load_dataset
from .stats import ForecastRecord
from .storage import atomic_write_text, dumps_canonical, write_manifest
from .text import tokens

import logging
import random

log = logging.getLogger(__name__)

N_BINS = 101
BIN_VALUES = np.arange(N_BINS, dtype=np.float64) / 100.0
# offsets of the bins above 0.5, used to pair bins symmetric about the center
_HALF_SPAN = np.arange(1, 51, dtype=np.float64) / 100.0

OPTIMIZER_SGD = "sgd"
OPTIMIZER_ADAM = "adam"


@dataclass(frozen=True)
class DpoConfig:
    beta: float = 0.1
    learning_rate: float = 5e-5
    epochs: int = 1
    batch_size: int = 2
    grad_accumulation: int = 4
    seed: int = 0
    feature_dim: int = 64
    validation_fraction: float = 0.1
    plateau_tolerance: float = 0.005
    optimizer: str = OPTIMIZER_SGD

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1 or self.grad_accumulation < 1:
            raise ValueError("batch_size and grad_accumulation must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.optimizer not in (OPTIMIZER_SGD, OPTIMIZER_ADAM):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_record(self) -> dict:
        return {
            "beta": self.beta,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "grad_accumulation": self.grad_accumulation,
            "seed": self.seed,
            "feature_dim": self.feature_dim,
            "validation_fraction": self.validation_fraction,
            "plateau_tolerance": self.plateau_tolerance,
            "optimizer": self.optimizer,
        }


@dataclass(frozen=True)
class PolicyLogProbs:
    chosen_theta: float
    rejected_theta: float
    chosen_ref: float
    rejected_ref: float

    def margin(self) -> float:
        return (self.chosen_theta - self.chosen_ref) - (
            self.rejected_theta - self.rejected_ref
        )


def _check_finite(lp: PolicyLogProbs, beta: float) -> None:
    values = (lp.chosen_theta, lp.rejected_theta, lp.chosen_ref, lp.rejected_ref, beta)
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteInputError(f"non-finite DPO inputs: {values}")


def _softplus(t: float) -> float:
    if t > 0.0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


def _sigmoid(t: float) -> float:
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def dpo_loss(lp: PolicyLogProbs, beta: float) -> float:
    """-log sigmoid(beta * margin); ln 2 at zero margin."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    _check_finite(lp, beta)
    return _softplus(-beta * lp.margin())


def dpo_grad(lp: PolicyLogProbs, beta: float) -> tuple[float, float]:
    """(d loss / d chosen_theta, d loss / d rejected_theta).

    The frozen reference terms receive zero gradient by construction.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    _check_finite(lp, beta)
    g = beta * _sigmoid(-beta * lp.margin())
    return -g, g


def featurize(text: str, dim: int) -> np.ndarray:
    """Hashed bag-of-words over stopword-filtered tokens: dim-1 signed
    buckets, L2-normalized, plus a constant bias slot.  Hash is keyed on
    token bytes only, so features are stable across processes and
    platforms."""
    if dim < 2:
        raise ValueError("feature_dim must be >= 2")
    vec = np.zeros(dim, dtype=np.float64)
    for token in tokens(text):
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=5).digest()
        bucket = int.from_bytes(digest[:4], "little") % (dim - 1)
        vec[bucket] += 1.0 if digest[4] & 1 else -1.0
    norm = math.sqrt(float(np.dot(vec[: dim - 1], vec[: dim - 1])))
    if norm > 0.0:
        vec[: dim - 1] /= norm
    vec[dim - 1] = 1.0
    return vec


def bin_for_probability(p: float) -> int:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return int(round(p * 100.0))


class ToyPolicy:
    """Linear-softmax categorical policy over the 101 forecast bins."""

    def __init__(self, feature_dim: int, weights: np.ndarray | None = None):
        if weights is None:
            weights = np.zeros((N_BINS, feature_dim), dtype=np.float64)
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.shape != (N_BINS, feature_dim):
            raise ValueError(f"weights shape {weights.shape} != ({N_BINS}, {feature_dim})")
        self.feature_dim = feature_dim
        self.weights = weights

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x

    def log_probs(self, x: np.ndarray) -> np.ndarray:
        z = self.logits(x)
        zmax = float(np.max(z))
        lse = zmax + math.log(float(np.sum(np.exp(z - zmax))))
        return z - lse

    def distribution(self, x: np.ndarray) -> np.ndarray:
        p = np.exp(self.log_probs(x))
        return p / float(np.sum(p))

    def log_prob(self, x: np.ndarray, bin_index: int) -> float:
        return float(self.log_probs(x)[bin_index])

    def forecast(self, x: np.ndarray) -> float:
        """Expected bin value; exactly 0.5 at zero initialization.

        Bins are paired symmetrically about the center so any symmetric
        distribution (the uniform one included) cancels term by term
        instead of leaving float summation residue.
        """
        p = self.distribution(x)
        return 0.5 + float(np.dot(p[51:] - p[49::-1], _HALF_SPAN))

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.feature_dim, self.weights.copy())

    def save(self, path: str | Path) -> None:
        payload = {
            "feature_dim": self.feature_dim,
            "n_bins": N_BINS,
            "weights": self.weights.tolist(),
        }
        atomic_write_text(Path(path), dumps_canonical(payload) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ToyPolicy":
        import json

        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(payload["feature_dim"], np.array(payload["weights"], dtype=np.float64))


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None


@dataclass(frozen=True)
class TrainResult:
    policy: ToyPolicy
    reference: ToyPolicy
    curve: list[EpochStats]
    plateau_epoch: int | None
    config: DpoConfig
    usable_examples: int
    skipped_examples: int
    backend: str = field(default_factory=lambda: kernels.BACKEND)


def prepare_examples(
    examples: Sequence[DpoExample], feature_dim: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """(X, chosen_bins, rejected_bins, skipped).  Examples whose completions
    do not parse to forecasts are skipped with a warning."""
    rows: list[np.ndarray] = []
    chosen: list[int] = []
    rejected: list[int] = []
    skipped = 0
    for ex in examples:
        try:
            pc = parse(ex.chosen_completion).probability
            pr = parse(ex.rejected_completion).probability
        except (NoForecastFoundError, OutOfRangeForecastError) as exc:
            skipped += 1
            log.warning("skipping unusable pair %s: %s", ex.metadata.get("question_id"), exc)
            continue
        rows.append(featurize(ex.prompt, feature_dim))
        chosen.append(bin_for_probability(pc))
        rejected.append(bin_for_probability(pr))
    if not rows:
        raise EmptyDatasetError("no usable preference pairs after parsing")
    X = np.ascontiguousarray(np.stack(rows), dtype=np.float64)
    return X, np.array(chosen, dtype=np.int64), np.array(rejected, dtype=np.int64), skipped


def _reference_margins(
    reference: ToyPolicy, X: np.ndarray, chosen: np.ndarray, rejected: np.ndarray
) -> np.ndarray:
    # z_ref[c] - z_ref[r] per example; the log-normalizer cancels.
    zc = np.einsum("ij,ij->i", reference.weights[chosen], X)
    zr = np.einsum("ij,ij->i", reference.weights[rejected], X)
    return np.ascontiguousarray(zc - zr, dtype=np.float64)


def _adam_epoch(
    W: np.ndarray,
    X: np.ndarray,
    chosen: np.ndarray,
    rejected: np.ndarray,
    ref_margin: np.ndarray,
    order: np.ndarray,
    cfg: DpoConfig,
    state: dict,
    total_steps: int,
) -> tuple[float, int]:
    # Adaptive-moment mode runs on the pure path only: momentum buffers make
    # the sparse two-row trick inapplicable and speed is not the point here.
    b1, b2, eps = 0.9, 0.999, 1e-8
    group_size = cfg.batch_size * cfg.grad_accumulation
    loss_sum = 0.0
    steps = 0
    pos = 0
    n = order.shape[0]
    while pos < n:
        group = order[pos : pos + group_size]
        gn = int(group.shape[0])
        grad = np.zeros_like(W)
        for e in group:
            x = X[e]
            c = int(chosen[e])
            r = int(rejected[e])
            m = float(np.dot(W[c], x)) - float(np.dot(W[r], x)) - float(ref_margin[e])
            bm = cfg.beta * m
            loss_sum += _softplus(-bm)
            g = cfg.beta * _sigmoid(-bm)
            grad[c] -= g * x  # ascent sign: grad holds d loss / d W
            grad[r] += g * x
        grad /= gn
        state["t"] += 1
        t = state["t"]
        state["m"] = b1 * state["m"] + (1.0 - b1) * grad
        state["v"] = b2 * state["v"] + (1.0 - b2) * grad * grad
        mhat = state["m"] / (1.0 - b1**t)
        vhat = state["v"] / (1.0 - b2**t)
        lr = cfg.learning_rate * (1.0 - (state["lr_step"]) / total_steps)
        state["lr_step"] += 1
        W -= lr * mhat / (np.sqrt(vhat) + eps)
        steps += 1
        pos += gn
    return loss_sum, steps


def train_toy(
    dataset: Sequence[DpoExample] | str | Path, cfg: DpoConfig
) -> TrainResult:
    """Train the toy policy on a preference dataset.

    The reference policy is a frozen copy of the initialization.  A seeded
    validation split (validation_fraction of the data) drives plateau
    detection: the plateau flag is raised at the first epoch whose relative
    validation improvement falls below plateau_tolerance.  With epochs = 0
    the returned policy equals the initialization.
    """
    if isinstance(dataset, (str, Path)):
        examples: Sequence[DpoExample] = load_dataset(dataset)
    else:
        examples = dataset
    X, chosen, rejected, skipped = prepare_examples(examples, cfg.feature_dim)
    n = X.shape[0]

    policy = ToyPolicy(cfg.feature_dim)
    reference = policy.copy()
    ref_margin = _reference_margins(reference, X, chosen, rejected)

    rng = random.Random(cfg.seed)
    perm = list(range(n))
    rng.shuffle(perm)
    n_val = int(n * cfg.validation_fraction)
    val_idx = np.array(sorted(perm[:n_val]), dtype=np.int64)
    train_idx = sorted(perm[n_val:])
    if not train_idx:
        raise EmptyDatasetError("validation split left no training examples")

    group = cfg.batch_size * cfg.grad_accumulation
    steps_per_epoch = (len(train_idx) + group - 1) // group
    total_steps = max(1, cfg.epochs * steps_per_epoch)

    adam_state = {
        "m": np.zeros_like(policy.weights),
        "v": np.zeros_like(policy.weights),
        "t": 0,
        "lr_step": 0,
    }
    curve: list[EpochStats] = []
    plateau_epoch: int | None = None
    prev_val: float | None = None
    step_start = 0
    for epoch in range(1, cfg.epochs + 1):
        order_list = list(train_idx)
        rng.shuffle(order_list)
        order = np.array(order_list, dtype=np.int64)
        if cfg.optimizer == OPTIMIZER_SGD:
            loss_sum, steps = kernels.train_epoch(
                policy.weights, X, chosen, rejected, ref_margin, order,
                cfg.batch_size, cfg.grad_accumulation, cfg.beta,
                cfg.learning_rate, step_start, total_steps,
            )
        else:
            loss_sum, steps = _adam_epoch(
                policy.weights, X, chosen, rejected, ref_margin, order,
                cfg, adam_state, total_steps,
            )
        step_start += steps
        train_loss = loss_sum / len(train_idx)
        val_loss = None
        if val_idx.shape[0] > 0:
            val_loss = float(
                kernels.mean_pair_loss(
                    policy.weights, X, chosen, rejected, ref_margin, val_idx, cfg.beta
                )
            )
        if not math.isfinite(train_loss) or (
            val_loss is not None and not math.isfinite(val_loss)
        ):
            raise NonFiniteLossError(
                f"non-finite loss at epoch {epoch}: train={train_loss} val={val_loss}"
            )
        curve.append(EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss))
        watched = val_loss if val_loss is not None else train_loss
        if prev_val is not None and plateau_epoch is None:
            improvement = (prev_val - watched) / abs(prev_val) if prev_val != 0 else 0.0
            if improvement < cfg.plateau_tolerance:
                plateau_epoch = epoch
        prev_val = watched

    return TrainResult(
        policy=policy,
        reference=reference,
        curve=curve,
        plateau_epoch=plateau_epoch,
        config=cfg,
        usable_examples=n,
        skipped_examples=skipped,
        backend=kernels.BACKEND if cfg.optimizer == OPTIMIZER_SGD else "pure",
    )


def write_training_report(result: TrainResult, path: str | Path) -> None:
    """Line-delimited report: config echo, one line per epoch, final line
    with the plateau epoch.  A sidecar manifest covers the bytes."""
    lines = [
        dumps_canonical(
            {
                "type": "config",
                "backend": result.backend,
                "usable_examples": result.usable_examples,
                "skipped_examples": result.skipped_examples,
                **result.config.to_record(),
            }
        )
    ]
    for es in result.curve:
        lines.append(
            dumps_canonical(
                {
                    "type": "epoch",
                    "epoch": es.epoch,
                    "train_loss": es.train_loss,
                    "val_loss": es.val_loss,
                }
            )
        )
    lines.append(
        dumps_canonical({"type": "final", "plateau_epoch": result.plateau_epoch})
    )
    atomic_write_text(Path(path), "".join(line + "\n" for line in lines))
    write_manifest(Path(path), count=len(lines))


def policy_forecasts(
    policy: ToyPolicy,
    prompts: Mapping[str, str],
    outcomes: Mapping[str, int],
    model_tag: str,
) -> list[ForecastRecord]:
    """Score stored prompts with the policy's expected-value forecast."""
    records = []
    for question_id in sorted(prompts):
        if question_id not in outcomes:
            continue
        x = featurize(prompts[question_id], policy.feature_dim)
        records.append(
            ForecastRecord(
                question_id=question_id,
                probability=policy.forecast(x),
                outcome=outcomes[question_id],
                model_tag=model_tag,
            )
        )
    return records
