"""Behavioral-cloning training loop: Adam on the batch MSE.

Deterministic given the seed: the data order comes from a generator seeded
by it, and dropout masks come from a counter-based Philox stream keyed by
(seed, step), so two runs produce identical parameters.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import model as model_lib
from . import text, tokens
from .checkpoint import Normalizer, PolicyCheckpoint
from .model import ModelConfig, build_model, mse_loss

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, last_loss: float):
        super().__init__(f"loss became non-finite at step {step} (last finite {last_loss:.6f})")
        self.step = step
        self.last_loss = last_loss


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 6000
    batch_size: int = 256
    learning_rate: float = 1e-3
    # Cosine-decay the rate over the last fraction of training; the batch
    # loss otherwise keeps bouncing at desk-scale batch sizes.
    final_lr_fraction: float = 0.1
    decay_fraction: float = 0.3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    log_every: int = 200
    dtype: str = "float32"  # training precision; verification always runs 64-bit
    # Fraction of each batch whose history is collapsed to its final frame.
    # Control bootstraps episodes by repeating the reset frame, a pattern
    # plain segment exports never contain; the demonstrator is memoryless,
    # so the label stays correct under the collapse.
    static_history_fraction: float = 0.25


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def learning_rate_at(step: int, cfg: TrainConfig) -> float:
    """Constant, then cosine decay over the final ``decay_fraction`` of steps."""
    decay_start = int(cfg.steps * (1.0 - cfg.decay_fraction))
    if cfg.decay_fraction <= 0.0 or step < decay_start or cfg.steps <= decay_start:
        return cfg.learning_rate
    progress = (step - decay_start) / (cfg.steps - decay_start)
    floor = cfg.learning_rate * cfg.final_lr_fraction
    return floor + 0.5 * (cfg.learning_rate - floor) * (1.0 + np.cos(np.pi * progress))


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig,
              lr: float | None = None) -> None:
    state.t += 1
    lr = cfg.learning_rate if lr is None else lr
    b1, b2 = cfg.beta1, cfg.beta2
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[name] -= lr * (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_eps)


def dropout_rng(seed: int, step: int) -> np.random.Generator:
    """Counter-based stream: same (seed, step) always gives the same masks."""
    return np.random.Generator(np.random.Philox(key=[seed, step]))


def prepare_arrays(dataset, normalizer: Normalizer, dtype=np.float64):
    """Tokenize once: object tokens, padded text ids, normalized labels."""
    toks = tokens.frame_tokens(dataset.states).astype(dtype)
    ids, mask = text.pad_token_batch([str(t) for t in dataset.instructions])
    labels = normalizer.apply(np.asarray(dataset.actions, dtype=np.float64)).astype(dtype)
    return toks, ids, mask.astype(dtype), labels


def train(dataset, model_config: ModelConfig = ModelConfig(),
          train_config: TrainConfig = TrainConfig(), seed: int = 0,
          ) -> tuple[PolicyCheckpoint, list[tuple[int, float]]]:
    """Fit a policy; returns (checkpoint, loss curve as (step, loss) pairs)."""
    n = len(dataset)
    if n < 1:
        raise ValueError("empty dataset")
    dtype = np.dtype(train_config.dtype)
    normalizer = Normalizer.fit(dataset.actions)
    toks, ids, mask, labels = prepare_arrays(dataset, normalizer, dtype)
    m = build_model(model_config)
    params = m.init_params(np.random.default_rng([seed, 0]))
    params = {k: v.astype(dtype) for k, v in params.items()}
    order_rng = np.random.default_rng([seed, 1])
    adam = AdamState()
    batch_size = min(train_config.batch_size, n)
    curve: list[tuple[int, float]] = []
    last_finite = float("nan")
    perm = order_rng.permutation(n)
    cursor = 0
    started = time.time()
    for step in range(train_config.steps):
        if cursor + batch_size > n:
            perm = order_rng.permutation(n)
            cursor = 0
        idx = perm[cursor:cursor + batch_size]
        cursor += batch_size
        rng = dropout_rng(seed, step)
        batch_tokens = toks[idx]
        if train_config.static_history_fraction > 0.0:
            pick = rng.random(len(idx)) < train_config.static_history_fraction
            if pick.any():
                batch_tokens = batch_tokens.copy()
                batch_tokens[pick] = batch_tokens[pick][:, -1:]
        batch = {"tokens": batch_tokens, "ids": ids[idx], "mask": mask[idx]}
        pred, cache = m.forward(params, batch, drop_rng=rng)
        loss, dpred = mse_loss(pred, labels[idx])
        if not np.isfinite(loss):
            raise TrainingDivergedError(step, last_finite)
        last_finite = loss
        grads = m.backward(params, cache, dpred)
        adam_step(params, grads, adam, train_config,
                  lr=learning_rate_at(step, train_config))
        if step % train_config.log_every == 0 or step == train_config.steps - 1:
            curve.append((step, loss))
            log.info("step %d loss %.5f (%.1fs)", step, loss, time.time() - started)
    ckpt = PolicyCheckpoint(config=model_config, params=params, normalizer=normalizer,
                            train_steps=train_config.steps, train_seed=seed,
                            meta={"examples": n, "batch_size": batch_size,
                                  "final_loss": last_finite})
    return ckpt, curve
