"""Language-conditioned behavioral-cloning policies."""

from __future__ import annotations

import numpy as np

from .. import sim
from . import nn, text, tokens  # noqa: F401
from .checkpoint import DegenerateDataError, Normalizer, PolicyCheckpoint
from .gradcheck import GradCheckReport, grad_check
from .model import (ConcatMlpModel, InferenceError, LavaModel, ModelConfig,
                    build_model, make_batch, mse_loss)
from .training import TrainConfig, TrainingDivergedError, train

__all__ = [
    "ConcatMlpModel", "DegenerateDataError", "GradCheckReport", "InferenceError",
    "LavaModel", "ModelConfig", "Normalizer", "PolicyCheckpoint", "TrainConfig",
    "TrainingDivergedError", "TrainedPolicy", "build_model", "forward",
    "grad_check", "make_batch", "mse_loss", "train",
]


def forward(history: np.ndarray, instruction: str, checkpoint: PolicyCheckpoint,
            config: sim.SimConfig = sim.DEFAULT_CONFIG) -> np.ndarray:
    """Action in meters for one (state history, instruction) pair.

    Runs the network at 64-bit, de-normalizes with the checkpoint stats,
    and clamps to the action bound. Raises InferenceError naming the first
    stage that produced a non-finite value.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.ndim == 1:
        history = np.tile(history, (checkpoint.config.seqlen, 1))
    m = build_model(checkpoint.config)
    batch = make_batch(history[None], [instruction])
    pred, cache = m.forward(checkpoint.params, batch, drop_rng=None)
    for stage, value in cache["stages"].items():
        if not np.isfinite(value).all():
            raise InferenceError(stage)
    action = checkpoint.normalizer.invert(pred[0])
    return np.clip(action, -config.max_delta, config.max_delta)


class TrainedPolicy:
    """Benchmark/guidance adapter around a checkpoint (stateless otherwise)."""

    def __init__(self, checkpoint: PolicyCheckpoint,
                 config: sim.SimConfig = sim.DEFAULT_CONFIG):
        self.checkpoint = checkpoint
        self.config = config
        self._model = build_model(checkpoint.config)
        self._text_cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def reset(self) -> None:
        pass

    def act(self, history: np.ndarray, instruction: str) -> np.ndarray:
        cached = self._text_cache.get(instruction)
        if cached is None:
            ids, mask = text.pad_token_batch([instruction])
            cached = self._text_cache[instruction] = (ids, mask)
        ids, mask = cached
        batch = {
            "tokens": tokens.frame_tokens(np.asarray(history, dtype=np.float64))[None],
            "ids": ids,
            "mask": mask,
        }
        pred, _ = self._model.forward(self.checkpoint.params, batch, drop_rng=None)
        action = self.checkpoint.normalizer.invert(pred[0])
        return np.clip(action, -self.config.max_delta, self.config.max_delta)
