"""Checkpoint container: parameters, action-normalization stats, config.

Serialized as a single ``.npz`` with a JSON config header and named
tensors; version-tagged so stale files fail loudly.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelConfig

CHECKPOINT_FORMAT = 1


class CheckpointError(RuntimeError):
    pass


class DegenerateDataError(ValueError):
    """Normalization statistics are unusable (zero spread on a dimension)."""


@dataclass
class Normalizer:
    """Per-dimension affine map taking action labels to zero mean, unit std."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, actions: np.ndarray) -> np.ndarray:
        return (actions - self.mean) / self.std

    def invert(self, normalized: np.ndarray) -> np.ndarray:
        return normalized * self.std + self.mean

    @classmethod
    def fit(cls, actions: np.ndarray) -> "Normalizer":
        actions = np.asarray(actions, dtype=np.float64)
        if actions.ndim != 2 or len(actions) == 0:
            raise DegenerateDataError("need a nonempty (N, 2) action array")
        mean = actions.mean(axis=0)
        std = actions.std(axis=0)
        if (std <= 0).any():
            raise DegenerateDataError(f"zero std on action dimension(s) {np.where(std <= 0)[0].tolist()}")
        return cls(mean=mean, std=std)


@dataclass
class PolicyCheckpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    normalizer: Normalizer
    train_steps: int = 0
    train_seed: int = 0
    meta: dict = field(default_factory=dict)

    def save(self, path) -> Path:
        path = Path(path)
        header = json.dumps({
            "format": CHECKPOINT_FORMAT,
            "config": json.loads(self.config.to_json()),
            "train_steps": self.train_steps,
            "train_seed": self.train_seed,
            "meta": self.meta,
        }, sort_keys=True)
        arrays = {f"p:{k}": v for k, v in self.params.items()}
        np.savez_compressed(path, header=np.array(header),
                            action_mean=self.normalizer.mean,
                            action_std=self.normalizer.std, **arrays)
        if path.suffix != ".npz":  # np.savez appends .npz
            Path(str(path) + ".npz").rename(path)
        return path

    @classmethod
    def load(cls, path) -> "PolicyCheckpoint":
        try:
            with np.load(path, allow_pickle=False) as data:
                header = json.loads(str(data["header"]))
                if header.get("format") != CHECKPOINT_FORMAT:
                    raise CheckpointError(
                        f"{path}: checkpoint format {header.get('format')} != {CHECKPOINT_FORMAT}")
                params = {k[2:]: data[k] for k in data.files if k.startswith("p:")}
                normalizer = Normalizer(mean=data["action_mean"], std=data["action_std"])
                return cls(config=ModelConfig(**header["config"]), params=params,
                           normalizer=normalizer, train_steps=header["train_steps"],
                           train_seed=header["train_seed"], meta=header.get("meta", {}))
        except (KeyError, json.JSONDecodeError, zipfile.BadZipFile) as e:
            raise CheckpointError(f"{path}: not a readable checkpoint: {e}") from e

    def hash(self) -> str:
        """Content hash over config and parameter bytes (stable across saves)."""
        digest = hashlib.sha256()
        digest.update(self.config.to_json().encode())
        digest.update(self.normalizer.mean.tobytes())
        digest.update(self.normalizer.std.tobytes())
        for name in sorted(self.params):
            digest.update(name.encode())
            digest.update(self.params[name].tobytes())
        return digest.hexdigest()[:16]
