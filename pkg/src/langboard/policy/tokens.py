"""Object-token view of board states.

Each frame becomes 9 tokens: one per block carrying normalized position,
rotation (as sin/cos), and color/shape one-hots, plus one end-effector
token flagged by the final feature. Positions are normalized to [-1, 1] by
the board half-extents. There is no positional encoding over tokens, so
anything consuming them is permutation invariant over blocks by
construction.
"""

from __future__ import annotations

import numpy as np

from .. import sim

TOKENS_PER_FRAME = sim.NUM_BLOCKS + 1
TOKEN_DIM = 4 + len(sim.COLORS) + len(sim.SHAPES) + 1  # pose + one-hots + ee flag

_COLOR_ONEHOT = np.zeros((sim.NUM_BLOCKS, len(sim.COLORS)))
_SHAPE_ONEHOT = np.zeros((sim.NUM_BLOCKS, len(sim.SHAPES)))
for _b in sim.BLOCKS:
    _COLOR_ONEHOT[_b.id, _b.color_index] = 1.0
    _SHAPE_ONEHOT[_b.id, _b.shape_index] = 1.0

_HALF = np.array([sim.BOARD_W / 2.0, sim.BOARD_H / 2.0])


def normalize_xy(xy: np.ndarray) -> np.ndarray:
    return (xy - _HALF) / _HALF


def frame_tokens(states: np.ndarray) -> np.ndarray:
    """(..., 26) state vectors -> (..., 9, TOKEN_DIM) object tokens."""
    states = np.asarray(states, dtype=np.float64)
    lead = states.shape[:-1]
    poses = states[..., :24].reshape(*lead, sim.NUM_BLOCKS, 3)
    ee = states[..., 24:26]
    out = np.zeros((*lead, TOKENS_PER_FRAME, TOKEN_DIM))
    out[..., :sim.NUM_BLOCKS, 0:2] = normalize_xy(poses[..., 0:2])
    out[..., :sim.NUM_BLOCKS, 2] = np.sin(poses[..., 2])
    out[..., :sim.NUM_BLOCKS, 3] = np.cos(poses[..., 2])
    out[..., :sim.NUM_BLOCKS, 4:4 + len(sim.COLORS)] = _COLOR_ONEHOT
    out[..., :sim.NUM_BLOCKS, 4 + len(sim.COLORS):4 + len(sim.COLORS) + len(sim.SHAPES)] = _SHAPE_ONEHOT
    out[..., sim.NUM_BLOCKS, 0:2] = normalize_xy(ee)
    out[..., sim.NUM_BLOCKS, TOKEN_DIM - 1] = 1.0
    return out
