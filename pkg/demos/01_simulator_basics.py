"""Tour of the simulator: reset, step, determinism, and rendering.

Run from the repo root:  python demos/01_simulator_basics.py
Writes board.png next to this script.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from langboard import sim

# Randomized reset, fully determined by the seed.
state = sim.reset(seed=7)
print(f"board is {sim.BOARD_W:.4f} x {sim.BOARD_H:.4f} m with {sim.NUM_BLOCKS} blocks")
for spec in sim.BLOCKS:
    x, y, theta = state.block_poses[spec.id]
    print(f"  {spec.id}: {spec.name:<15} at ({x:.3f}, {y:.3f})")
print("end effector at", state.ee_pos)

# Same seed, same board, bit for bit.
again = sim.reset(seed=7)
print("reset determinism:", np.array_equal(state.block_poses, again.block_poses))

# Drive the EE around; actions are delta setpoints, clamped to 3 cm per tick.
rng = np.random.default_rng(0)
trajectory = [state]
for _ in range(50):
    trajectory.append(sim.step(trajectory[-1], rng.uniform(-0.03, 0.03, 2)))
final = trajectory[-1]
print(f"after 50 ticks: tick={final.tick}, EE at {np.round(final.ee_pos, 3)}")
print("all blocks still on the board:",
      bool((final.block_poses[:, :2] >= 0).all()
           and (final.block_poses[:, 0] <= sim.BOARD_W).all()
           and (final.block_poses[:, 1] <= sim.BOARD_H).all()))

# The 26-dim observation vector: (x, y, theta) per block then the EE point.
vec = sim.state_vector(final)
print("state vector length:", len(vec))

# Deterministic top-down render (320x180 RGB), for the UI and debugging.
image = sim.render(final)
out = Path(__file__).with_name("board.png")
Image.fromarray(image).save(out)
print("wrote", out)
