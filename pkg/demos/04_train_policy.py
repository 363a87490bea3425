"""Language-conditioned behavioral cloning, small enough to watch.

Trains the cross-attention policy on a small corpus for a few hundred steps
(enough to see the loss fall well below the 2.0 start), checks the gradient
implementation against finite differences, and saves a loss-curve plot.

A benchmark-strength checkpoint wants a ~20k-example corpus and several
thousand steps; see README or `langboard train`.
"""

from pathlib import Path

import numpy as np

from langboard import datastore, expert
from langboard.policy import (ModelConfig, TrainConfig, grad_check, make_batch,
                              train)


class MemStore:
    def __init__(self, episodes):
        self.by_id = {e.id: e for e in episodes}

    def load(self, episode_id):
        return self.by_id[episode_id]


episodes, demos = expert.generate_corpus(12, seed=5)
dataset = datastore.export_training_set(MemStore(episodes), demos)
print(f"training on {len(dataset)} examples")

checkpoint, curve = train(dataset, ModelConfig(), TrainConfig(steps=600, log_every=100),
                          seed=0)
for step, loss in curve:
    print(f"  step {step:>4}  loss {loss:.4f}")

# Verify the hand-written backprop on this very checkpoint.
batch = make_batch(dataset.states[:8].astype(np.float64), list(dataset.instructions[:8]))
labels = checkpoint.normalizer.apply(dataset.actions[:8])
report = grad_check(checkpoint, batch, labels)
print(f"gradient check over {report.coords_checked} coordinates: "
      f"max relative error {report.max_rel_error:.2e}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps, losses = zip(*curve)
    plt.figure(figsize=(5, 3))
    plt.plot(steps, losses)
    plt.xlabel("step")
    plt.ylabel("batch MSE (normalized)")
    plt.tight_layout()
    out = Path(__file__).with_name("loss_curve.png")
    plt.savefig(out)
    print("wrote", out)
except ImportError:
    pass
