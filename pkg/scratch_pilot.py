"""Pilot: corpus -> train -> benchmark on block2block + block2rel."""
import logging
import sys
import time

import numpy as np

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
logging.getLogger("langboard.datastore").setLevel(logging.ERROR)

from langboard import benchmark, datastore, expert
from langboard.policy import ModelConfig, TrainConfig, TrainedPolicy, train

N_EPISODES = int(sys.argv[1]) if len(sys.argv) > 1 else 110
STEPS = int(sys.argv[2]) if len(sys.argv) > 2 else 4000
SEED = int(sys.argv[3]) if len(sys.argv) > 3 else 0
KIND = sys.argv[4] if len(sys.argv) > 4 else "lava"

t0 = time.time()
FAMILIES = tuple(sys.argv[5].split(',')) if len(sys.argv) > 5 else ('block2block', 'block2rel')
eps, demos = expert.generate_corpus(N_EPISODES, seed=123, families=FAMILIES)


class MemStore:
    def __init__(self, episodes):
        self.by_id = {e.id: e for e in episodes}

    def load(self, i):
        return self.by_id[i]


ts = datastore.export_training_set(MemStore(eps), demos)
print(f"corpus: {len(eps)} episodes, {len(demos)} demos, {len(ts)} examples "
      f"({time.time()-t0:.0f}s)", flush=True)

t0 = time.time()
NF = int(sys.argv[6]) if len(sys.argv) > 6 else 4
NH = int(sys.argv[7]) if len(sys.argv) > 7 else 4
cfg = ModelConfig(kind=KIND, n_fusion=NF, n_heads=NH)
ckpt, curve = train(ts, cfg, TrainConfig(steps=STEPS), seed=SEED)
print(f"trained {STEPS} steps in {time.time()-t0:.0f}s; loss curve tail: {curve[-3:]}", flush=True)

t0 = time.time()
pol = TrainedPolicy(ckpt)
report = benchmark.run_benchmark(pol, families=("block2block", "block2rel"),
                                 trials_per_condition=3, seeds=[1000, 2000, 3000])
print(report.table(), flush=True)
print(f"eval time {time.time()-t0:.0f}s", flush=True)
ckpt.save(f"/tmp/pilot_{KIND}_{SEED}.npz")
