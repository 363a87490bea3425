"""The 696-condition benchmark, run with the scripted expert.

Enumerates the five task families, shows templated instructions and their
exact inverses, and scores the expert on one family with success and SPL.
"""

import numpy as np

from langboard import benchmark, expert, tasks

for family in tasks.FAMILIES:
    print(f"{family:<16} {len(tasks.enumerate_conditions(family)):>4} conditions")
print("total:", len(tasks.enumerate_conditions()))

rng = np.random.default_rng(3)
condition = tasks.TaskCondition("block2blockrel", 4, target_block=6, direction="up_left")
for _ in range(3):
    text = tasks.sample_instruction(condition, rng)
    assert tasks.parse_instruction(text) == condition
    print("instruction:", text)

print("\nscoring the expert on block2abs (72 conditions x 2 trials)...")
report = benchmark.run_benchmark(expert.ExpertPolicy(), families=("block2abs",),
                                 trials_per_condition=2, seeds=[0, 1])
print(report.table())
successes = [r for r in report.results if r.success]
print("mean SPL on successes:",
      round(float(np.mean([r.spl_term() for r in successes])), 3))
