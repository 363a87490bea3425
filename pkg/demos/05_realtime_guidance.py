"""Real-time language guidance, session logs, and exact replay.

Drives a session with the expert policy, switches the instruction
mid-episode, perturbs a block, then replays the saved log and verifies the
trajectory reproduces bit-exactly. Finishes with a small open-loop vs
real-time comparison on a corner-gather goal.
"""

import tempfile
from pathlib import Path

from langboard import expert, guidance, tasks

session = guidance.create_session(None, seed=11, mode="realtime",
                                  policy=expert.ExpertPolicy())
guidance.set_instruction(session, "push the blue cube to the red star")
for t in range(120):
    if t == 40:
        guidance.set_instruction(session, "nudge the yellow heart up")
    if t == 60:
        guidance.apply_perturbation(session, 0, (0.1, 0.35))
    snapshot = guidance.tick(session)
print(f"ran {snapshot.tick} ticks; final instruction: {snapshot.instruction!r}")

log_path = Path(tempfile.mkdtemp()) / "session.jsonl"
guidance.save_log(session, log_path)
result = guidance.replay_log(log_path, policy=expert.ExpertPolicy())
print(f"replay of {log_path.name}: ok={result.ok}, {result.ticks} ticks bit-identical")

goal = tasks.LongHorizonGoal("corner_gather", corner="bottom right")
print("\nopen-loop vs real-time guidance (scripted corrector, 4 seeds, "
      "mid-episode perturbation):")
comparison = guidance.compare_modes(None, goal, trials=4,
                                    policy_factory=expert.ExpertPolicy,
                                    max_ticks=1200)
for mode in ("open_loop", "realtime"):
    print(f"  {mode:>10}: success {comparison.success_rate(mode):.2f}, "
          f"instructions {comparison.mean_instructions(mode):.1f}")
