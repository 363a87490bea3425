"""Collection and hindsight relabeling at desk scale.

Generates a small expert corpus (episodes chain many tasks without resets;
solved segments become labeled demos), prints collection statistics, and
runs the event-selected vs random-window strategy comparison.
"""

import tempfile

from langboard import datastore, expert

root = tempfile.mkdtemp(prefix="langboard-demo-")
store = datastore.EpisodeStore(root)
episodes, demos = expert.generate_corpus(20, seed=42, store=store)
print(f"collected {len(episodes)} episodes, {len(demos)} relabeled demos -> {root}")

stats = datastore.dataset_stats(store)
for key, value in stats.as_dict().items():
    print(f"  {key:32} {value:.4f}" if isinstance(value, float) else f"  {key:32} {value}")

training = datastore.export_training_set(store, store.all_relabels())
print(f"exported {len(training)} (history, action, instruction) examples")

comparison = datastore.relabel_strategy_comparison(store, seed=0)
print(f"\nrelabel strategies over the same corpus (window={comparison.window_len} ticks):")
print(f"  {'':>18} {'contact':>8} {'directed':>9} {'compound':>9}")
for name, rates in (("event-selected", comparison.event_selected),
                    ("random window", comparison.random_window)):
    print(f"  {name:>18} {rates.has_contact:>8.2f} {rates.object_directed:>9.2f} "
          f"{rates.compound:>9.2f}")
