"""Policy evaluation: episodes, success rate, SPL, reports, and sweeps.

An episode resets the board from a seed, binds the condition's start
snapshot, samples one instruction, and steps the policy until the success
predicate fires or the step budget runs out. SPL follows the navigation
convention, applied to the end-effector path: mean of
``S_i * l_i / max(p_i, l_i)`` with ``l`` the oracle lower bound and ``p``
the realized EE path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__, sim, tasks

MAX_STEPS = 200  # 20 s at 10 Hz; expert demos average well under 10 s
HISTORY_LEN = 4


class ZeroPolicy:
    """Does nothing; the canonical failure baseline."""

    def reset(self) -> None:
        pass

    def act(self, history, instruction):
        return np.zeros(2)


class RandomPolicy:
    """Uniform random delta setpoints (seeded at reset for determinism)."""

    def __init__(self, seed: int = 0, config: sim.SimConfig = sim.DEFAULT_CONFIG):
        self.seed = seed
        self.config = config
        self._rng = np.random.default_rng(seed)
        self._episode = 0

    def reset(self) -> None:
        self._episode += 1
        self._rng = np.random.default_rng([self.seed, self._episode])

    def act(self, history, instruction):
        return self._rng.uniform(-self.config.max_delta, self.config.max_delta, 2)


def episode_seed(trial_seed: int, condition_index: int) -> int:
    """Stable per-episode seed derived from (trial seed, condition index)."""
    return int(np.random.SeedSequence([trial_seed, condition_index]).generate_state(1)[0])


@dataclass(frozen=True)
class EpisodeResult:
    condition_key: str
    success: bool
    steps: int
    ee_path_length: float
    oracle_length: float
    seed: int
    aborted: bool = False

    def spl_term(self) -> float:
        if not self.success:
            return 0.0
        denom = max(self.ee_path_length, self.oracle_length)
        return 1.0 if denom == 0.0 else self.oracle_length / denom


def run_episode(policy, condition: tasks.TaskCondition, seed: int,
                max_steps: int = MAX_STEPS,
                config: sim.SimConfig = sim.DEFAULT_CONFIG) -> EpisodeResult:
    """One evaluation episode; deterministic given (policy, condition, seed)."""
    state = sim.reset(seed, config)
    bound = tasks.bind(condition, state)
    rng = np.random.default_rng([seed, 0xC0FFEE])
    instruction = tasks.sample_instruction(condition, rng)
    oracle = tasks.oracle_path_length(condition, state, config)
    policy.reset()
    history = [sim.state_vector(state)] * HISTORY_LEN
    path = 0.0
    if bound.success(state):
        return EpisodeResult(condition.key, True, 0, 0.0, oracle, seed)
    for step_index in range(max_steps):
        action = np.asarray(policy.act(np.array(history), instruction), dtype=np.float64)
        if action.shape != (2,) or not np.isfinite(action).all():
            return EpisodeResult(condition.key, False, step_index, path, oracle, seed,
                                 aborted=True)
        nxt = sim.step(state, action, config)
        path += float(np.hypot(*(nxt.ee_pos - state.ee_pos)))
        state = nxt
        history = history[1:] + [sim.state_vector(state)]
        if bound.success(state):
            return EpisodeResult(condition.key, True, step_index + 1, path, oracle, seed)
    return EpisodeResult(condition.key, False, max_steps, path, oracle, seed)


def spl(results: list[EpisodeResult]) -> float:
    """Success weighted by path length, in [0, 1]."""
    if not results:
        raise ValueError("spl of an empty result list")
    return float(np.mean([r.spl_term() for r in results]))


def success_rate(results: list[EpisodeResult]) -> float:
    return float(np.mean([r.success for r in results])) if results else 0.0


@dataclass
class FamilyReport:
    family: str
    episodes: int
    success: float
    success_ci95: float
    spl: float
    aborted: int


@dataclass
class EvalReport:
    families: list[FamilyReport]
    overall_success: float
    overall_ci95: float
    overall_spl: float
    episodes: int
    trials_per_condition: int
    seeds: list[int]
    config_hash: str
    vocab_hash: str
    tool_version: str = __version__
    results: list[EpisodeResult] = field(default_factory=list, repr=False)

    # Fixed field order keeps serialized reports byte-stable.
    _HEADER_FIELDS = ("episodes", "trials_per_condition", "seeds", "config_hash",
                      "vocab_hash", "tool_version",
                      "overall_success", "overall_ci95", "overall_spl")
    _FAMILY_FIELDS = ("family", "episodes", "success", "success_ci95", "spl", "aborted")
    _RESULT_FIELDS = ("condition_key", "success", "steps", "ee_path_length",
                      "oracle_length", "seed", "aborted")

    def to_jsonl(self, include_results: bool = True) -> str:
        lines = [json.dumps({"kind": "eval_report",
                             **{k: getattr(self, k) for k in self._HEADER_FIELDS}})]
        for fam in self.families:
            lines.append(json.dumps({"kind": "family",
                                     **{k: getattr(fam, k) for k in self._FAMILY_FIELDS}}))
        if include_results:
            for r in self.results:
                lines.append(json.dumps({"kind": "episode",
                                         **{k: getattr(r, k) for k in self._RESULT_FIELDS}}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EvalReport":
        header = None
        families, results = [], []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("kind")
            if kind == "eval_report":
                header = rec
            elif kind == "family":
                families.append(FamilyReport(**rec))
            elif kind == "episode":
                results.append(EpisodeResult(**rec))
        if header is None:
            raise ValueError("not an eval report")
        return cls(families=families, results=results, **header)

    def table(self) -> str:
        rows = [f"{'family':<16} {'episodes':>8} {'success':>8} {'ci95':>6} {'spl':>6} {'aborted':>7}"]
        for fam in self.families:
            rows.append(f"{fam.family:<16} {fam.episodes:>8d} {fam.success:>8.3f} "
                        f"{fam.success_ci95:>6.3f} {fam.spl:>6.3f} {fam.aborted:>7d}")
        rows.append(f"{'overall':<16} {self.episodes:>8d} {self.overall_success:>8.3f} "
                    f"{self.overall_ci95:>6.3f} {self.overall_spl:>6.3f}")
        return "\n".join(rows)


def _ci95(per_condition_means: list[float]) -> float:
    if len(per_condition_means) < 2:
        return 0.0
    return float(1.96 * np.std(per_condition_means, ddof=1) / np.sqrt(len(per_condition_means)))


def run_benchmark(policy, families=tasks.FAMILIES, trials_per_condition: int = 3,
                  seeds: list[int] | None = None, max_steps: int = MAX_STEPS,
                  config: sim.SimConfig = sim.DEFAULT_CONFIG,
                  progress=None) -> EvalReport:
    """Every enumerated condition x trials; aggregation in condition order."""
    if trials_per_condition < 1:
        raise ValueError("trials_per_condition must be >= 1")
    if seeds is None:
        seeds = list(range(trials_per_condition))
    if len(seeds) != trials_per_condition:
        raise ValueError("need one base seed per trial")
    families = list(families)
    family_reports = []
    all_results: list[EpisodeResult] = []
    per_condition_all: list[float] = []
    index = 0
    for family in families:
        conditions = tasks.enumerate_conditions(family)
        fam_results: list[EpisodeResult] = []
        fam_condition_means = []
        for condition in conditions:
            trial_results = [
                run_episode(policy, condition, episode_seed(seeds[t], index),
                            max_steps, config)
                for t in range(trials_per_condition)
            ]
            index += 1
            fam_results.extend(trial_results)
            fam_condition_means.append(success_rate(trial_results))
            if progress is not None:
                progress(index, condition, trial_results)
        per_condition_all.extend(fam_condition_means)
        family_reports.append(FamilyReport(
            family=family, episodes=len(fam_results),
            success=success_rate(fam_results), success_ci95=_ci95(fam_condition_means),
            spl=spl(fam_results), aborted=sum(r.aborted for r in fam_results)))
        all_results.extend(fam_results)
    return EvalReport(
        families=family_reports,
        overall_success=success_rate(all_results),
        overall_ci95=_ci95(per_condition_all),
        overall_spl=spl(all_results),
        episodes=len(all_results),
        trials_per_condition=trials_per_condition,
        seeds=list(seeds),
        config_hash=config.hash(),
        vocab_hash=tasks.VOCAB_HASH,
        results=all_results,
    )


# ---------------------------------------------------------------------------
# Data-scaling sweep

SWEEP_FRACTIONS = (0.125, 0.25, 0.5, 1.0)


@dataclass
class SweepRow:
    fraction: float
    seed: int
    examples: int
    success: float
    ci95: float
    spl: float


@dataclass
class SweepReport:
    rows: list[SweepRow]
    fractions: list[float]
    seeds: list[int]

    def mean_success(self, fraction: float) -> float:
        return float(np.mean([r.success for r in self.rows if r.fraction == fraction]))

    def to_jsonl(self) -> str:
        lines = [json.dumps({"kind": "sweep_report", "fractions": self.fractions,
                             "seeds": self.seeds})]
        for r in self.rows:
            lines.append(json.dumps({"kind": "row", "fraction": r.fraction, "seed": r.seed,
                                     "examples": r.examples, "success": r.success,
                                     "ci95": r.ci95, "spl": r.spl}))
        return "\n".join(lines) + "\n"


def scaling_subset_indices(n: int, fraction: float, shuffle_seed: int = 12345) -> np.ndarray:
    """Prefix of one fixed permutation, so smaller fractions nest in larger."""
    perm = np.random.default_rng(shuffle_seed).permutation(n)
    k = max(1, int(round(n * fraction)))
    return np.sort(perm[:k])


def data_scaling_sweep(train_fn, dataset, fractions=SWEEP_FRACTIONS,
                       seeds=(0, 1, 2), eval_families=("block2block", "block2rel"),
                       trials_per_condition: int = 1,
                       config: sim.SimConfig = sim.DEFAULT_CONFIG) -> SweepReport:
    """Train one policy per (fraction, seed) on nested subsets and benchmark it.

    ``train_fn(subset, seed) -> policy`` supplies the training recipe so the
    sweep is architecture-agnostic.
    """
    rows = []
    for fraction in fractions:
        idx = scaling_subset_indices(len(dataset), fraction)
        subset = dataset.subset(idx)
        for seed in seeds:
            policy = train_fn(subset, seed)
            report = run_benchmark(policy, families=eval_families,
                                   trials_per_condition=trials_per_condition,
                                   seeds=[seed + 1000 * t for t in range(trials_per_condition)],
                                   config=config)
            rows.append(SweepRow(fraction=float(fraction), seed=int(seed),
                                 examples=len(subset), success=report.overall_success,
                                 ci95=report.overall_ci95, spl=report.overall_spl))
    return SweepReport(rows=rows, fractions=[float(f) for f in fractions],
                       seeds=[int(s) for s in seeds])
