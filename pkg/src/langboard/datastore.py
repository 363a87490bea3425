"""Episode recording, relabeling, export, and dataset statistics.

Episodes are stored one per file as line-delimited JSON: a header line, one
frame per line, and a footer carrying the frame count and a content hash so
truncation and corruption are detected at load. Relabeled demos append to a
separate ``.demos.jsonl`` index next to the episode file, keyed by episode
id, so annotation never rewrites trajectory data.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sim, tasks

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEMOS_PER_EPISODE_GUIDELINE = 24  # 12 short + 12 medium
SHORT_HORIZON_MAX_TICKS = 75     # <= 7.5 s at 10 Hz tags a demo "short"

# Hindsight texts used by the random-window describer when a window contains
# no describable behavior; deliberately free of block/location tokens.
GENERIC_WINDOW_PHRASES = (
    "move your arm around",
    "keep doing that",
    "wiggle the arm back and forth",
    "sweep your arm across the table",
    "do that again",
)


class IntegrityError(RuntimeError):
    """Episode or log file is corrupt, truncated, or inconsistent."""


class ValidationError(ValueError):
    """A relabel request violates its episode's bounds or duplicates one."""


@dataclass
class Episode:
    """A recorded trajectory: per-tick 26-dim states and 2-dim actions.

    ``actions[t]`` is the delta setpoint applied at ``states[t]``; the final
    frame is the terminal state and carries a zero action.
    """

    id: str
    control_hz: int
    ticks: np.ndarray    # (T,) int64, strictly increasing
    states: np.ndarray   # (T, 26) float64
    actions: np.ndarray  # (T, 2) float64
    prompts: list[str] = field(default_factory=list)
    source: str = "scripted"
    config_hash: str = ""

    def __post_init__(self):
        self.ticks = np.asarray(self.ticks, dtype=np.int64)
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if len(self.ticks) == 0:
            raise ValidationError("episode has no frames")
        if (np.diff(self.ticks) <= 0).any():
            raise ValidationError("episode ticks must be strictly increasing")
        if not (np.isfinite(self.states).all() and np.isfinite(self.actions).all()):
            raise ValidationError("episode contains non-finite values")

    @property
    def n_frames(self) -> int:
        return len(self.ticks)

    @property
    def duration_seconds(self) -> float:
        return self.n_frames / self.control_hz

    def state_at(self, frame: int) -> sim.BoardState:
        return sim.state_from_vector(self.states[frame], tick=int(self.ticks[frame]))


@dataclass(frozen=True)
class RelabeledDemo:
    """A (start, end, instruction) segment over an episode; the training unit."""

    episode_id: str
    start_frame: int
    end_frame: int
    instruction: str
    horizon_tag: str = "short"

    def __post_init__(self):
        if not (0 <= self.start_frame < self.end_frame):
            raise ValidationError(
                f"demo bounds must satisfy 0 <= start < end, got "
                f"({self.start_frame}, {self.end_frame})")
        if not self.instruction.strip():
            raise ValidationError("demo instruction is empty")
        if self.horizon_tag not in ("short", "medium"):
            raise ValidationError(f"bad horizon tag {self.horizon_tag!r}")

    @property
    def n_ticks(self) -> int:
        return self.end_frame - self.start_frame


def horizon_tag_for(n_ticks: int) -> str:
    return "short" if n_ticks <= SHORT_HORIZON_MAX_TICKS else "medium"


# ---------------------------------------------------------------------------
# Store

def _json_line(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "))


class EpisodeStore:
    """Directory of episode files plus per-episode relabel indexes.

    One writer per episode file; readers may run concurrently. Relabels
    append to ``<id>.demos.jsonl`` and never modify the episode file.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _episode_path(self, episode_id: str) -> Path:
        return self.root / f"{episode_id}.jsonl"

    def _demos_path(self, episode_id: str) -> Path:
        return self.root / f"{episode_id}.demos.jsonl"

    def ids(self) -> list[str]:
        return sorted(p.name.removesuffix(".jsonl")
                      for p in self.root.glob("*.jsonl")
                      if not p.name.endswith(".demos.jsonl"))

    def save(self, episode: Episode) -> Path:
        path = self._episode_path(episode.id)
        header = {
            "schema": SCHEMA_VERSION, "kind": "episode", "id": episode.id,
            "control_hz": episode.control_hz, "source": episode.source,
            "prompts": episode.prompts, "config_hash": episode.config_hash,
        }
        digest = hashlib.sha256()
        lines = [_json_line(header)]
        for t in range(episode.n_frames):
            line = _json_line({
                "tick": int(episode.ticks[t]),
                "state": episode.states[t].tolist(),
                "action": episode.actions[t].tolist(),
            })
            digest.update(line.encode())
            digest.update(b"\n")
            lines.append(line)
        lines.append(_json_line({"kind": "end", "frames": episode.n_frames,
                                 "sha256": digest.hexdigest()}))
        path.write_text("\n".join(lines) + "\n")
        return path

    def load(self, episode_id: str) -> Episode:
        path = self._episode_path(episode_id)
        if not path.exists():
            raise FileNotFoundError(path)
        header = None
        footer = None
        ticks, states, actions = [], [], []
        digest = hashlib.sha256()
        try:
            text = path.read_text()
        except UnicodeDecodeError as e:
            raise IntegrityError(f"{path}: not valid UTF-8 (file corrupted)") from e
        for idx, raw in enumerate(text.splitlines()):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as e:
                raise IntegrityError(f"{path}: record {idx} is not valid JSON") from e
            if idx == 0:
                if rec.get("kind") != "episode":
                    raise IntegrityError(f"{path}: record 0 is not an episode header")
                if rec.get("schema") != SCHEMA_VERSION:
                    raise IntegrityError(
                        f"{path}: schema version {rec.get('schema')} != {SCHEMA_VERSION}")
                header = rec
            elif rec.get("kind") == "end":
                footer = rec
                break
            else:
                try:
                    ticks.append(rec["tick"])
                    states.append(rec["state"])
                    actions.append(rec["action"])
                except KeyError as e:
                    raise IntegrityError(f"{path}: record {idx} missing field {e}") from e
                digest.update(raw.encode())
                digest.update(b"\n")
        if header is None:
            raise IntegrityError(f"{path}: missing header")
        if footer is None:
            raise IntegrityError(f"{path}: missing footer (truncated file)")
        if footer.get("frames") != len(ticks):
            raise IntegrityError(
                f"{path}: footer says {footer.get('frames')} frames, found {len(ticks)}")
        if footer.get("sha256") != digest.hexdigest():
            raise IntegrityError(f"{path}: frame-content hash mismatch")
        return Episode(
            id=header["id"], control_hz=header["control_hz"],
            ticks=np.array(ticks), states=np.array(states), actions=np.array(actions),
            prompts=list(header.get("prompts", [])), source=header.get("source", ""),
            config_hash=header.get("config_hash", ""),
        )

    # -- relabels -----------------------------------------------------------

    def add_relabel(self, episode: Episode, start: int, end: int, text: str,
                    horizon_tag: str | None = None) -> RelabeledDemo:
        """Validate and persist one demo; duplicates are rejected."""
        if not (0 <= start < end <= episode.n_frames - 1):
            raise ValidationError(
                f"demo bounds ({start}, {end}) outside episode of {episode.n_frames} frames")
        if horizon_tag is None:
            horizon_tag = horizon_tag_for(end - start)
        demo = RelabeledDemo(episode.id, start, end, text, horizon_tag)
        existing = self.relabels(episode.id)
        if any((d.start_frame, d.end_frame, d.instruction) == (start, end, text)
               for d in existing):
            raise ValidationError(f"duplicate demo ({start}, {end}, {text!r})")
        if len(existing) + 1 > DEMOS_PER_EPISODE_GUIDELINE:
            log.warning("episode %s now has %d demos (guideline is %d)",
                        episode.id, len(existing) + 1, DEMOS_PER_EPISODE_GUIDELINE)
        with open(self._demos_path(episode.id), "a") as fh:
            fh.write(_json_line({"start": start, "end": end, "instruction": text,
                                 "horizon": horizon_tag}) + "\n")
        return demo

    def relabels(self, episode_id: str) -> list[RelabeledDemo]:
        path = self._demos_path(episode_id)
        if not path.exists():
            return []
        out = []
        for idx, raw in enumerate(path.read_text().splitlines()):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
                out.append(RelabeledDemo(episode_id, rec["start"], rec["end"],
                                         rec["instruction"], rec["horizon"]))
            except (json.JSONDecodeError, KeyError) as e:
                raise IntegrityError(f"{path}: record {idx} is corrupt") from e
        return out

    def all_relabels(self) -> list[RelabeledDemo]:
        out = []
        for episode_id in self.ids():
            out.extend(self.relabels(episode_id))
        return out


# ---------------------------------------------------------------------------
# Training export

@dataclass
class TrainingSet:
    """Flat (history, action, instruction) triples ready for training."""

    states: np.ndarray        # (N, seqlen, 26)
    actions: np.ndarray       # (N, 2)
    instructions: np.ndarray  # (N,) unicode
    seqlen: int = 4
    control_hz: int = 10

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, indices) -> "TrainingSet":
        idx = np.asarray(indices)
        return TrainingSet(self.states[idx], self.actions[idx],
                           self.instructions[idx], self.seqlen, self.control_hz)

    def save(self, path) -> None:
        np.savez_compressed(path, states=self.states, actions=self.actions,
                            instructions=self.instructions.astype(np.str_),
                            seqlen=self.seqlen, control_hz=self.control_hz)

    @classmethod
    def load(cls, path) -> "TrainingSet":
        with np.load(path, allow_pickle=False) as data:
            return cls(states=data["states"], actions=data["actions"],
                       instructions=data["instructions"],
                       seqlen=int(data["seqlen"]), control_hz=int(data["control_hz"]))


def export_training_set(store: EpisodeStore, demos: list[RelabeledDemo],
                        seqlen: int = 4) -> TrainingSet:
    """One example per frame t in [start+seqlen-1, end-1] of each demo.

    Histories are the ``seqlen`` consecutive frames ending at t and never
    cross the segment start; left-edge frames are dropped, not padded.
    Demos shorter than ``seqlen`` are skipped with a warning.
    """
    cache: dict[str, Episode] = {}
    states, actions, instructions = [], [], []
    control_hz = 10
    for demo in demos:
        ep = cache.get(demo.episode_id)
        if ep is None:
            ep = cache[demo.episode_id] = store.load(demo.episode_id)
        control_hz = ep.control_hz
        first = demo.start_frame + seqlen - 1
        if first > demo.end_frame - 1:
            log.warning("demo %s[%d:%d] shorter than seqlen=%d; skipped",
                        demo.episode_id, demo.start_frame, demo.end_frame, seqlen)
            continue
        for t in range(first, demo.end_frame):
            states.append(ep.states[t - seqlen + 1:t + 1])
            actions.append(ep.actions[t])
            instructions.append(demo.instruction)
    if not states:
        return TrainingSet(np.zeros((0, seqlen, sim.STATE_DIM)), np.zeros((0, 2)),
                           np.array([], dtype=np.str_), seqlen, control_hz)
    return TrainingSet(np.stack(states), np.stack(actions),
                       np.array(instructions, dtype=np.str_), seqlen, control_hz)


# ---------------------------------------------------------------------------
# Statistics and the relabel-strategy comparison

@dataclass
class DatasetStats:
    total_episodes: int
    total_demos: int
    unique_instructions: int
    mean_demo_seconds: float
    total_demo_hours: float
    total_collect_hours: float
    instruction_to_collect_ratio: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def dataset_stats(store: EpisodeStore, demos: list[RelabeledDemo] | None = None) -> DatasetStats:
    if demos is None:
        demos = store.all_relabels()
    episode_ids = store.ids()
    collect_seconds = 0.0
    hz_by_id = {}
    for episode_id in episode_ids:
        ep = store.load(episode_id)
        hz_by_id[episode_id] = ep.control_hz
        collect_seconds += ep.duration_seconds
    demo_seconds = [d.n_ticks / hz_by_id.get(d.episode_id, 10) for d in demos]
    unique = {tasks.normalize_text(d.instruction) for d in demos}
    total_demo_seconds = float(sum(demo_seconds))
    return DatasetStats(
        total_episodes=len(episode_ids),
        total_demos=len(demos),
        unique_instructions=len(unique),
        mean_demo_seconds=float(np.mean(demo_seconds)) if demo_seconds else 0.0,
        total_demo_hours=total_demo_seconds / 3600.0,
        total_collect_hours=collect_seconds / 3600.0,
        instruction_to_collect_ratio=(total_demo_seconds / collect_seconds
                                      if collect_seconds else 0.0),
    )


OBJECT_TOKENS = frozenset(
    list(sim.COLORS) + list(sim.SHAPES)
    + [w for name in tasks.LOCATION_NAMES for w in name.split()]
)


@dataclass(frozen=True)
class DemoFlags:
    has_contact: bool
    object_directed: bool
    compound: bool


def classify_demo(demo: RelabeledDemo, episode: Episode,
                  config: sim.SimConfig = sim.DEFAULT_CONFIG) -> DemoFlags:
    """Pure token/geometry flags used by the relabel-strategy comparison."""
    states = episode.states[demo.start_frame:demo.end_frame + 1]
    block_xy = states[:, :24].reshape(len(states), sim.NUM_BLOCKS, 3)[:, :, :2]
    ee = states[:, 24:26][:, None, :]
    dists = np.hypot(*(block_xy - ee).transpose(2, 0, 1))
    has_contact = bool((dists <= config.contact_dist + 1e-6).any())
    words = set(tasks.normalize_text(demo.instruction).split())
    object_directed = bool(words & OBJECT_TOKENS)
    compound = " then " in f" {tasks.normalize_text(demo.instruction)} "
    return DemoFlags(has_contact, object_directed, compound)


@dataclass(frozen=True)
class Window:
    start_frame: int
    end_frame: int


def random_window_sample(episode: Episode, window_len: int,
                         rng: np.random.Generator) -> Window:
    """Uniformly random fixed-length segment (the baseline relabel strategy)."""
    if window_len > episode.n_frames - 1:
        raise ValidationError(
            f"window of {window_len} ticks does not fit a {episode.n_frames}-frame episode")
    start = int(rng.integers(0, episode.n_frames - window_len))
    return Window(start, start + window_len)


def describe_window(window: Window, demos: list[RelabeledDemo],
                    rng: np.random.Generator) -> str:
    """Synthetic hindsight annotation of an arbitrary window.

    Mirrors what a human would write: a 'then'-joined compound when the
    window shows substantial parts of several behaviors, the one behavior
    it mostly shows otherwise, else a generic arm phrase. Windows are not
    aligned to behavior boundaries, which is exactly why this baseline
    produces compound and undirected labels.
    """
    window_len = window.end_frame - window.start_frame
    scored = []
    for d in demos:
        overlap = min(d.end_frame, window.end_frame) - max(d.start_frame, window.start_frame)
        if overlap <= 0:
            continue
        if overlap >= 0.4 * d.n_ticks or overlap >= 0.4 * window_len:
            scored.append((d.start_frame, d.instruction))
    if len(scored) >= 2:
        scored.sort()
        return f"{scored[0][1]} then {scored[1][1]}"
    if len(scored) == 1:
        return scored[0][1]
    return GENERIC_WINDOW_PHRASES[int(rng.integers(len(GENERIC_WINDOW_PHRASES)))]


@dataclass
class StrategyRates:
    n: int
    has_contact: float
    object_directed: float
    compound: float


@dataclass
class RelabelComparison:
    event_selected: StrategyRates
    random_window: StrategyRates
    window_len: int


def _rates(flags: list[DemoFlags]) -> StrategyRates:
    n = len(flags)
    return StrategyRates(
        n=n,
        has_contact=sum(f.has_contact for f in flags) / n if n else 0.0,
        object_directed=sum(f.object_directed for f in flags) / n if n else 0.0,
        compound=sum(f.compound for f in flags) / n if n else 0.0,
    )


def relabel_strategy_comparison(store: EpisodeStore, episode_ids: list[str] | None = None,
                                window_len: int | None = None, seed: int = 0,
                                config: sim.SimConfig = sim.DEFAULT_CONFIG) -> RelabelComparison:
    """Event-selected demos vs same-count random windows over one corpus."""
    if episode_ids is None:
        episode_ids = store.ids()
    rng = np.random.default_rng(seed)
    all_demos = [(eid, store.relabels(eid)) for eid in episode_ids]
    if window_len is None:
        lengths = [d.n_ticks for _, ds in all_demos for d in ds]
        window_len = max(2, int(round(float(np.mean(lengths))))) if lengths else 30
    event_flags, window_flags = [], []
    for episode_id, demos in all_demos:
        episode = store.load(episode_id)
        for d in demos:
            event_flags.append(classify_demo(d, episode, config))
        usable = min(window_len, episode.n_frames - 1)
        for _ in range(len(demos)):
            w = random_window_sample(episode, usable, rng)
            text = describe_window(w, demos, rng)
            pseudo = RelabeledDemo(episode_id, w.start_frame, w.end_frame, text,
                                   horizon_tag_for(w.end_frame - w.start_frame))
            window_flags.append(classify_demo(pseudo, episode, config))
    return RelabelComparison(_rates(event_flags), _rates(window_flags), window_len)
