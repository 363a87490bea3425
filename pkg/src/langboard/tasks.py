"""Benchmark task families, templated instructions, and success predicates.

Five short-horizon families over the 8-block board (696 conditions total):

* ``block2block``     push a block to another block          (8 x 7  = 56)
* ``block2abs``       push a block to one of 9 named places  (8 x 9  = 72)
* ``block2rel``       push a block a fixed offset            (8 x 8  = 64)
* ``block2blockrel``  push a block to the side of another    (8x7x8  = 448)
* ``separate``        separate two blocks                    (8 x 7  = 56)

Success is thresholded distance to the goal point (or above a floor for
``separate``). The goal point of the relative families is captured from an
episode-start snapshot, so their predicates must be bound before use.

Instructions are assembled from synonym sets shipped in a versioned data
file; every generated string parses back to its condition exactly.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import math
import re
import string
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import sim
from .sim import BLOCKS, BOARD_H, BOARD_W, BoardState, NUM_BLOCKS

FAMILIES = ("block2block", "block2abs", "block2rel", "block2blockrel", "separate")

DIRECTIONS = {
    "up": (0.0, 1.0),
    "down": (0.0, -1.0),
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "up_left": (-math.sqrt(0.5), math.sqrt(0.5)),
    "up_right": (math.sqrt(0.5), math.sqrt(0.5)),
    "down_left": (-math.sqrt(0.5), -math.sqrt(0.5)),
    "down_right": (math.sqrt(0.5), -math.sqrt(0.5)),
}


class UsageError(RuntimeError):
    """An operation was called in a way its contract forbids."""


class ParseError(ValueError):
    """Instruction text does not match the template vocabulary."""


# ---------------------------------------------------------------------------
# Vocabulary file

def normalize_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    text = text.lower().translate(str.maketrans("", "", string.punctuation))
    return re.sub(r"\s+", " ", text).strip()


def _load_vocab():
    raw = (importlib.resources.files("langboard") / "data" / "vocab_v1.txt").read_bytes()
    entries: dict[str, list[str]] = {}
    numbers: dict[str, float] = {}
    version = None
    for line in raw.decode().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key == "version":
            version = int(rest)
        elif key.startswith("threshold."):
            numbers[key.removeprefix("threshold.")] = float(rest)
        else:
            entries[key] = [opt.strip() for opt in rest.split("|")]
    return version, numbers, entries, hashlib.sha256(raw).hexdigest()[:16]


VOCAB_VERSION, THRESHOLDS, _VOCAB, VOCAB_HASH = _load_vocab()

LOCATION_NAMES = (
    "top left", "top center", "top right",
    "center left", "center", "center right",
    "bottom left", "bottom center", "bottom right",
)


@dataclass(frozen=True)
class NamedLocation:
    name: str
    center: tuple[float, float]


def _location_grid() -> dict[str, NamedLocation]:
    xs = {"left": BOARD_W / 6, "center": BOARD_W / 2, "right": 5 * BOARD_W / 6}
    ys = {"top": 5 * BOARD_H / 6, "center": BOARD_H / 2, "bottom": BOARD_H / 6}
    out = {}
    for name in LOCATION_NAMES:
        row, _, col = name.partition(" ")
        if name == "center":
            row = col = "center"
        out[name] = NamedLocation(name, (xs[col], ys[row]))
    return out


LOCATIONS = _location_grid()


def _slot_key(name: str) -> str:
    return name.replace(" ", "_")


# ---------------------------------------------------------------------------
# Conditions

@dataclass(frozen=True)
class TaskCondition:
    """One benchmark variation. Unused parameter fields are None."""

    family: str
    source_block: int
    target_block: int | None = None
    location: str | None = None
    direction: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        want = {
            "block2block": ("target_block",),
            "block2abs": ("location",),
            "block2rel": ("direction",),
            "block2blockrel": ("target_block", "direction"),
            "separate": ("target_block",),
        }[self.family]
        for name in ("target_block", "location", "direction"):
            have = getattr(self, name) is not None
            if have != (name in want):
                raise ValueError(f"{self.family} takes exactly {want}, got {name}={getattr(self, name)!r}")
        if self.target_block is not None and self.target_block == self.source_block:
            raise ValueError("source and target block must differ")
        if self.location is not None and self.location not in LOCATIONS:
            raise ValueError(f"unknown location {self.location!r}")
        if self.direction is not None and self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")

    @property
    def threshold(self) -> float:
        return THRESHOLDS["separation"] if self.family == "separate" else THRESHOLDS["success"]

    @property
    def key(self) -> str:
        parts = [self.family, str(self.source_block)]
        if self.target_block is not None:
            parts.append(str(self.target_block))
        if self.location is not None:
            parts.append(_slot_key(self.location))
        if self.direction is not None:
            parts.append(self.direction)
        return ":".join(parts)

    @staticmethod
    def from_key(key: str) -> "TaskCondition":
        parts = key.split(":")
        fam = parts[0]
        src = int(parts[1])
        if fam == "block2block" or fam == "separate":
            return TaskCondition(fam, src, target_block=int(parts[2]))
        if fam == "block2abs":
            return TaskCondition(fam, src, location=parts[2].replace("_", " "))
        if fam == "block2rel":
            return TaskCondition(fam, src, direction=parts[2])
        if fam == "block2blockrel":
            return TaskCondition(fam, src, target_block=int(parts[2]), direction=parts[3])
        raise ValueError(f"bad condition key {key!r}")


def enumerate_conditions(family: str | None = None) -> list[TaskCondition]:
    """Deterministic, duplicate-free enumeration (56/72/64/448/56; 696 total)."""
    if family is None:
        out = []
        for fam in FAMILIES:
            out.extend(enumerate_conditions(fam))
        return out
    conds = []
    others = lambda s: (t for t in range(NUM_BLOCKS) if t != s)
    if family == "block2block":
        conds = [TaskCondition(family, s, target_block=t)
                 for s in range(NUM_BLOCKS) for t in others(s)]
    elif family == "block2abs":
        conds = [TaskCondition(family, s, location=loc)
                 for s in range(NUM_BLOCKS) for loc in LOCATION_NAMES]
    elif family == "block2rel":
        conds = [TaskCondition(family, s, direction=d)
                 for s in range(NUM_BLOCKS) for d in DIRECTIONS]
    elif family == "block2blockrel":
        conds = [TaskCondition(family, s, target_block=t, direction=d)
                 for s in range(NUM_BLOCKS) for t in others(s) for d in DIRECTIONS]
    elif family == "separate":
        conds = [TaskCondition(family, s, target_block=t)
                 for s in range(NUM_BLOCKS) for t in others(s)]
    else:
        raise ValueError(f"unknown family {family!r}")
    return conds


def offset_vector(direction: str, magnitude: float | None = None) -> np.ndarray:
    mag = THRESHOLDS["rel_offset"] if magnitude is None else magnitude
    return np.array(DIRECTIONS[direction]) * mag


# ---------------------------------------------------------------------------
# Predicates

def clamp_to_reachable(point: np.ndarray,
                       block_radius: float = sim.DEFAULT_CONFIG.block_radius) -> np.ndarray:
    """Clamp a goal point into the box block centers can actually reach.

    Walls clamp blocks at a block-radius inset, so an offset goal beyond a
    wall would make its condition unsolvable; clamping keeps every
    benchmark condition solvable (the walls exist for exactly this).
    """
    return np.clip(point, (block_radius, block_radius),
                   (BOARD_W - block_radius, BOARD_H - block_radius))


class BoundTask:
    """A condition closed over its episode-start snapshot.

    The relative families measure distance to a goal point computed from
    the start state (source start + offset, or target start + offset), so
    the snapshot is part of the predicate.
    """

    def __init__(self, condition: TaskCondition, start_state: BoardState):
        self.condition = condition
        self.start_poses = start_state.block_poses[:, :2].copy()

    def goal_point(self, state: BoardState) -> np.ndarray | None:
        """Point the source block must reach; None for ``separate``."""
        c = self.condition
        if c.family == "block2block":
            return state.block_poses[c.target_block, :2].copy()
        if c.family == "block2abs":
            return np.array(LOCATIONS[c.location].center)
        if c.family == "block2rel":
            return clamp_to_reachable(self.start_poses[c.source_block]
                                      + offset_vector(c.direction))
        if c.family == "block2blockrel":
            return clamp_to_reachable(self.start_poses[c.target_block]
                                      + offset_vector(c.direction))
        return None

    def success(self, state: BoardState) -> bool:
        c = self.condition
        src = state.block_poses[c.source_block, :2]
        if c.family == "separate":
            tgt = state.block_poses[c.target_block, :2]
            return float(np.hypot(*(src - tgt))) > c.threshold
        goal = self.goal_point(state)
        return float(np.hypot(*(src - goal))) < c.threshold


def bind(condition: TaskCondition, start_state: BoardState) -> BoundTask:
    return BoundTask(condition, start_state)


def success(condition: TaskCondition, state: BoardState,
            start_state: BoardState | None = None) -> bool:
    """Evaluate a condition; relative families require the start snapshot."""
    if start_state is None:
        if condition.family in ("block2rel", "block2blockrel"):
            raise UsageError(f"{condition.family} predicate needs the episode-start snapshot")
        start_state = state
    return BoundTask(condition, start_state).success(state)


def oracle_path_length(condition: TaskCondition, start_state: BoardState,
                       config: sim.SimConfig = sim.DEFAULT_CONFIG) -> float:
    """Lower bound on the end-effector path of any successful episode.

    Reach leg: straight-line distance until the EE disc can first touch the
    pushed block's disc. Push leg: the distance the block must still travel
    to reach the success boundary (threshold slack included). Quasi-statics
    move a block by at most the EE's in-contact displacement, so the sum
    bounds every successful EE path from below.
    """
    bound = bind(condition, start_state)
    src = start_state.block_poses[condition.source_block, :2]
    ee = start_state.ee_pos
    rsum = config.contact_dist

    def reach(block_xy) -> float:
        return max(0.0, float(np.hypot(*(block_xy - ee))) - rsum)

    if condition.family == "separate":
        tgt = start_state.block_poses[condition.target_block, :2]
        gap = float(np.hypot(*(src - tgt)))
        push_needed = max(0.0, condition.threshold - gap)
        if push_needed == 0.0:
            return 0.0
        # Either block may be pushed away; bound by the cheaper to reach.
        return min(reach(src), reach(tgt)) + push_needed
    goal = bound.goal_point(start_state)
    push_needed = max(0.0, float(np.hypot(*(goal - src))) - condition.threshold)
    if push_needed == 0.0:
        return 0.0
    return reach(src) + push_needed


# ---------------------------------------------------------------------------
# Instructions

def block_name(block_id: int) -> str:
    return BLOCKS[block_id].name


def _expand(condition: TaskCondition) -> list[str]:
    """All instruction strings that denote this condition."""
    src = block_name(condition.source_block)
    out = []
    if condition.family == "separate":
        tgt = block_name(condition.target_block)
        return [t.format(a=src, b=tgt) for t in _VOCAB["sep.templates"]]
    for verb in _VOCAB["verbs"]:
        if condition.family == "block2block":
            tgt = block_name(condition.target_block)
            out.extend(f"{verb} the {src} {to} the {tgt}" for to in _VOCAB["to_phrases"])
        elif condition.family == "block2abs":
            key = "loc." + _slot_key(condition.location)
            out.extend(f"{verb} the {src} to the {loc}" for loc in _VOCAB[key])
        elif condition.family == "block2rel":
            out.extend(f"{verb} the {src} {d}" for d in _VOCAB["dir." + condition.direction])
        elif condition.family == "block2blockrel":
            tgt = block_name(condition.target_block)
            out.extend(f"{verb} the {src} to the {s} of the {tgt}"
                       for s in _VOCAB["side." + condition.direction])
    return out


@lru_cache(maxsize=1)
def _instruction_index() -> dict[str, str]:
    index: dict[str, str] = {}
    for cond in enumerate_conditions():
        for text in _expand(cond):
            text = normalize_text(text)
            if text in index and index[text] != cond.key:
                raise RuntimeError(f"ambiguous template: {text!r}")
            index[text] = cond.key
    return index


def sample_instruction(condition: TaskCondition, rng: np.random.Generator) -> str:
    """A lowercase command for the condition; uniform over its synonym set."""
    options = _expand(condition)
    return options[int(rng.integers(len(options)))]


def canonical_instruction(condition: TaskCondition) -> str:
    return _expand(condition)[0]


def parse_instruction(text: str) -> TaskCondition:
    """Inverse template matcher; raises ParseError for non-template text."""
    key = _instruction_index().get(normalize_text(text))
    if key is None:
        raise ParseError(f"not a template instruction: {text!r}")
    return TaskCondition.from_key(key)


def is_template_instruction(text: str) -> bool:
    return normalize_text(text) in _instruction_index()


# ---------------------------------------------------------------------------
# Long-horizon goals

LONG_HORIZON_FAMILIES = ("corner_gather", "vertical_line", "diagonal_line", "color_groups")
CORNER_NAMES = ("top left", "top right", "bottom left", "bottom right")


@dataclass(frozen=True)
class LongHorizonGoal:
    """A board-configuration target checked by a pure predicate."""

    family: str
    corner: str | None = None      # corner_gather: a corner location name
    rising: bool | None = None     # diagonal_line: True for bottom-left -> top-right

    def __post_init__(self):
        if self.family not in LONG_HORIZON_FAMILIES:
            raise ValueError(f"unknown long-horizon family {self.family!r}")
        if (self.family == "corner_gather") != (self.corner is not None):
            raise ValueError("corner_gather takes exactly a corner name")
        if self.corner is not None and self.corner not in CORNER_NAMES:
            raise ValueError(f"not a corner: {self.corner!r}")
        if (self.family == "diagonal_line") != (self.rising is not None):
            raise ValueError("diagonal_line takes exactly a rising flag")

    @property
    def key(self) -> str:
        if self.family == "corner_gather":
            return f"corner_gather:{_slot_key(self.corner)}"
        if self.family == "diagonal_line":
            return f"diagonal_line:{'rising' if self.rising else 'falling'}"
        return self.family


def long_horizon_goals() -> list[LongHorizonGoal]:
    goals = [LongHorizonGoal("corner_gather", corner=c) for c in CORNER_NAMES]
    goals.append(LongHorizonGoal("vertical_line"))
    goals.append(LongHorizonGoal("diagonal_line", rising=True))
    goals.append(LongHorizonGoal("diagonal_line", rising=False))
    goals.append(LongHorizonGoal("color_groups"))
    return goals


def _line_fit(points: np.ndarray) -> tuple[float, float]:
    """Orthogonal regression: (rms residual, orientation in [0, pi))."""
    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / len(points)
    eigvals, eigvecs = np.linalg.eigh(cov)
    residual = math.sqrt(max(eigvals[0], 0.0))
    direction = eigvecs[:, 1]
    angle = math.atan2(direction[1], direction[0]) % math.pi
    return residual, angle


def _angle_close(angle: float, target: float, tol: float) -> bool:
    diff = abs((angle - target + math.pi / 2) % math.pi - math.pi / 2)
    return diff <= tol


def check_long_horizon(goal: LongHorizonGoal, state: BoardState) -> bool:
    pts = state.block_poses[:, :2]
    tol_angle = math.radians(THRESHOLDS["line_angle_deg"])
    if goal.family == "corner_gather":
        center = np.array(LOCATIONS[goal.corner].center)
        return bool((np.hypot(*(pts - center).T) <= THRESHOLDS["corner_radius"]).all())
    if goal.family == "vertical_line":
        residual, angle = _line_fit(pts)
        return residual <= THRESHOLDS["line_residual"] and _angle_close(angle, math.pi / 2, tol_angle)
    if goal.family == "diagonal_line":
        residual, angle = _line_fit(pts)
        target = math.atan2(BOARD_H if goal.rising else -BOARD_H, BOARD_W) % math.pi
        return residual <= THRESHOLDS["line_residual"] and _angle_close(angle, target, tol_angle)
    if goal.family == "color_groups":
        centroids = []
        for color in sim.COLORS:
            members = pts[[b.id for b in BLOCKS if b.color == color]]
            centroid = members.mean(axis=0)
            if np.hypot(*(members - centroid).T).max() > THRESHOLDS["group_spread"]:
                return False
            centroids.append(centroid)
        centroids = np.array(centroids)
        for i in range(len(centroids)):
            for j in range(i + 1, len(centroids)):
                if np.hypot(*(centroids[i] - centroids[j])) <= THRESHOLDS["group_gap"]:
                    return False
        return True
    raise ValueError(goal.family)
