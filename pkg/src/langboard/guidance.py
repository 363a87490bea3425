"""Real-time interactive sessions and the open-loop comparison harness.

A session owns one simulator instance and one policy. Instructions arrive
at any time but apply at tick boundaries: exactly one instruction is
active per tick and a change becomes effective on the next tick. Session
logs capture everything needed to reproduce the trajectory bit-exactly
(seed, checkpoint hash, instruction/perturbation events, per-tick states)
plus a content hash, so replay verifies integrity and finds the first
divergent tick of a tampered or stale log.

Wall-clock pacing is the host loop's job (see ``server``); ``tick`` itself
is pure with respect to time.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sim, tasks
from .policy import PolicyCheckpoint, TrainedPolicy

HISTORY_LEN = 4
DEFAULT_COMMAND_BUDGET = 200  # open-loop ticks per command before advancing

_session_counter = itertools.count(1)


class UsageError(RuntimeError):
    """Mode-mismatched call (e.g. set_instruction on an open-loop session)."""


class ValidationError(ValueError):
    pass


class ReplayError(RuntimeError):
    """Log is corrupt or tampered (content hash mismatch)."""


@dataclass
class Snapshot:
    session_id: str
    tick: int
    state: np.ndarray
    instruction: str
    status: str            # running | paused | done
    done: bool

    def to_message(self) -> dict:
        return {"type": "snapshot", "session": self.session_id, "tick": self.tick,
                "state": [float(v) for v in self.state],
                "instruction": self.instruction, "status": self.status,
                "done": self.done}


@dataclass
class Session:
    id: str
    mode: str                        # realtime | open_loop
    seed: int
    policy: object
    checkpoint_hash: str
    config: sim.SimConfig
    state: sim.BoardState
    history: list[np.ndarray]
    goal: tasks.LongHorizonGoal | None = None
    current_instruction: str = ""
    pending_instruction: str | None = None
    plan_texts: list[str] = field(default_factory=list)
    plan_index: int = 0
    plan_bound: tasks.BoundTask | None = None
    plan_started_tick: int = 0
    command_budget: int = DEFAULT_COMMAND_BUDGET
    status: str = "running"
    diagnostic: str = ""
    events: list[dict] = field(default_factory=list)
    instructions_issued: int = 0

    @property
    def tick_count(self) -> int:
        return self.state.tick


def create_session(checkpoint: PolicyCheckpoint | None, seed: int, mode: str,
                   policy=None, goal: tasks.LongHorizonGoal | None = None,
                   config: sim.SimConfig = sim.DEFAULT_CONFIG,
                   command_budget: int = DEFAULT_COMMAND_BUDGET) -> Session:
    if mode not in ("realtime", "open_loop"):
        raise ValidationError(f"unknown session mode {mode!r}")
    if policy is None:
        if checkpoint is None:
            raise ValidationError("need a checkpoint or an explicit policy")
        policy = TrainedPolicy(checkpoint, config)
    checkpoint_hash = checkpoint.hash() if checkpoint is not None else "external"
    state = sim.reset(seed, config)
    policy.reset()
    session = Session(
        id=f"s{next(_session_counter):04d}",
        mode=mode, seed=seed, policy=policy, checkpoint_hash=checkpoint_hash,
        config=config, state=state,
        history=[sim.state_vector(state)] * HISTORY_LEN,
        goal=goal, command_budget=command_budget,
    )
    session.events.append({
        "kind": "session", "id": session.id, "seed": seed, "mode": mode,
        "checkpoint": checkpoint_hash, "config_hash": config.hash(),
        "goal": goal.key if goal else None, "command_budget": command_budget,
        "wall_time": time.time(),
    })
    return session


def set_instruction(session: Session, text: str) -> None:
    """Replace the active instruction, effective next tick (realtime only)."""
    if session.mode != "realtime":
        raise UsageError("set_instruction is only valid on realtime sessions")
    if not text or not text.strip():
        raise ValidationError("instruction text is empty")
    session.pending_instruction = text
    session.instructions_issued += 1
    session.events.append({"kind": "instruction", "tick": session.tick_count,
                           "text": text, "wall_time": time.time()})


def enqueue_plan(session: Session, texts: list[str]) -> None:
    """Fix the full command list up front (open-loop only). Idle ticks may
    already have elapsed, but a plan can be committed exactly once and only
    before any command has run."""
    if session.mode != "open_loop":
        raise UsageError("enqueue_plan is only valid on open-loop sessions")
    if session.plan_texts or session.current_instruction:
        raise UsageError("open-loop plans are committed once, before execution")
    texts = [t for t in texts if t and t.strip()]
    if not texts:
        raise ValidationError("open-loop plan is empty")
    session.plan_texts = list(texts)
    session.instructions_issued = len(texts)
    session.events.append({"kind": "plan", "tick": 0, "texts": list(texts),
                           "wall_time": time.time()})


def _bind_command(session: Session) -> None:
    text = session.plan_texts[session.plan_index]
    session.current_instruction = text
    session.plan_started_tick = session.tick_count
    try:
        condition = tasks.parse_instruction(text)
        session.plan_bound = tasks.bind(condition, session.state)
    except tasks.ParseError:
        session.plan_bound = None  # budget-only advancement


def _advance_open_loop(session: Session) -> None:
    if not session.plan_texts:
        return
    if session.current_instruction == "":
        _bind_command(session)
        return
    finished = (session.plan_bound is not None and session.plan_bound.success(session.state)) \
        or (session.tick_count - session.plan_started_tick >= session.command_budget)
    if finished:
        if session.plan_index + 1 < len(session.plan_texts):
            session.plan_index += 1
            _bind_command(session)
        else:
            session.status = "done" if session.goal is None else session.status
            session.current_instruction = session.plan_texts[-1]
            session.plan_index = len(session.plan_texts)  # exhausted


def plan_exhausted(session: Session) -> bool:
    return bool(session.plan_texts) and session.plan_index >= len(session.plan_texts)


def apply_perturbation(session: Session, block_id: int, new_xy) -> None:
    """Teleport a block (logged, so replay reproduces it)."""
    new_xy = np.asarray(new_xy, dtype=np.float64)
    session.state.block_poses[block_id, :2] = tasks.clamp_to_reachable(new_xy)
    session.events.append({"kind": "perturb", "tick": session.tick_count,
                           "block": int(block_id),
                           "xy": [float(v) for v in new_xy], "wall_time": time.time()})


def _snapshot(session: Session) -> Snapshot:
    return Snapshot(session_id=session.id, tick=session.tick_count,
                    state=sim.state_vector(session.state),
                    instruction=session.current_instruction,
                    status=session.status, done=session.status == "done")


def tick(session: Session) -> Snapshot:
    """Advance one control tick; no-op when paused or done."""
    if session.status != "running":
        return _snapshot(session)
    if session.mode == "realtime":
        if session.pending_instruction is not None:
            session.current_instruction = session.pending_instruction
            session.pending_instruction = None
    else:
        _advance_open_loop(session)
    instruction = session.current_instruction
    if instruction:
        try:
            action = np.asarray(session.policy.act(np.array(session.history), instruction),
                                dtype=np.float64)
        except Exception as e:  # policy errors pause, never crash the host
            session.status = "paused"
            session.diagnostic = f"policy error: {e}"
            return _snapshot(session)
        if action.shape != (2,) or not np.isfinite(action).all():
            session.status = "paused"
            session.diagnostic = "policy produced a non-finite or mis-shaped action"
            return _snapshot(session)
    else:
        action = np.zeros(2)  # idle until the first instruction arrives
    session.state = sim.step(session.state, action, session.config)
    session.history = session.history[1:] + [sim.state_vector(session.state)]
    session.events.append({
        "kind": "tick", "tick": session.tick_count, "instruction": instruction,
        "action": [float(a) for a in action],
        "state": sim.state_vector(session.state).tolist(),
    })
    if session.goal is not None and tasks.check_long_horizon(session.goal, session.state):
        session.status = "done"
    return _snapshot(session)


# ---------------------------------------------------------------------------
# Logs and replay

def save_log(session: Session, path) -> Path:
    path = Path(path)
    digest = hashlib.sha256()
    lines = []
    for event in session.events:
        line = json.dumps(event)
        digest.update(line.encode())
        digest.update(b"\n")
        lines.append(line)
    lines.append(json.dumps({"kind": "end", "events": len(session.events),
                             "sha256": digest.hexdigest()}))
    path.write_text("\n".join(lines) + "\n")
    return path


def load_log(path) -> list[dict]:
    """Parse and integrity-check a session log (raises ReplayError)."""
    try:
        lines = Path(path).read_text().splitlines()
    except UnicodeDecodeError as e:
        raise ReplayError(f"{path}: not valid UTF-8 (log corrupted)") from e
    events = []
    footer = None
    digest = hashlib.sha256()
    for raw in lines:
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ReplayError(f"{path}: corrupt record: {e}") from e
        if rec.get("kind") == "end":
            footer = rec
            break
        digest.update(raw.encode())
        digest.update(b"\n")
        events.append(rec)
    if footer is None:
        raise ReplayError(f"{path}: missing footer (truncated log)")
    if footer.get("events") != len(events) or footer.get("sha256") != digest.hexdigest():
        raise ReplayError(f"{path}: content hash mismatch (log tampered or truncated)")
    if not events or events[0].get("kind") != "session":
        raise ReplayError(f"{path}: missing session header")
    return events


@dataclass
class ReplayResult:
    ok: bool
    ticks: int
    first_divergence: int | None = None


def replay_log(path, checkpoint: PolicyCheckpoint | None = None, policy=None,
               config: sim.SimConfig = sim.DEFAULT_CONFIG) -> ReplayResult:
    """Re-execute a session log and verify every recorded state bit-exactly."""
    events = load_log(path)
    header = events[0]
    if checkpoint is not None and checkpoint.hash() != header["checkpoint"]:
        raise ReplayError(f"{path}: checkpoint hash {checkpoint.hash()} does not match "
                          f"log ({header['checkpoint']})")
    if header.get("config_hash") != config.hash():
        raise ReplayError(f"{path}: sim config hash mismatch")
    session = create_session(checkpoint, header["seed"], header["mode"], policy=policy,
                             goal=None if header.get("goal") is None
                             else _goal_from_key(header["goal"]),
                             config=config,
                             command_budget=header.get("command_budget",
                                                       DEFAULT_COMMAND_BUDGET))
    ticks_checked = 0
    for event in events[1:]:
        kind = event["kind"]
        if kind == "instruction":
            set_instruction(session, event["text"])
        elif kind == "plan":
            enqueue_plan(session, event["texts"])
        elif kind == "perturb":
            apply_perturbation(session, event["block"], event["xy"])
        elif kind == "tick":
            snap = tick(session)
            recorded = np.array(event["state"], dtype=np.float64)
            if not np.array_equal(snap.state, recorded):
                return ReplayResult(ok=False, ticks=ticks_checked,
                                    first_divergence=event["tick"])
            ticks_checked += 1
    return ReplayResult(ok=True, ticks=ticks_checked)


def _goal_from_key(key: str) -> tasks.LongHorizonGoal:
    for goal in tasks.long_horizon_goals():
        if goal.key == key:
            return goal
    raise ReplayError(f"unknown goal key {key!r}")


# ---------------------------------------------------------------------------
# Open-loop vs real-time comparison

class CornerGatherCorrector:
    """Scripted guide for corner_gather goals.

    In realtime mode it watches the board each tick and (re)issues a push
    command for the farthest block still outside the gather radius; in
    open-loop mode it commits the full nearest-first command list at t=0.
    """

    def __init__(self, goal: tasks.LongHorizonGoal, reissue_every: int = 40):
        if goal.family != "corner_gather":
            raise ValidationError("corrector only handles corner_gather goals")
        self.goal = goal
        self.center = np.array(tasks.LOCATIONS[goal.corner].center)
        self.radius = tasks.THRESHOLDS["corner_radius"]
        self.reissue_every = reissue_every
        self._last_issue_tick = -10 ** 9

    def _outside(self, state: sim.BoardState) -> list[int]:
        d = np.hypot(*(state.block_poses[:, :2] - self.center).T)
        return [int(i) for i in np.argsort(d) if d[i] > self.radius * 0.75]

    def _command(self, block_id: int) -> str:
        condition = tasks.TaskCondition("block2abs", block_id, location=self.goal.corner)
        return tasks.canonical_instruction(condition)

    def full_plan(self, state: sim.BoardState) -> list[str]:
        # Nearest-first fills the corner from the inside out.
        return [self._command(b) for b in self._outside(state)]

    def advise(self, state: sim.BoardState, tick_count: int, active: str) -> str | None:
        outside = self._outside(state)
        if not outside:
            return None
        desired = self._command(outside[0])
        stale = tick_count - self._last_issue_tick >= self.reissue_every
        if desired != active or stale:
            self._last_issue_tick = tick_count
            return desired
        return None


@dataclass
class ModeTrial:
    seed: int
    mode: str
    success: bool
    ticks: int
    instructions: int


@dataclass
class ModeComparison:
    goal_key: str
    trials: list[ModeTrial]
    perturbed: bool

    def success_rate(self, mode: str) -> float:
        picked = [t.success for t in self.trials if t.mode == mode]
        return float(np.mean(picked)) if picked else 0.0

    def mean_instructions(self, mode: str) -> float:
        picked = [t.instructions for t in self.trials if t.mode == mode]
        return float(np.mean(picked)) if picked else 0.0

    def to_jsonl(self) -> str:
        lines = [json.dumps({
            "kind": "mode_comparison", "goal": self.goal_key, "perturbed": self.perturbed,
            "realtime_success": self.success_rate("realtime"),
            "open_loop_success": self.success_rate("open_loop"),
            "realtime_instructions": self.mean_instructions("realtime"),
            "open_loop_instructions": self.mean_instructions("open_loop"),
        })]
        for t in self.trials:
            lines.append(json.dumps({"kind": "trial", "seed": t.seed, "mode": t.mode,
                                     "success": t.success, "ticks": t.ticks,
                                     "instructions": t.instructions}))
        return "\n".join(lines) + "\n"


def _perturb_if_due(session: Session, corrector: CornerGatherCorrector,
                    already: bool) -> bool:
    """Once >=4 blocks are gathered, kick the innermost one to the far corner."""
    if already:
        return True
    d = np.hypot(*(session.state.block_poses[:, :2] - corrector.center).T)
    if (d <= corrector.radius).sum() >= 4:
        victim = int(np.argmin(d))
        opposite = {"top left": "bottom right", "top right": "bottom left",
                    "bottom left": "top right", "bottom right": "top left"}
        target = np.array(tasks.LOCATIONS[opposite[corrector.goal.corner]].center)
        apply_perturbation(session, victim, target)
        return True
    return False


def run_guided_trial(checkpoint: PolicyCheckpoint | None, goal: tasks.LongHorizonGoal,
                     corrector: CornerGatherCorrector, seed: int, mode: str,
                     max_ticks: int = 1500, perturb: bool = True, policy=None,
                     config: sim.SimConfig = sim.DEFAULT_CONFIG) -> tuple[ModeTrial, Session]:
    session = create_session(checkpoint, seed, mode, policy=policy, goal=goal,
                             config=config)
    if tasks.check_long_horizon(goal, session.state):
        session.status = "done"
        return ModeTrial(seed=seed, mode=mode, success=True, ticks=0,
                         instructions=0), session
    if mode == "open_loop":
        plan_texts = corrector.full_plan(session.state)
        if plan_texts:
            enqueue_plan(session, plan_texts)
    perturbed = not perturb
    while session.status == "running" and session.tick_count < max_ticks:
        if mode == "realtime":
            advice = corrector.advise(session.state, session.tick_count,
                                      session.current_instruction)
            if advice is not None:
                set_instruction(session, advice)
        tick(session)
        perturbed = _perturb_if_due(session, corrector, perturbed)
        if mode == "open_loop" and plan_exhausted(session):
            break
    success = tasks.check_long_horizon(goal, session.state)
    return ModeTrial(seed=seed, mode=mode, success=success, ticks=session.tick_count,
                     instructions=session.instructions_issued), session


def compare_modes(checkpoint: PolicyCheckpoint | None, goal: tasks.LongHorizonGoal,
                  trials: int = 20, seeds: list[int] | None = None,
                  max_ticks: int = 1500, perturb: bool = True,
                  policy_factory=None,
                  config: sim.SimConfig = sim.DEFAULT_CONFIG) -> ModeComparison:
    """Same seeds, both modes, scripted guidance; reports success and
    instruction counts per mode."""
    if seeds is None:
        seeds = [7000 + 13 * k for k in range(trials)]
    results = []
    for seed in seeds:
        for mode in ("realtime", "open_loop"):
            corrector = CornerGatherCorrector(goal)
            policy = policy_factory() if policy_factory else None
            trial, _ = run_guided_trial(checkpoint, goal, corrector, seed, mode,
                                        max_ticks=max_ticks, perturb=perturb,
                                        policy=policy, config=config)
            results.append(trial)
    return ModeComparison(goal_key=goal.key, trials=results, perturbed=perturb)
