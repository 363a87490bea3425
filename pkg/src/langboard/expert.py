"""Scripted oracle controller and demonstration-corpus generator.

The expert solves a bound task in two phases: navigate the end effector to
an approach point behind the pushed block (detouring on an arc if the
straight path would disturb it), then push by servoing on the point just
behind the live block position along the block-goal line, which keeps
contact and self-corrects drift. It stands in for human teleoperation at
desk scale and emits datastore-format episodes whose solving segments
become hindsight-labeled demos.
"""

from __future__ import annotations

import math
import uuid
from dataclasses import dataclass

import numpy as np

from . import datastore, sim, tasks
from .sim import BOARD_H, BOARD_W, BoardState

CLEARANCE = 0.01         # approach standoff beyond touching distance, meters
ARRIVE_TOL = 0.005       # waypoint arrival tolerance, meters
REPLAN_DEVIATION = 0.03  # block drift that invalidates an approach in progress
MAX_REPLANS = 10
PUSH_PRESSURE = 0.002    # servo point sits this far into the contact ring
PUSH_LEAD = 0.025        # extra advance per tick when perfectly aligned
ARC_STEP = math.radians(40.0)
PUSH_ALIGN_COS = math.cos(math.radians(30.0))  # "behind the block" tolerance
SEPARATE_MARGIN = 0.03   # push past the separation threshold by this much


@dataclass
class PushPlan:
    """Approach waypoints plus the pushing assignment for one task."""

    task: tasks.BoundTask
    waypoints: list[np.ndarray]
    block_id: int = 0        # block this plan pushes (separate may pick either)
    phase: str = "approach"  # approach | push | done
    replan_count: int = 0
    push_dir: np.ndarray | None = None   # block-goal direction at plan time
    push_from: np.ndarray | None = None  # pushed block's position at plan time
    push_target: np.ndarray | None = None
    cursor: int = 0

    def current(self) -> np.ndarray | None:
        if self.cursor < len(self.waypoints):
            return self.waypoints[self.cursor]
        return None


def _clamp_ee(p: np.ndarray, config: sim.SimConfig) -> np.ndarray:
    er = config.ee_radius
    return np.clip(p, (er, er), (BOARD_W - er, BOARD_H - er))


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.hypot(*v))
    return v / n if n > 1e-12 else np.array([1.0, 0.0])


def _segment_hits_disc(a: np.ndarray, b: np.ndarray, center: np.ndarray, radius: float) -> bool:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom < 1e-18 else float(np.clip((center - a) @ ab / denom, 0.0, 1.0))
    closest = a + t * ab
    return float(np.hypot(*(closest - center))) < radius


def _push_goal(task: tasks.BoundTask, state: BoardState,
               prefer_block: int | None = None) -> tuple[int, np.ndarray]:
    """(block to push, goal point) from live state."""
    c = task.condition
    if c.family != "separate":
        return c.source_block, task.goal_point(state)
    pairs = [(c.source_block, c.target_block), (c.target_block, c.source_block)]
    if prefer_block is not None:
        pairs = [pair for pair in pairs if pair[0] == prefer_block] or pairs
    # Push whichever block of the pair can escape farther (walls may pin one).
    best = None
    for block, other in pairs:
        here = state.block_poses[block, :2]
        there = state.block_poses[other, :2]
        gap = float(np.hypot(*(here - there)))
        u = _unit(here - there)
        needed = max(0.0, c.threshold - gap) + SEPARATE_MARGIN
        goal = tasks.clamp_to_reachable(here + u * needed)
        achieved = float(np.hypot(*(goal - there)))
        if best is None or achieved > best[0]:
            best = (achieved, block, goal)
    return best[1], best[2]


def plan(task: tasks.BoundTask, state: BoardState,
         config: sim.SimConfig = sim.DEFAULT_CONFIG) -> PushPlan:
    """Plan from the current state: approach point behind the block, then
    the push target. Arc detours are followed reactively by ``act``."""
    block_id, goal = _push_goal(task, state)
    src = state.block_poses[block_id, :2].copy()
    u = _unit(goal - src)
    rsum = config.contact_dist
    approach = _clamp_ee(src - u * (rsum + CLEARANCE), config)
    push_target = _clamp_ee(goal - u * (rsum - PUSH_PRESSURE), config)
    p = PushPlan(task=task, waypoints=[approach], block_id=block_id,
                 push_dir=u, push_from=src, push_target=push_target)
    if _behind_and_close(state.ee_pos, src, u, config):
        p.phase = "push"
    return p


def _behind_and_close(ee: np.ndarray, block: np.ndarray, u: np.ndarray,
                      config: sim.SimConfig) -> bool:
    """EE is roughly behind the block w.r.t. the push direction and near it."""
    gap = float(np.hypot(*(block - ee))) - config.contact_dist
    align = float(_unit(block - ee) @ u)
    return align >= PUSH_ALIGN_COS and gap <= CLEARANCE + 0.005


def _step_toward(target: np.ndarray, ee: np.ndarray, config: sim.SimConfig) -> np.ndarray:
    """Proportional step, direction-preserving clamp to the action box."""
    delta = target - ee
    worst = float(np.abs(delta).max())
    if worst > config.max_delta:
        delta = delta * (config.max_delta / worst)
    return delta


def _navigate_step(ee: np.ndarray, target: np.ndarray, block: np.ndarray,
                   config: sim.SimConfig) -> np.ndarray:
    """Step toward ``target`` while deflecting around the block's standoff
    disc; a pure function of the current state (no stored waypoints)."""
    avoid_r = config.contact_dist + CLEARANCE
    if not _segment_hits_disc(ee, target, block, avoid_r - 0.002):
        return _step_toward(target, ee, config)
    # Walk the standoff circle toward the target's bearing.
    phi_e = math.atan2(*(ee - block)[::-1])
    phi_t = math.atan2(*(target - block)[::-1])
    dphi = (phi_t - phi_e + math.pi) % (2 * math.pi) - math.pi
    step_angle = max(-ARC_STEP, min(ARC_STEP, dphi))
    phi_next = phi_e + step_angle
    point = block + avoid_r * np.array([math.cos(phi_next), math.sin(phi_next)])
    return _step_toward(_clamp_ee(point, config), ee, config)


def act(p: PushPlan, state: BoardState,
        config: sim.SimConfig = sim.DEFAULT_CONFIG) -> np.ndarray:
    """Next action under the plan, computed from the live state.

    Approach: navigate to the waypoint behind the block (deflecting around
    it). Push: servo on the point just behind the live block position along
    the live block-goal line, advancing fast only while well aligned.
    """
    if p.phase == "done":
        return np.zeros(2)
    ee = state.ee_pos
    if p.task.success(state):
        p.phase = "done"
        return np.zeros(2)
    block_id, goal = _push_goal(p.task, state, prefer_block=p.block_id)
    block = state.block_poses[block_id, :2]
    u = _unit(goal - block)
    if p.phase == "approach":
        approach = p.current()
        if approach is None:
            approach = _clamp_ee(block - u * (config.contact_dist + CLEARANCE), config)
        if _behind_and_close(ee, block, u, config) \
                or float(np.hypot(*(approach - ee))) <= ARRIVE_TOL:
            p.phase = "push"
        else:
            step = _navigate_step(ee, approach, block, config)
            if float(np.abs(step).max()) > 1e-4:
                return step
            # Walls pinched the route: push from the best reachable stance.
            p.phase = "push"
    # Push: advance fast only while roughly behind the block; otherwise the
    # servo point falls back to the contact ring and realigns first.
    align = max(0.0, float(_unit(block - ee) @ u))
    depth = PUSH_PRESSURE + PUSH_LEAD * align * align
    servo = _clamp_ee(block - u * (config.contact_dist - depth), config)
    return _step_toward(servo, ee, config)


def _plan_invalid(p: PushPlan, state: BoardState,
                  config: sim.SimConfig = sim.DEFAULT_CONFIG) -> bool:
    """The pushed block drifted from where the plan anchored it, or the EE
    fell badly out of position during a push."""
    block = state.block_poses[p.block_id, :2]
    if p.phase == "approach":
        return float(np.hypot(*(block - p.push_from))) > REPLAN_DEVIATION
    if p.phase == "push":
        rel = block - p.push_from
        lateral = abs(float(rel[0] * p.push_dir[1] - rel[1] * p.push_dir[0]))
        if lateral > REPLAN_DEVIATION:
            return True
        _, goal = _push_goal(p.task, state, prefer_block=p.block_id)
        return float(_unit(block - state.ee_pos) @ _unit(goal - block)) < 0.0
    return False


class ExpertController:
    """Stateful solver for one bound task: plans, acts, replans."""

    def __init__(self, task: tasks.BoundTask, config: sim.SimConfig = sim.DEFAULT_CONFIG):
        self.task = task
        self.config = config
        self.plan: PushPlan | None = None

    def action(self, state: BoardState) -> np.ndarray:
        p = self.plan
        if p is None:
            self.plan = plan(self.task, state, self.config)
        elif p.phase == "done" and not self.task.success(state):
            # Finished the planned push short of the goal: plan again.
            self.plan = plan(self.task, state, self.config)
            self.plan.replan_count = p.replan_count
        elif p.replan_count < MAX_REPLANS and _plan_invalid(p, state, self.config):
            self.plan = plan(self.task, state, self.config)
            self.plan.replan_count = p.replan_count + 1
        return act(self.plan, state, self.config)


class ExpertPolicy:
    """Benchmark-facing expert: recovers the task by parsing the instruction.

    Template instructions are exactly invertible, so this policy needs no
    side channel - it sees precisely what a learned policy sees.
    """

    def __init__(self, config: sim.SimConfig = sim.DEFAULT_CONFIG):
        self.config = config
        self._controller: ExpertController | None = None
        self._instruction: str | None = None

    def reset(self) -> None:
        self._controller = None
        self._instruction = None

    def act(self, history: np.ndarray, instruction: str) -> np.ndarray:
        state = sim.state_from_vector(np.asarray(history)[-1])
        if self._controller is None or instruction != self._instruction:
            condition = tasks.parse_instruction(instruction)
            self._controller = ExpertController(tasks.bind(condition, state), self.config)
            self._instruction = instruction
        return self._controller.action(state)


# ---------------------------------------------------------------------------
# Corpus generation

CHAIN_MIN, CHAIN_MAX = 8, 24
PER_CONDITION_BUDGET = 200   # ticks the expert gets per chained condition
REPOSITION_PROB = 0.6        # chance of an unlabeled EE transit between tasks
REPOSITION_BUDGET = 40
ACTION_NOISE = 0.004         # execution noise during collection, meters/tick


def _noisy(action: np.ndarray, rng: np.random.Generator, scale: float,
           config: sim.SimConfig) -> np.ndarray:
    """Executed (and therefore logged) action: nominal plus bounded jitter."""
    if scale <= 0.0:
        return action
    jittered = action + rng.normal(0.0, scale, 2)
    return np.clip(jittered, -config.max_delta, config.max_delta)


def _draw_condition(state: BoardState, families, rng: np.random.Generator,
                    conditions_by_family) -> tasks.TaskCondition | None:
    """A condition not already satisfied in the current state (50 tries)."""
    for _ in range(50):
        family = families[int(rng.integers(len(families)))]
        pool = conditions_by_family[family]
        cond = pool[int(rng.integers(len(pool)))]
        if not tasks.bind(cond, state).success(state):
            return cond
    return None


def generate_corpus(n_episodes: int, families=tasks.FAMILIES, seed: int = 0,
                    config: sim.SimConfig = sim.DEFAULT_CONFIG,
                    store: datastore.EpisodeStore | None = None,
                    action_noise: float = ACTION_NOISE,
                    ) -> tuple[list[datastore.Episode], list[datastore.RelabeledDemo]]:
    """Expert-teleoperated episodes with hindsight labels.

    Each episode chains 8-24 conditions solved consecutively without
    resets; every solved condition yields one demo spanning exactly its
    solving segment. Unsolved attempts stay in the episode unlabeled.
    Execution noise widens the visited tube around nominal pushes (the
    solver corrects, so segments still succeed) - collection here is
    optimality-agnostic, like teleoperation. Pure function of
    (n_episodes, families, seed, action_noise).
    """
    families = list(families)
    conditions_by_family = {f: tasks.enumerate_conditions(f) for f in families}
    episodes, demos = [], []
    root = np.random.SeedSequence(seed)
    for index, child in enumerate(root.spawn(n_episodes)):
        rng = np.random.default_rng(child)
        reset_seed = int(rng.integers(2 ** 31))
        state = sim.reset(reset_seed, config)
        episode_id = f"ep-{seed:04d}-{index:05d}-{uuid.UUID(int=reset_seed).hex[:8]}"
        ticks, states, actions = [], [], []
        prompts: list[str] = []
        pending: list[tuple[int, int, str]] = []  # (start, end, instruction)
        n_chain = int(rng.integers(CHAIN_MIN, CHAIN_MAX + 1))
        for _ in range(n_chain):
            # Occasionally wander the EE somewhere else first (unlabeled
            # transit), so demos approach their block from all over the
            # board the way benchmark episodes must.
            if rng.random() < REPOSITION_PROB:
                target = np.array([rng.uniform(config.ee_radius, BOARD_W - config.ee_radius),
                                   rng.uniform(config.ee_radius, BOARD_H - config.ee_radius)])
                if rng.random() < 0.3:
                    target = np.array(sim.EE_START)  # benchmark reset pose
                for _ in range(REPOSITION_BUDGET):
                    delta = _noisy(_step_toward(target, state.ee_pos, config),
                                   rng, action_noise, config)
                    if float(np.hypot(*(target - state.ee_pos))) <= ARRIVE_TOL:
                        break
                    ticks.append(state.tick)
                    states.append(sim.state_vector(state))
                    actions.append(delta)
                    state = sim.step(state, delta, config)
            cond = _draw_condition(state, families, rng, conditions_by_family)
            if cond is None:
                continue
            bound = tasks.bind(cond, state)
            instruction = tasks.sample_instruction(cond, rng)
            prompts.append(instruction)
            controller = ExpertController(bound, config)
            start_frame = len(ticks)
            solved = False
            for _ in range(PER_CONDITION_BUDGET):
                action = _noisy(controller.action(state), rng, action_noise, config)
                ticks.append(state.tick)
                states.append(sim.state_vector(state))
                actions.append(action)
                state = sim.step(state, action, config)
                if bound.success(state):
                    solved = True
                    break
            if solved:
                pending.append((start_frame, len(ticks), instruction))
        # Terminal frame with a zero action.
        ticks.append(state.tick)
        states.append(sim.state_vector(state))
        actions.append(np.zeros(2))
        episode = datastore.Episode(
            id=episode_id, control_hz=config.control_hz,
            ticks=np.array(ticks), states=np.array(states), actions=np.array(actions),
            prompts=prompts, source="scripted", config_hash=config.hash(),
        )
        episodes.append(episode)
        episode_demos = [
            datastore.RelabeledDemo(episode_id, s, e, text,
                                    datastore.horizon_tag_for(e - s))
            for s, e, text in pending
        ]
        demos.extend(episode_demos)
        if store is not None:
            store.save(episode)
            for d in episode_demos:
                store.add_relabel(episode, d.start_frame, d.end_frame,
                                  d.instruction, d.horizon_tag)
    return episodes, demos
