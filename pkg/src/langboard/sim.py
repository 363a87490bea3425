"""Deterministic planar block-pushing simulator.

A 24x18 inch board with 8 colored blocks and a cylindrical end effector,
all modeled as discs. Physics is quasi-static: bodies move only while
pushed, there is no inertia or restitution. Every operation is a pure
function of (state, action, config), so identical inputs give bit-identical
trajectories; resolution order is fixed (ascending block id) for the same
reason.

Actions are 2D delta Cartesian setpoints applied at the control rate; each
tick interpolates the end effector towards the clamped setpoint over
``substeps_per_tick`` substeps, resolving disc penetrations after each one.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields

import numpy as np

# Board geometry: 24 x 18 inch work surface, in meters.
BOARD_W = 0.6096
BOARD_H = 0.4572

COLORS = ("red", "blue", "green", "yellow")
SHAPES = ("circle", "star", "triangle", "heart", "hexagon", "cube")


@dataclass(frozen=True)
class BlockSpec:
    """Identity of one block: stable id, color, and drawn shape."""

    id: int
    color: str
    shape: str

    @property
    def name(self) -> str:
        return f"{self.color} {self.shape}"

    @property
    def color_index(self) -> int:
        return COLORS.index(self.color)

    @property
    def shape_index(self) -> int:
        return SHAPES.index(self.shape)


# The fixed 8-block set; ids are stable everywhere (files, tokens, tasks).
BLOCKS = (
    BlockSpec(0, "green", "circle"),
    BlockSpec(1, "red", "circle"),
    BlockSpec(2, "green", "star"),
    BlockSpec(3, "red", "star"),
    BlockSpec(4, "blue", "triangle"),
    BlockSpec(5, "yellow", "heart"),
    BlockSpec(6, "yellow", "hexagon"),
    BlockSpec(7, "blue", "cube"),
)
NUM_BLOCKS = len(BLOCKS)
BLOCK_BY_NAME = {b.name: b for b in BLOCKS}

# End effector reset position: bottom center of the board.
EE_START = (BOARD_W / 2.0, BOARD_H / 6.0)

STATE_DIM = 26  # 8 blocks x (x, y, theta) + (ee_x, ee_y)


class ConfigurationError(RuntimeError):
    """Raised when a SimConfig cannot produce a valid board."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation constants. All values documented defaults; loadable from a
    flat key-value file (see ``load`` / ``dump``)."""

    block_radius: float = 0.02
    ee_radius: float = 0.012
    max_delta: float = 0.03        # per-tick setpoint delta bound, meters
    substeps_per_tick: int = 10
    rotation_gain: float = 0.5
    control_hz: int = 10

    def __post_init__(self):
        if self.substeps_per_tick < 1:
            raise ConfigurationError("substeps_per_tick must be >= 1")
        if self.block_radius <= 0 or self.ee_radius <= 0:
            raise ConfigurationError("radii must be positive")

    @property
    def contact_dist(self) -> float:
        return self.block_radius + self.ee_radius

    def hash(self) -> str:
        text = self.dump()
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def dump(self) -> str:
        lines = [f"{f.name} {getattr(self, f.name)!r}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path) -> "SimConfig":
        kwargs = {}
        casts = {f.name: f.type for f in fields(cls)}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ConfigurationError(f"{path}:{lineno}: expected 'key value'")
                key, value = parts
                if key not in casts:
                    raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
                kwargs[key] = int(value) if casts[key] in ("int", int) else float(value)
        return cls(**kwargs)


DEFAULT_CONFIG = SimConfig()


def wrap_angle(theta):
    """Wrap angle(s) to [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class BoardState:
    """Full simulator state: 8 block poses, end-effector position, tick."""

    block_poses: np.ndarray  # (8, 3) float64: x, y, theta
    ee_pos: np.ndarray       # (2,) float64
    tick: int = 0

    def copy(self) -> "BoardState":
        return BoardState(self.block_poses.copy(), self.ee_pos.copy(), self.tick)

    def validate(self, config: SimConfig = DEFAULT_CONFIG) -> None:
        if self.block_poses.shape != (NUM_BLOCKS, 3) or self.ee_pos.shape != (2,):
            raise ValueError("bad state shapes")
        if not (np.isfinite(self.block_poses).all() and np.isfinite(self.ee_pos).all()):
            raise ValueError("non-finite state")
        xy = self.block_poses[:, :2]
        if (xy < 0).any() or (xy[:, 0] > BOARD_W).any() or (xy[:, 1] > BOARD_H).any():
            raise ValueError("block outside board")


def state_vector(state: BoardState) -> np.ndarray:
    """Flatten to the fixed 26-dim observation: (x, y, theta) per block id
    0..7, then (ee_x, ee_y)."""
    return np.concatenate([state.block_poses.reshape(-1), state.ee_pos]).astype(np.float64)


def state_from_vector(vec, tick: int = 0) -> BoardState:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (STATE_DIM,):
        raise ValueError(f"state vector must have shape ({STATE_DIM},)")
    return BoardState(vec[:24].reshape(NUM_BLOCKS, 3).copy(), vec[24:26].copy(), tick)


def reset(seed: int, config: SimConfig = DEFAULT_CONFIG, max_attempts: int = 10_000) -> BoardState:
    """Randomized initial board, fully determined by ``seed``.

    Blocks are placed uniformly inside the walls (minus a block-radius
    margin) with rejection sampling so that no two block discs overlap and
    none overlaps the end effector, which starts at the bottom center.
    """
    rng = np.random.default_rng(seed)
    br = config.block_radius
    ee = np.array(EE_START, dtype=np.float64)
    placed = np.empty((NUM_BLOCKS, 3), dtype=np.float64)
    rejections = 0
    for i in range(NUM_BLOCKS):
        while True:
            x = rng.uniform(br, BOARD_W - br)
            y = rng.uniform(br, BOARD_H - br)
            theta = rng.uniform(-math.pi, math.pi)
            ok = math.hypot(x - ee[0], y - ee[1]) > br + config.ee_radius
            if ok and i > 0:
                d = placed[:i, :2] - (x, y)
                ok = (np.hypot(d[:, 0], d[:, 1]) > 2.0 * br).all()
            if ok:
                placed[i] = (x, y, theta)
                break
            rejections += 1
            if rejections >= max_attempts:
                raise ConfigurationError(
                    f"could not place block {i} after {max_attempts} rejections; "
                    "check SimConfig radii against board size"
                )
    return BoardState(placed, ee, tick=0)


def clamp_action(action, config: SimConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Clamp a delta setpoint elementwise to +/- max_delta (never rejects)."""
    a = np.asarray(action, dtype=np.float64).reshape(2)
    return np.clip(a, -config.max_delta, config.max_delta)


def step(state: BoardState, action, config: SimConfig = DEFAULT_CONFIG) -> BoardState:
    """Advance one control tick. Pure: the input state is not modified.

    The end effector moves along a straight line to the clamped setpoint
    (blocking control: it arrives within the tick). After each substep:
    (1) EE-block penetrations are resolved by translating the block along
    the contact normal by the penetration depth, in ascending block id;
    (2) block-block penetrations are resolved by symmetric push-apart,
    Gauss-Seidel in ascending id order, to a fixed point or 16 sweeps;
    (3) contacted blocks spin by rotation_gain * (tangential EE motion at
    the contact) / block_radius; (4) all bodies are clamped to the walls.
    """
    delta = clamp_action(action, config)
    br, er = config.block_radius, config.ee_radius
    rsum = br + er
    ee0 = state.ee_pos
    target = np.clip(ee0 + delta, (er, er), (BOARD_W - er, BOARD_H - er))
    poses = state.block_poses.copy()
    xy = poses[:, :2]

    n_sub = config.substeps_per_tick
    move = (target - ee0) / n_sub
    ee = ee0.copy()
    for _ in range(n_sub):
        ee = ee + move
        # (1) EE pushes blocks out along the contact normal.
        rel = xy - ee
        dist = np.hypot(rel[:, 0], rel[:, 1])
        contact_ids = np.nonzero(dist < rsum)[0]
        normals = {}
        for i in contact_ids:
            d = dist[i]
            n = rel[i] / d if d > 1e-12 else np.array([1.0, 0.0])
            xy[i] += n * (rsum - d)
            normals[i] = n
        # (2) Block-block push-apart to a fixed point (16-sweep cap).
        if contact_ids.size:
            for _sweep in range(16):
                moved = False
                for i in range(NUM_BLOCKS):
                    for j in range(i + 1, NUM_BLOCKS):
                        d = xy[j] - xy[i]
                        dij = math.hypot(d[0], d[1])
                        pen = 2.0 * br - dij
                        if pen > 0.0:
                            n = d / dij if dij > 1e-12 else np.array([1.0, 0.0])
                            xy[i] -= n * (pen / 2.0)
                            xy[j] += n * (pen / 2.0)
                            moved = True
                if not moved:
                    break
        # (3) Contact-driven spin from the tangential slip of the EE.
        for i, n in normals.items():
            tangent = np.array([-n[1], n[0]])
            poses[i, 2] = wrap_angle(poses[i, 2] + config.rotation_gain * float(move @ tangent) / br)
        # (4) Walls.
        np.clip(xy[:, 0], br, BOARD_W - br, out=xy[:, 0])
        np.clip(xy[:, 1], br, BOARD_H - br, out=xy[:, 1])

    return BoardState(poses, target, state.tick + 1)


# ---------------------------------------------------------------------------
# Rendering (debugging / UI only; policies consume state vectors)

IMAGE_W, IMAGE_H = 320, 180
_SCALE = min(IMAGE_W / BOARD_W, IMAGE_H / BOARD_H)  # pixels per meter
_OFF_X = (IMAGE_W - BOARD_W * _SCALE) / 2.0
_OFF_Y = (IMAGE_H - BOARD_H * _SCALE) / 2.0

COLOR_RGB = {
    "red": (220, 50, 47),
    "blue": (38, 105, 226),
    "green": (60, 160, 70),
    "yellow": (230, 200, 40),
}
BOARD_RGB = (222, 196, 155)
OUTSIDE_RGB = (46, 46, 46)
EE_RGB = (105, 105, 105)


def pixels_per_meter() -> float:
    return _SCALE


def board_to_pixel(x: float, y: float) -> tuple[float, float]:
    """Board coords (y up) to image coords (row 0 at top). Returns (col, row)."""
    return (_OFF_X + x * _SCALE, IMAGE_H - 1 - (_OFF_Y + y * _SCALE))


def _polygon_vertices(shape: str, radius: float) -> np.ndarray:
    if shape == "cube":
        s = radius * 0.80
        return np.array([(-s, -s), (s, -s), (s, s), (-s, s)])
    if shape == "triangle":
        ang = np.deg2rad([90, 210, 330])
        return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    if shape == "hexagon":
        ang = np.deg2rad(np.arange(0, 360, 60))
        return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    if shape == "star":
        ang = np.deg2rad(90 + 36 * np.arange(10))
        r = np.where(np.arange(10) % 2 == 0, radius, 0.45 * radius)
        return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    raise ValueError(f"no polygon for shape {shape!r}")


def _points_in_polygon(px: np.ndarray, py: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Even-odd ray casting, vectorized over points."""
    inside = np.zeros(px.shape, dtype=bool)
    n = len(verts)
    for k in range(n):
        x1, y1 = verts[k]
        x2, y2 = verts[(k + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < xs)
    return inside


def _shape_mask(shape: str, u: np.ndarray, v: np.ndarray, radius: float) -> np.ndarray:
    """Membership test in the glyph, in block-local meters (u right, v up)."""
    if shape == "circle":
        return u * u + v * v <= radius * radius
    if shape == "heart":
        s = radius / 1.2
        x = u / s
        y = v / s + 0.25
        return (x * x + y * y - 1.0) ** 3 - x * x * y ** 3 <= 0.0
    return _points_in_polygon(u, v, _polygon_vertices(shape, radius))


def render(state: BoardState, config: SimConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Deterministic top-down raster, (180, 320, 3) uint8."""
    img = np.empty((IMAGE_H, IMAGE_W, 3), dtype=np.uint8)
    img[:] = OUTSIDE_RGB
    # Board rectangle.
    x0, y0 = board_to_pixel(0.0, BOARD_H)
    x1, y1 = board_to_pixel(BOARD_W, 0.0)
    img[int(math.ceil(y0)):int(y1) + 1, int(math.ceil(x0)):int(x1) + 1] = BOARD_RGB

    rows = np.arange(IMAGE_H, dtype=np.float64)
    cols = np.arange(IMAGE_W, dtype=np.float64)

    def paint_disc_or_glyph(cx, cy, radius, rgb, shape=None, theta=0.0):
        pcx, pcy = board_to_pixel(cx, cy)
        pr = radius * _SCALE + 1.5
        r0, r1 = max(0, int(pcy - pr)), min(IMAGE_H, int(pcy + pr) + 1)
        c0, c1 = max(0, int(pcx - pr)), min(IMAGE_W, int(pcx + pr) + 1)
        if r0 >= r1 or c0 >= c1:
            return
        # Pixel centers back to board-local meters around (cx, cy).
        u = (cols[c0:c1][None, :] - pcx) / _SCALE
        v = (pcy - rows[r0:r1][:, None]) / _SCALE
        u, v = np.broadcast_arrays(u, v)
        if shape is None:
            mask = u * u + v * v <= radius * radius
        else:
            ct, st = math.cos(-theta), math.sin(-theta)
            lu = ct * u - st * v
            lv = st * u + ct * v
            mask = _shape_mask(shape, lu, lv, radius)
        img[r0:r1, c0:c1][mask] = rgb

    for spec in BLOCKS:
        x, y, theta = state.block_poses[spec.id]
        paint_disc_or_glyph(x, y, config.block_radius, COLOR_RGB[spec.color],
                            shape=spec.shape, theta=theta)
    paint_disc_or_glyph(state.ee_pos[0], state.ee_pos[1], config.ee_radius, EE_RGB)
    return img
