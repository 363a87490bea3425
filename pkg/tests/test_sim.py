import math

import numpy as np
import pytest

from langboard import sim


def rollout_states(seed, actions, config=sim.DEFAULT_CONFIG):
    state = sim.reset(seed, config)
    out = [sim.state_vector(state)]
    for a in actions:
        state = sim.step(state, a, config)
        out.append(sim.state_vector(state))
    return np.array(out)


def test_reset_deterministic():
    a = sim.reset(7)
    b = sim.reset(7)
    assert np.array_equal(a.block_poses, b.block_poses)
    assert np.array_equal(a.ee_pos, b.ee_pos)
    assert a.tick == 0


def test_reset_no_overlap():
    cfg = sim.DEFAULT_CONFIG
    for seed in range(50):
        s = sim.reset(seed)
        xy = s.block_poses[:, :2]
        for i in range(sim.NUM_BLOCKS):
            for j in range(i + 1, sim.NUM_BLOCKS):
                assert np.hypot(*(xy[i] - xy[j])) > 2 * cfg.block_radius
            assert np.hypot(*(xy[i] - s.ee_pos)) > cfg.block_radius + cfg.ee_radius


def test_reset_positions_uniform_monte_carlo():
    # Independent oracle: empirical mean over 1000 seeds should sit near the
    # board center, within 5% of the board diagonal.
    means = np.array([sim.reset(seed).block_poses[:, :2].mean(axis=0)
                      for seed in range(1000)])
    center = np.array([sim.BOARD_W / 2, sim.BOARD_H / 2])
    diag = math.hypot(sim.BOARD_W, sim.BOARD_H)
    assert np.hypot(*(means.mean(axis=0) - center)) < 0.05 * diag


def test_reset_rejection_failure_is_config_error():
    with pytest.raises(sim.ConfigurationError):
        sim.reset(0, sim.SimConfig(block_radius=0.2))  # cannot pack 8 such discs


def test_zero_action_without_contact_is_fixed_point():
    state = sim.reset(3)
    # EE starts away from all blocks by reset construction.
    nxt = sim.step(state, (0.0, 0.0))
    assert np.array_equal(nxt.block_poses, state.block_poses)
    assert np.array_equal(nxt.ee_pos, state.ee_pos)
    assert nxt.tick == state.tick + 1


def test_step_is_pure():
    state = sim.reset(3)
    before = state.block_poses.copy(), state.ee_pos.copy()
    sim.step(state, (0.03, -0.02))
    assert np.array_equal(state.block_poses, before[0])
    assert np.array_equal(state.ee_pos, before[1])


def test_locality_no_contact_no_motion():
    cfg = sim.DEFAULT_CONFIG
    state = sim.reset(11)
    # Move the EE around in free space near its start (blocks are elsewhere).
    for a in [(0.002, 0.002), (-0.002, 0.001), (0.001, -0.002)]:
        nxt = sim.step(state, a)
        reach = cfg.ee_radius + cfg.block_radius
        dists = np.hypot(*(state.block_poses[:, :2] - nxt.ee_pos).T)
        if (dists > reach + 0.05).all():
            assert np.array_equal(nxt.block_poses, state.block_poses)
        state = nxt


def dead_center_setup(gap, config):
    """EE left of block 0, same y, moving right; other blocks parked far."""
    poses = np.zeros((sim.NUM_BLOCKS, 3))
    ys = np.linspace(0.05, sim.BOARD_H - 0.05, sim.NUM_BLOCKS)
    for i in range(sim.NUM_BLOCKS):
        poses[i] = (0.55, ys[i], 0.0)
    poses[0] = (0.3, 0.2, 0.0)
    ee = np.array([0.3 - config.contact_dist - gap, 0.2])
    return sim.BoardState(poses, ee, 0)


def test_dead_center_push_matches_fine_substep_oracle():
    # Oracle: brute-force integration with 1000 substeps per tick.
    gap = 0.004
    advance = 0.05  # two ticks of 0.025
    coarse_cfg = sim.DEFAULT_CONFIG
    fine_cfg = sim.SimConfig(substeps_per_tick=1000)
    results = {}
    for name, cfg in (("coarse", coarse_cfg), ("fine", fine_cfg)):
        state = dead_center_setup(gap, cfg)
        state = sim.step(state, (advance / 2, 0.0), cfg)
        state = sim.step(state, (advance / 2, 0.0), cfg)
        results[name] = state.block_poses[0, :2].copy()
    expected_displacement = advance - gap
    assert results["fine"][0] - 0.3 == pytest.approx(expected_displacement, abs=1e-6)
    assert np.hypot(*(results["coarse"] - results["fine"])) < 1e-3
    assert abs(results["coarse"][1] - 0.2) < 1e-9  # direction along motion


def test_substep_convergence_on_random_pushes():
    rng = np.random.default_rng(0)
    base = sim.DEFAULT_CONFIG
    double = sim.SimConfig(substeps_per_tick=base.substeps_per_tick * 2)
    for seed in range(5):
        state = sim.reset(seed)
        action = rng.uniform(-0.03, 0.03, 2)
        a = sim.step(state, action, base)
        b = sim.step(state, action, double)
        delta = np.hypot(*(a.block_poses[:, :2] - b.block_poses[:, :2]).T)
        assert delta.max() < 1e-3


def test_containment_under_random_rollout():
    rng = np.random.default_rng(42)
    state = sim.reset(5)
    for _ in range(200):
        state = sim.step(state, rng.uniform(-0.05, 0.05, 2))
        xy = state.block_poses[:, :2]
        assert (xy >= 0).all() and (xy[:, 0] <= sim.BOARD_W).all() \
            and (xy[:, 1] <= sim.BOARD_H).all()
        assert (state.ee_pos >= 0).all()
        assert not np.isnan(state.block_poses).any()


def test_determinism_bitwise_over_rollout():
    rng = np.random.default_rng(1)
    actions = rng.uniform(-0.03, 0.03, (100, 2))
    a = rollout_states(9, actions)
    b = rollout_states(9, actions)
    assert np.array_equal(a, b)


def test_action_clamped_not_rejected():
    state = sim.reset(2)
    big = sim.step(state, (10.0, -10.0))
    small = sim.step(state, (0.03, -0.03))
    assert np.array_equal(big.ee_pos, small.ee_pos)


def test_theta_stays_wrapped():
    rng = np.random.default_rng(3)
    state = sim.reset(3)
    for _ in range(100):
        state = sim.step(state, rng.uniform(-0.03, 0.03, 2))
    theta = state.block_poses[:, 2]
    assert (theta >= -math.pi).all() and (theta < math.pi).all()


def test_state_vector_layout_and_roundtrip():
    state = sim.reset(4)
    vec = sim.state_vector(state)
    assert vec.shape == (26,)
    assert vec[24] == state.ee_pos[0] and vec[25] == state.ee_pos[1]
    back = sim.state_from_vector(vec, tick=state.tick)
    assert np.array_equal(sim.state_vector(back), vec)
    zero = sim.state_from_vector(np.zeros(26))
    assert np.array_equal(sim.state_vector(zero), np.zeros(26))


def test_config_file_roundtrip(tmp_path):
    cfg = sim.SimConfig(substeps_per_tick=16, rotation_gain=0.25)
    path = tmp_path / "sim.cfg"
    path.write_text(cfg.dump() + "# trailing comment\n")
    assert sim.SimConfig.load(path) == cfg
    bad = tmp_path / "bad.cfg"
    bad.write_text("substeps_per_tick 4 16\n")
    with pytest.raises(sim.ConfigurationError):
        sim.SimConfig.load(bad)
    unknown = tmp_path / "unknown.cfg"
    unknown.write_text("wheels 4\n")
    with pytest.raises(sim.ConfigurationError):
        sim.SimConfig.load(unknown)


# -- rendering ---------------------------------------------------------------

def test_render_deterministic_and_shaped():
    state = sim.reset(6)
    a = sim.render(state)
    b = sim.render(state)
    assert a.shape == (180, 320, 3) and a.dtype == np.uint8
    assert np.array_equal(a, b)


def test_render_block_pixels_inside_board():
    state = sim.reset(8)
    img = sim.render(state)
    x0, y_top = sim.board_to_pixel(0.0, sim.BOARD_H)
    x1, y_bot = sim.board_to_pixel(sim.BOARD_W, 0.0)
    for rgb in sim.COLOR_RGB.values():
        mask = (img == rgb).all(axis=2)
        rows, cols = np.nonzero(mask)
        if len(rows):
            assert rows.min() >= math.floor(y_top) and rows.max() <= math.ceil(y_bot)
            assert cols.min() >= math.floor(x0) and cols.max() <= math.ceil(x1)


def test_render_centroid_tracks_block_motion():
    # Pixel-centroid oracle: moving a block 0.1 m right moves its glyph
    # centroid by 0.1 * pixels-per-meter, within 2 px.
    poses = np.zeros((sim.NUM_BLOCKS, 3))
    ys = np.linspace(0.06, sim.BOARD_H - 0.06, sim.NUM_BLOCKS)
    for i in range(sim.NUM_BLOCKS):
        poses[i] = (0.08, ys[i], 0.0)
    tracked = 7  # blue cube; keep the other blue block far away
    poses[tracked] = (0.2, 0.2, 0.0)
    poses[4] = (0.55, 0.4, 0.0)
    ee = np.array([0.55, 0.05])

    def centroid(state):
        img = sim.render(state)
        mask = (img == sim.COLOR_RGB["blue"]).all(axis=2)
        cols = np.nonzero(mask)[1]
        return cols[cols < 200].mean()  # the other blue block sits near col 256

    before = sim.BoardState(poses.copy(), ee.copy(), 0)
    after_poses = poses.copy()
    after_poses[tracked, 0] += 0.1
    after = sim.BoardState(after_poses, ee.copy(), 0)
    shift = centroid(after) - centroid(before)
    assert shift == pytest.approx(0.1 * sim.pixels_per_meter(), abs=2.0)
