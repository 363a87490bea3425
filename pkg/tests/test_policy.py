import numpy as np
import pytest

from langboard import sim, tasks
from langboard.datastore import TrainingSet
from langboard.policy import (ModelConfig, Normalizer, PolicyCheckpoint, TrainConfig,
                              TrainedPolicy, build_model, forward, grad_check,
                              make_batch, mse_loss, train)
from langboard.policy import nn, text, tokens
from langboard.policy.gradcheck import GradCheckReport
from langboard.policy.model import InferenceError
from langboard.policy.training import dropout_rng


def random_params(kind="lava", seed=1, jitter=0.01):
    cfg = ModelConfig(kind=kind)
    m = build_model(cfg)
    params = m.init_params(np.random.default_rng(seed))
    for k in params:
        params[k] = params[k] + jitter * np.random.default_rng(
            abs(hash(k)) % 2 ** 31).normal(size=params[k].shape)
    return cfg, m, params


def random_checkpoint(kind="lava", seed=1):
    cfg, m, params = random_params(kind, seed)
    return PolicyCheckpoint(config=cfg, params=params,
                            normalizer=Normalizer(np.zeros(2), np.ones(2)))


def sample_batch(n=6, seed=5):
    states = np.random.default_rng(seed).uniform(0.05, 0.4, (n, 4, 26))
    instr = ["push the blue cube to the red star", "nudge the yellow heart up",
             "separate the red star and the red circle",
             "move the green circle to the center"]
    return make_batch(states, [instr[i % len(instr)] for i in range(n)])


# -- text embedding -----------------------------------------------------------

def test_text_normalization_equivalence():
    cfg, m, params = random_params()
    table = params["lang/table"]
    a = text.embed_text("Push the RED star!!", table)
    b = text.embed_text("push the red star", table)
    assert np.array_equal(a, b)


def test_single_token_embedding_is_table_row():
    table = np.random.default_rng(0).normal(size=(text.VOCAB_SIZE, 8))
    row = text.embed_text("hexagon", table)
    assert np.array_equal(row, table[text.token_id("hexagon")])


def test_empty_text_rejected():
    table = np.zeros((16, 4))
    with pytest.raises(text.EmptyTextError):
        text.embed_text("  ?!  ", table)


def test_vocabulary_collision_rate_under_two_percent():
    words = set()
    for s in tasks._instruction_index():
        words.update(s.split())
    assert text.collision_rate(words) < 0.02


# -- object tokens ------------------------------------------------------------

def test_frame_tokens_layout():
    state = sim.state_vector(sim.reset(3))
    toks = tokens.frame_tokens(state)
    assert toks.shape == (9, tokens.TOKEN_DIM)
    for b in sim.BLOCKS:
        row = toks[b.id]
        assert row[4:8].sum() == 1.0 and row[4 + b.color_index] == 1.0
        assert row[8:14].sum() == 1.0 and row[8 + b.shape_index] == 1.0
        assert row[-1] == 0.0
        assert -1.0 <= row[0] <= 1.0 and -1.0 <= row[1] <= 1.0
    assert toks[8, -1] == 1.0  # EE flag
    assert toks[8, 2:14].sum() == 0.0


# -- layer-level gradient sanity -------------------------------------------------

def test_layernorm_backward_matches_fd():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 5))
    g = rng.normal(size=5)
    b = rng.normal(size=5)
    y, cache = nn.layernorm_fwd(x, g, b)
    dy = rng.normal(size=y.shape)
    dx, dg, db = nn.layernorm_bwd(dy, cache)
    eps = 1e-6
    for idx in np.ndindex(x.shape):
        xp = x.copy(); xp[idx] += eps
        xm = x.copy(); xm[idx] -= eps
        up = (nn.layernorm_fwd(xp, g, b)[0] * dy).sum()
        dn = (nn.layernorm_fwd(xm, g, b)[0] * dy).sum()
        assert dx[idx] == pytest.approx((up - dn) / (2 * eps), rel=1e-5, abs=1e-9)


def test_softmax_backward_matches_fd():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(2, 4))
    s = nn.softmax(z)
    ds = rng.normal(size=z.shape)
    dz = nn.softmax_backward(s, ds)
    eps = 1e-6
    for idx in np.ndindex(z.shape):
        zp = z.copy(); zp[idx] += eps
        zm = z.copy(); zm[idx] -= eps
        num = ((nn.softmax(zp) - nn.softmax(zm)) * ds).sum() / (2 * eps)
        assert dz[idx] == pytest.approx(num, rel=1e-5, abs=1e-9)


# -- model properties ----------------------------------------------------------

def test_lava_block_permutation_invariance():
    rng = np.random.default_rng(7)
    for trial in range(20):
        cfg, m, params = random_params(seed=trial)
        batch = sample_batch(n=2, seed=trial)
        pred, _ = m.forward(params, batch)
        perm = rng.permutation(8)
        toks = batch["tokens"].copy()
        toks[:, :, :8] = toks[:, :, perm]
        pred_p, _ = m.forward(params, {**batch, "tokens": toks})
        assert np.abs(pred - pred_p).max() <= 1e-12


def test_uniform_attention_is_mean_of_values():
    # Zeroing the query projection forces equal logits, so the attention
    # output must equal the mean of the value projections.
    cfg, m, params = random_params(seed=3)
    for k in params:
        if k.endswith("/q/W") or k.endswith("/q/b"):
            params[k] = np.zeros_like(params[k])
    batch = sample_batch(n=1)
    toks = batch["tokens"][0, 0][None]  # single frame
    tk, _ = nn.linear_fwd(toks, params["fuse/tok/W"], params["fuse/tok/b"])
    Q = np.zeros((1, 1, cfg.d_model))
    K, _ = nn.linear_fwd(tk, params["fuse/0/k/W"], params["fuse/0/k/b"])
    V, _ = nn.linear_fwd(tk, params["fuse/0/v/W"], params["fuse/0/v/b"])
    out, _ = nn.attention_fwd(nn.split_heads(Q, cfg.n_heads),
                              nn.split_heads(K, cfg.n_heads),
                              nn.split_heads(V, cfg.n_heads))
    assert np.allclose(nn.merge_heads(out)[0, 0], V.mean(axis=1)[0], atol=1e-12)


def test_temporal_identical_frames_match_single_frame_path():
    # With zeroed positional codes, self-attention over identical frames
    # reduces to the single-frame computation.
    cfg, m, params = random_params(seed=9)
    m.positions = np.zeros_like(m.positions)
    state = np.random.default_rng(0).uniform(0.1, 0.3, 26)
    batch4 = make_batch(np.tile(state, (1, 4, 1)), ["push the blue cube to the red star"])
    pred4, cache4 = m.forward(params, batch4)
    fused = cache4["stages"]["lava_fuse"]
    assert np.allclose(fused[0, 0], fused[0, 1], atol=1e-12)
    pooled = cache4["stages"]["temporal_fuse"]
    # All frames identical + no positions => pooled equals any single frame's
    # temporal output; compare against seqlen=1 temporal stack on one frame.
    single = fused[:, :1, :]
    t = single
    import langboard.policy.model as model_lib
    for i in range(cfg.n_temporal):
        t, _ = m._attn_block_fwd(params, f"temp/{i}", t, None, None)
    t, _ = nn.layernorm_fwd(t, params["temp/ln/g"], params["temp/ln/b"])
    assert np.allclose(pooled, t.mean(axis=1), atol=1e-10)


def test_temporal_order_sensitivity_with_positions():
    cfg, m, params = random_params(seed=11)
    states = np.random.default_rng(2).uniform(0.05, 0.4, (1, 4, 26))
    fwd = m.forward(params, make_batch(states, ["nudge the yellow heart up"]))[0]
    rev = m.forward(params, make_batch(states[:, ::-1], ["nudge the yellow heart up"]))[0]
    assert np.abs(fwd - rev).max() > 1e-8


def test_action_head_zero_weights_returns_bias():
    cfg, m, params = random_params(seed=13, jitter=0.0)
    for k in list(params):
        if k.startswith("head/"):
            params[k] = np.zeros_like(params[k])
    params["head/out/b"] = np.array([0.3, -0.7])
    batch = sample_batch(n=4)
    pred, _ = m.forward(params, batch)
    assert np.allclose(pred, [0.3, -0.7], atol=1e-12)


def test_action_head_slope_bounded_on_random_pairs():
    # Continuity probe: finite difference quotients along random pairs stay
    # bounded (the head is a fixed composition of Lipschitz maps).
    cfg, m, params = random_params(seed=15)
    rng = np.random.default_rng(0)
    states = rng.uniform(0.05, 0.4, (2, 4, 26))
    quotients = []
    for _ in range(20):
        a = rng.uniform(0.05, 0.4, (1, 4, 26))
        b = a + rng.normal(scale=1e-4, size=a.shape)
        pa = m.forward(params, make_batch(a, ["nudge the yellow heart up"]))[0]
        pb = m.forward(params, make_batch(b, ["nudge the yellow heart up"]))[0]
        quotients.append(np.linalg.norm(pa - pb) / np.linalg.norm(a - b))
    assert max(quotients) < 1e3


def test_forward_clamps_and_is_finite():
    ck = random_checkpoint()
    history = np.random.default_rng(3).uniform(0.0, 0.4, (4, 26))
    action = forward(history, "push the blue cube to the red star", ck)
    assert action.shape == (2,)
    assert np.isfinite(action).all()
    assert np.abs(action).max() <= sim.DEFAULT_CONFIG.max_delta + 1e-12


def test_forward_inherits_permutation_invariance():
    ck = random_checkpoint(seed=21)
    history = np.random.default_rng(4).uniform(0.0, 0.4, (4, 26))
    base = forward(history, "push the blue cube to the red star", ck)
    perm = np.random.default_rng(5).permutation(8)
    permuted = history.copy()
    poses = permuted[:, :24].reshape(4, 8, 3)
    permuted[:, :24] = poses[:, perm].reshape(4, 24)
    swapped = forward(permuted, "push the blue cube to the red star", ck)
    assert np.abs(base - swapped).max() <= 1e-12


def test_forward_names_nonfinite_stage():
    ck = random_checkpoint(seed=23)
    ck.params["head/out/W"] = ck.params["head/out/W"] + np.nan
    history = np.random.default_rng(6).uniform(0.0, 0.4, (4, 26))
    with pytest.raises(InferenceError) as err:
        forward(history, "push the blue cube to the red star", ck)
    assert err.value.stage == "action_head"


# -- gradient verification -------------------------------------------------------

@pytest.mark.parametrize("kind", ["lava", "mlp"])
def test_grad_check_passes(kind):
    ck = random_checkpoint(kind)
    batch = sample_batch(n=6)
    labels = np.random.default_rng(8).normal(size=(6, 2))
    report = grad_check(ck, batch, labels, min_coords=200)
    assert isinstance(report, GradCheckReport)
    assert report.coords_checked >= 170
    assert set(report.per_tensor) == set(ck.params)
    assert report.max_rel_error <= 1e-4


def test_grad_check_detects_corrupted_softmax(monkeypatch):
    # Mutation fixture: a subtly wrong softmax backward must be flagged.
    def corrupted(s, ds):
        return s * (ds - 0.9 * (ds * s).sum(axis=-1, keepdims=True))

    monkeypatch.setattr(nn, "softmax_backward", corrupted)
    ck = random_checkpoint()
    batch = sample_batch(n=6)
    labels = np.random.default_rng(9).normal(size=(6, 2))
    report = grad_check(ck, batch, labels, min_coords=120)
    assert report.max_rel_error > 1e-2


def test_grad_check_zero_gradient_fallback():
    # Parameters with (near-)zero gradients fall back to an absolute check
    # instead of dividing by zero.
    ck = random_checkpoint(seed=29)
    # Zero head => most gradients upstream vanish identically.
    for k in list(ck.params):
        if k.startswith("head/"):
            ck.params[k] = np.zeros_like(ck.params[k])
    batch = sample_batch(n=4)
    labels = np.zeros((4, 2))
    report = grad_check(ck, batch, labels, min_coords=60)
    assert np.isfinite(report.max_rel_error)
    assert report.max_rel_error <= 1e-4


# -- normalizer -------------------------------------------------------------------

def test_normalizer_degenerate_data_rejected():
    with pytest.raises(Exception):
        Normalizer.fit(np.ones((10, 2)))


def test_normalizer_statistics_and_roundtrip():
    actions = np.random.default_rng(10).normal([0.01, -0.002], [0.02, 0.005], (500, 2))
    norm = Normalizer.fit(actions)
    z = norm.apply(actions)
    assert np.abs(z.mean(axis=0)).max() < 1e-6
    assert np.abs(z.std(axis=0) - 1).max() < 1e-6
    back = norm.invert(z)
    assert np.abs(back - actions).max() < 1e-12


# -- training ---------------------------------------------------------------------

def tiny_dataset(n=32, seed=0):
    rng = np.random.default_rng(seed)
    states = rng.uniform(0.05, 0.4, (n, 4, 26))
    actions = rng.uniform(-0.03, 0.03, (n, 2))
    conds = tasks.enumerate_conditions("block2block")
    instructions = np.array([tasks.canonical_instruction(conds[i % 8]) for i in range(n)],
                            dtype=np.str_)
    return TrainingSet(states=states, actions=actions, instructions=instructions)


def test_initial_loss_near_two():
    # Labels are normalized to N(0,1) per dim and the output layer starts at
    # zero, so the first batch loss is the label second moment (about 2).
    ds = tiny_dataset(256, seed=1)
    _, curve = train(ds, ModelConfig(), TrainConfig(steps=1, batch_size=256), seed=0)
    assert curve[0][1] == pytest.approx(2.0, abs=0.35)


def test_overfits_tiny_dataset():
    # Memorization oracle: 32 examples must be driven to near-zero MSE.
    # Dropout off: the oracle validates the optimizer, not regularization.
    ds = tiny_dataset(32)
    ckpt, curve = train(ds, ModelConfig(dropout=0.0),
                        TrainConfig(steps=2000, batch_size=32, dtype="float64",
                                    static_history_fraction=0.0),
                        seed=0)
    m = build_model(ckpt.config)
    toks = tokens.frame_tokens(ds.states.astype(np.float64))
    ids, mask = text.pad_token_batch(list(ds.instructions))
    pred, _ = m.forward({k: v.astype(np.float64) for k, v in ckpt.params.items()},
                        {"tokens": toks, "ids": ids, "mask": mask})
    loss, _ = mse_loss(pred, ckpt.normalizer.apply(ds.actions))
    assert loss < 1e-3


def test_training_is_deterministic():
    ds = tiny_dataset(64, seed=2)
    a, _ = train(ds, ModelConfig(), TrainConfig(steps=40, batch_size=32), seed=5)
    b, _ = train(ds, ModelConfig(), TrainConfig(steps=40, batch_size=32), seed=5)
    assert a.hash() == b.hash()
    c, _ = train(ds, ModelConfig(), TrainConfig(steps=40, batch_size=32), seed=6)
    assert c.hash() != a.hash()


def test_checkpoint_roundtrip(tmp_path):
    ds = tiny_dataset(32, seed=3)
    ckpt, _ = train(ds, ModelConfig(kind="mlp"), TrainConfig(steps=10, batch_size=32),
                    seed=1)
    path = tmp_path / "policy.npz"
    ckpt.save(path)
    back = PolicyCheckpoint.load(path)
    assert back.hash() == ckpt.hash()
    assert back.config == ckpt.config
    assert back.train_steps == ckpt.train_steps
    pol = TrainedPolicy(back)
    action = pol.act(np.random.default_rng(0).uniform(0, 0.4, (4, 26)),
                     "push the blue cube to the red star")
    assert np.isfinite(action).all()


def test_dropout_rng_is_counter_based():
    a = dropout_rng(3, 10).random(5)
    b = dropout_rng(3, 10).random(5)
    c = dropout_rng(3, 11).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
