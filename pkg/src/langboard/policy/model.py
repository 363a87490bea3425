"""Language-conditioned policy networks (forward + hand-written backward).

Two architectures share one training loop and batch layout:

* ``lava``: per frame, a single language token cross-attends to the 9
  object tokens through pre-norm decoder blocks (residual on the language
  stream only), a pre-norm temporal transformer with sinusoidal positions
  fuses the 4 frames and is average-pooled over time, and a deep residual
  MLP emits the 2D action in normalized space.
* ``mlp``: the same object tokens flattened and concatenated with the text
  embedding into a plain MLP; the architecture-ablation baseline.

Parameters live in a flat name->array dict; gradients mirror it exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import nn, text, tokens


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "lava"  # lava | mlp
    d_model: int = 64
    d_lang: int = 64
    n_fusion: int = 2
    n_temporal: int = 2
    n_heads: int = 2
    d_ff: int = 64
    dropout: float = 0.1
    vocab_size: int = text.VOCAB_SIZE
    seqlen: int = 4
    head_width: int = 128
    head_inner: int = 64
    head_blocks: int = 2
    mlp_hidden: int = 256

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text_: str) -> "ModelConfig":
        return cls(**json.loads(text_))


class InferenceError(RuntimeError):
    """A non-finite value appeared in the named stage."""

    def __init__(self, stage: str):
        super().__init__(f"non-finite output in stage {stage!r}")
        self.stage = stage


def make_batch(states: np.ndarray, instructions) -> dict:
    """Shared batch layout: object tokens plus padded hashed token ids."""
    ids, mask = text.pad_token_batch(instructions)
    return {
        "tokens": tokens.frame_tokens(np.asarray(states, dtype=np.float64)),
        "ids": ids,
        "mask": mask,
    }


def _normal(rng, shape, std):
    return rng.normal(0.0, std, size=shape)


def _he(rng, fan_in, shape):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _zeros(shape):
    return np.zeros(shape)


def _embed_fwd(p, ids, mask):
    """Mean of hashed-token embedding rows, per example."""
    rows = p["lang/table"][ids]                       # (B, L, d_lang)
    counts = mask.sum(axis=1, keepdims=True)
    emb = (rows * mask[..., None]).sum(axis=1) / counts
    return emb, (ids, mask, counts)


def _embed_bwd(grads, demb, cache, table_shape):
    ids, mask, counts = cache
    contrib = demb[:, None, :] * (mask / counts)[..., None]  # (B, L, d_lang)
    dtable = np.zeros(table_shape)
    np.add.at(dtable, ids.reshape(-1), contrib.reshape(-1, contrib.shape[-1]))
    grads["lang/table"] = grads.get("lang/table", 0) + dtable


class LavaModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        self.positions = nn.sinusoidal_positions(config.seqlen, config.d_model)

    # -- parameters ---------------------------------------------------------

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        c = self.config
        d, df = c.d_model, c.d_ff
        p: dict[str, np.ndarray] = {}
        p["lang/table"] = _normal(rng, (c.vocab_size, c.d_lang), 0.02)
        p["fuse/tok/W"] = _normal(rng, (tokens.TOKEN_DIM, d), 0.02)
        p["fuse/tok/b"] = _zeros(d)
        p["fuse/lang/W"] = _normal(rng, (c.d_lang, d), 0.02)
        p["fuse/lang/b"] = _zeros(d)
        for stack, n_layers in (("fuse", c.n_fusion), ("temp", c.n_temporal)):
            for i in range(n_layers):
                pre = f"{stack}/{i}"
                for ln in ("ln1", "ln2"):
                    p[f"{pre}/{ln}/g"] = np.ones(d)
                    p[f"{pre}/{ln}/b"] = _zeros(d)
                for proj in ("q", "k", "v", "o"):
                    p[f"{pre}/{proj}/W"] = _normal(rng, (d, d), 0.02)
                    p[f"{pre}/{proj}/b"] = _zeros(d)
                p[f"{pre}/ff1/W"] = _normal(rng, (d, df), 0.02)
                p[f"{pre}/ff1/b"] = _zeros(df)
                p[f"{pre}/ff2/W"] = _normal(rng, (df, d), 0.02)
                p[f"{pre}/ff2/b"] = _zeros(d)
            p[f"{stack}/ln/g"] = np.ones(d)
            p[f"{stack}/ln/b"] = _zeros(d)
        w, wi = c.head_width, c.head_inner
        p["head/in/W"] = _he(rng, d, (d, w))
        p["head/in/b"] = _zeros(w)
        for k in range(c.head_blocks):
            p[f"head/{k}/l1/W"] = _he(rng, w, (w, wi))
            p[f"head/{k}/l1/b"] = _zeros(wi)
            p[f"head/{k}/l2/W"] = _he(rng, wi, (wi, wi))
            p[f"head/{k}/l2/b"] = _zeros(wi)
            p[f"head/{k}/l3/W"] = _he(rng, wi, (wi, w))
            p[f"head/{k}/l3/b"] = _zeros(w)
        # Zero-init output so the untrained policy predicts the label mean.
        p["head/out/W"] = _zeros((w, 2))
        p["head/out/b"] = _zeros(2)
        return p

    # -- shared sub-blocks ----------------------------------------------------

    def _attn_block_fwd(self, p, pre, x, kv, drop_rng):
        """Pre-norm residual attention: x attends to kv (kv=x for self)."""
        c = self.config
        xn, c_ln = nn.layernorm_fwd(x, p[f"{pre}/ln1/g"], p[f"{pre}/ln1/b"])
        kv_in = xn if kv is None else kv
        Q, cq = nn.linear_fwd(xn, p[f"{pre}/q/W"], p[f"{pre}/q/b"])
        K, ck = nn.linear_fwd(kv_in, p[f"{pre}/k/W"], p[f"{pre}/k/b"])
        V, cv = nn.linear_fwd(kv_in, p[f"{pre}/v/W"], p[f"{pre}/v/b"])
        O, c_att = nn.attention_fwd(nn.split_heads(Q, c.n_heads),
                                    nn.split_heads(K, c.n_heads),
                                    nn.split_heads(V, c.n_heads))
        O = nn.merge_heads(O)
        O, co = nn.linear_fwd(O, p[f"{pre}/o/W"], p[f"{pre}/o/b"])
        O, cdo = nn.dropout_fwd(O, c.dropout, drop_rng)
        x = x + O
        xn2, c_ln2 = nn.layernorm_fwd(x, p[f"{pre}/ln2/g"], p[f"{pre}/ln2/b"])
        h1, cf1 = nn.linear_fwd(xn2, p[f"{pre}/ff1/W"], p[f"{pre}/ff1/b"])
        h1r, crelu = nn.relu_fwd(h1)
        f, cf2 = nn.linear_fwd(h1r, p[f"{pre}/ff2/W"], p[f"{pre}/ff2/b"])
        f, cdf = nn.dropout_fwd(f, c.dropout, drop_rng)
        x = x + f
        cache = dict(pre=pre, self_attn=kv is None, c_ln=c_ln, cq=cq, ck=ck, cv=cv,
                     c_att=c_att, co=co, cdo=cdo, c_ln2=c_ln2, cf1=cf1,
                     crelu=crelu, cf2=cf2, cdf=cdf)
        return x, cache

    def _attn_block_bwd(self, p, grads, dx, cache):
        c = self.config
        pre = cache["pre"]
        # FFN branch.
        df = nn.dropout_bwd(dx, cache["cdf"])
        dh1r, dW, db = nn.linear_bwd(df, cache["cf2"], p[f"{pre}/ff2/W"])
        grads[f"{pre}/ff2/W"] = grads.get(f"{pre}/ff2/W", 0) + dW
        grads[f"{pre}/ff2/b"] = grads.get(f"{pre}/ff2/b", 0) + db
        dh1 = nn.relu_bwd(dh1r, cache["crelu"])
        dxn2, dW, db = nn.linear_bwd(dh1, cache["cf1"], p[f"{pre}/ff1/W"])
        grads[f"{pre}/ff1/W"] = grads.get(f"{pre}/ff1/W", 0) + dW
        grads[f"{pre}/ff1/b"] = grads.get(f"{pre}/ff1/b", 0) + db
        dres, dg, db = nn.layernorm_bwd(dxn2, cache["c_ln2"])
        grads[f"{pre}/ln2/g"] = grads.get(f"{pre}/ln2/g", 0) + dg
        grads[f"{pre}/ln2/b"] = grads.get(f"{pre}/ln2/b", 0) + db
        dx = dx + dres
        # Attention branch.
        dO = nn.dropout_bwd(dx, cache["cdo"])
        dO, dW, db = nn.linear_bwd(dO, cache["co"], p[f"{pre}/o/W"])
        grads[f"{pre}/o/W"] = grads.get(f"{pre}/o/W", 0) + dW
        grads[f"{pre}/o/b"] = grads.get(f"{pre}/o/b", 0) + db
        dQh, dKh, dVh = nn.attention_bwd(nn.split_heads(dO, c.n_heads), cache["c_att"])
        dQ, dK, dV = nn.merge_heads(dQh), nn.merge_heads(dKh), nn.merge_heads(dVh)
        dxn, dW, db = nn.linear_bwd(dQ, cache["cq"], p[f"{pre}/q/W"])
        grads[f"{pre}/q/W"] = grads.get(f"{pre}/q/W", 0) + dW
        grads[f"{pre}/q/b"] = grads.get(f"{pre}/q/b", 0) + db
        dkv_in, dW, db = nn.linear_bwd(dK, cache["ck"], p[f"{pre}/k/W"])
        grads[f"{pre}/k/W"] = grads.get(f"{pre}/k/W", 0) + dW
        grads[f"{pre}/k/b"] = grads.get(f"{pre}/k/b", 0) + db
        dkv2, dW, db = nn.linear_bwd(dV, cache["cv"], p[f"{pre}/v/W"])
        grads[f"{pre}/v/W"] = grads.get(f"{pre}/v/W", 0) + dW
        grads[f"{pre}/v/b"] = grads.get(f"{pre}/v/b", 0) + db
        dkv = dkv_in + dkv2
        if cache["self_attn"]:
            dxn = dxn + dkv
            dkv = None
        dres, dg, db = nn.layernorm_bwd(dxn, cache["c_ln"])
        grads[f"{pre}/ln1/g"] = grads.get(f"{pre}/ln1/g", 0) + dg
        grads[f"{pre}/ln1/b"] = grads.get(f"{pre}/ln1/b", 0) + db
        dx = dx + dres
        return dx, dkv

    # -- full forward/backward ----------------------------------------------

    def forward(self, p: dict, batch: dict, drop_rng: np.random.Generator | None = None):
        c = self.config
        toks = batch["tokens"]
        B, S, T, _ = toks.shape
        if self.positions.dtype != toks.dtype:
            self.positions = self.positions.astype(toks.dtype)
        stages = {}

        emb, c_emb = _embed_fwd(p, batch["ids"], batch["mask"])
        stages["embed_text"] = emb

        tk, c_tok = nn.linear_fwd(toks.reshape(B * S, T, tokens.TOKEN_DIM),
                                  p["fuse/tok/W"], p["fuse/tok/b"])
        tk, c_tokdrop = nn.dropout_fwd(tk, c.dropout, drop_rng)
        q, c_lang = nn.linear_fwd(emb, p["fuse/lang/W"], p["fuse/lang/b"])
        q, c_langdrop = nn.dropout_fwd(q, c.dropout, drop_rng)
        x = np.repeat(q[:, None, :], S, axis=1).reshape(B * S, 1, c.d_model)
        fuse_caches = []
        for i in range(c.n_fusion):
            x, cache = self._attn_block_fwd(p, f"fuse/{i}", x, tk, drop_rng)
            fuse_caches.append(cache)
        x, c_fln = nn.layernorm_fwd(x, p["fuse/ln/g"], p["fuse/ln/b"])
        fused = x.reshape(B, S, c.d_model)
        stages["lava_fuse"] = fused

        t = fused + self.positions[None]
        temp_caches = []
        for i in range(c.n_temporal):
            t, cache = self._attn_block_fwd(p, f"temp/{i}", t, None, drop_rng)
            temp_caches.append(cache)
        t, c_tln = nn.layernorm_fwd(t, p["temp/ln/g"], p["temp/ln/b"])
        pooled = t.mean(axis=1)
        stages["temporal_fuse"] = pooled

        h, c_hin = nn.linear_fwd(pooled, p["head/in/W"], p["head/in/b"])
        head_caches = []
        for k in range(c.head_blocks):
            y1, c1 = nn.linear_fwd(h, p[f"head/{k}/l1/W"], p[f"head/{k}/l1/b"])
            y1r, cr1 = nn.relu_fwd(y1)
            y2, c2 = nn.linear_fwd(y1r, p[f"head/{k}/l2/W"], p[f"head/{k}/l2/b"])
            y2r, cr2 = nn.relu_fwd(y2)
            y3, c3 = nn.linear_fwd(y2r, p[f"head/{k}/l3/W"], p[f"head/{k}/l3/b"])
            h = h + y3
            head_caches.append((c1, cr1, c2, cr2, c3))
        pred, c_out = nn.linear_fwd(h, p["head/out/W"], p["head/out/b"])
        stages["action_head"] = pred

        cache = dict(shape=(B, S, T), c_emb=c_emb, c_tok=c_tok, c_tokdrop=c_tokdrop,
                     c_lang=c_lang, c_langdrop=c_langdrop, fuse_caches=fuse_caches,
                     c_fln=c_fln, temp_caches=temp_caches, c_tln=c_tln,
                     head_caches=head_caches, c_hin=c_hin, c_out=c_out,
                     stages=stages)
        return pred, cache

    def backward(self, p: dict, cache: dict, dpred: np.ndarray) -> dict[str, np.ndarray]:
        c = self.config
        B, S, T = cache["shape"]
        grads: dict[str, np.ndarray] = {}

        dh, dW, db = nn.linear_bwd(dpred, cache["c_out"], p["head/out/W"])
        grads["head/out/W"] = dW
        grads["head/out/b"] = db
        for k in reversed(range(c.head_blocks)):
            c1, cr1, c2, cr2, c3 = cache["head_caches"][k]
            dy3 = dh
            dy2r, dW, db = nn.linear_bwd(dy3, c3, p[f"head/{k}/l3/W"])
            grads[f"head/{k}/l3/W"], grads[f"head/{k}/l3/b"] = dW, db
            dy2 = nn.relu_bwd(dy2r, cr2)
            dy1r, dW, db = nn.linear_bwd(dy2, c2, p[f"head/{k}/l2/W"])
            grads[f"head/{k}/l2/W"], grads[f"head/{k}/l2/b"] = dW, db
            dy1 = nn.relu_bwd(dy1r, cr1)
            dhin, dW, db = nn.linear_bwd(dy1, c1, p[f"head/{k}/l1/W"])
            grads[f"head/{k}/l1/W"], grads[f"head/{k}/l1/b"] = dW, db
            dh = dh + dhin
        dpooled, dW, db = nn.linear_bwd(dh, cache["c_hin"], p["head/in/W"])
        grads["head/in/W"], grads["head/in/b"] = dW, db

        dt = np.repeat(dpooled[:, None, :] / S, S, axis=1)
        dt, dg, db = nn.layernorm_bwd(dt, cache["c_tln"])
        grads["temp/ln/g"], grads["temp/ln/b"] = dg, db
        for i in reversed(range(c.n_temporal)):
            dt, _ = self._attn_block_bwd(p, grads, dt, cache["temp_caches"][i])
        dfused = dt  # positions are constants

        dx = dfused.reshape(B * S, 1, c.d_model)
        dx, dg, db = nn.layernorm_bwd(dx, cache["c_fln"])
        grads["fuse/ln/g"], grads["fuse/ln/b"] = dg, db
        dtk_total = np.zeros((B * S, T, c.d_model))
        for i in reversed(range(c.n_fusion)):
            dx, dkv = self._attn_block_bwd(p, grads, dx, cache["fuse_caches"][i])
            dtk_total += dkv
        dq = dx.reshape(B, S, c.d_model).sum(axis=1)
        dq = nn.dropout_bwd(dq, cache["c_langdrop"])
        demb, dW, db = nn.linear_bwd(dq, cache["c_lang"], p["fuse/lang/W"])
        grads["fuse/lang/W"], grads["fuse/lang/b"] = dW, db
        dtk = nn.dropout_bwd(dtk_total, cache["c_tokdrop"])
        _, dW, db = nn.linear_bwd(dtk, cache["c_tok"], p["fuse/tok/W"])
        grads["fuse/tok/W"], grads["fuse/tok/b"] = dW, db
        _embed_bwd(grads, demb, cache["c_emb"], p["lang/table"].shape)
        return grads


class ConcatMlpModel:
    """Flattened tokens + text embedding through a plain MLP (baseline)."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.input_dim = (config.seqlen * tokens.TOKENS_PER_FRAME * tokens.TOKEN_DIM
                          + config.d_lang)

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        c = self.config
        h = c.mlp_hidden
        p = {"lang/table": _normal(rng, (c.vocab_size, c.d_lang), 0.02)}
        p["mlp/l1/W"] = _he(rng, self.input_dim, (self.input_dim, h))
        p["mlp/l1/b"] = _zeros(h)
        p["mlp/l2/W"] = _he(rng, h, (h, h))
        p["mlp/l2/b"] = _zeros(h)
        p["mlp/out/W"] = _zeros((h, 2))
        p["mlp/out/b"] = _zeros(2)
        return p

    def forward(self, p: dict, batch: dict, drop_rng: np.random.Generator | None = None):
        c = self.config
        toks = batch["tokens"]
        B = toks.shape[0]
        emb, c_emb = _embed_fwd(p, batch["ids"], batch["mask"])
        flat = np.concatenate([toks.reshape(B, -1), emb], axis=1)
        h1, c1 = nn.linear_fwd(flat, p["mlp/l1/W"], p["mlp/l1/b"])
        h1r, cr1 = nn.relu_fwd(h1)
        h1r, cd1 = nn.dropout_fwd(h1r, c.dropout, drop_rng)
        h2, c2 = nn.linear_fwd(h1r, p["mlp/l2/W"], p["mlp/l2/b"])
        h2r, cr2 = nn.relu_fwd(h2)
        h2r, cd2 = nn.dropout_fwd(h2r, c.dropout, drop_rng)
        pred, c3 = nn.linear_fwd(h2r, p["mlp/out/W"], p["mlp/out/b"])
        stages = {"embed_text": emb, "action_head": pred}
        cache = dict(c_emb=c_emb, c1=c1, cr1=cr1, cd1=cd1, c2=c2, cr2=cr2, cd2=cd2,
                     c3=c3, emb_dim=emb.shape[1], stages=stages)
        return pred, cache

    def backward(self, p: dict, cache: dict, dpred: np.ndarray) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        dh2r, dW, db = nn.linear_bwd(dpred, cache["c3"], p["mlp/out/W"])
        grads["mlp/out/W"], grads["mlp/out/b"] = dW, db
        dh2r = nn.dropout_bwd(dh2r, cache["cd2"])
        dh2 = nn.relu_bwd(dh2r, cache["cr2"])
        dh1r, dW, db = nn.linear_bwd(dh2, cache["c2"], p["mlp/l2/W"])
        grads["mlp/l2/W"], grads["mlp/l2/b"] = dW, db
        dh1r = nn.dropout_bwd(dh1r, cache["cd1"])
        dh1 = nn.relu_bwd(dh1r, cache["cr1"])
        dflat, dW, db = nn.linear_bwd(dh1, cache["c1"], p["mlp/l1/W"])
        grads["mlp/l1/W"], grads["mlp/l1/b"] = dW, db
        demb = dflat[:, -cache["emb_dim"]:]
        _embed_bwd(grads, demb, cache["c_emb"], p["lang/table"].shape)
        return grads


def build_model(config: ModelConfig):
    if config.kind == "lava":
        return LavaModel(config)
    if config.kind == "mlp":
        return ConcatMlpModel(config)
    raise ValueError(f"unknown model kind {config.kind!r}")


def mse_loss(pred: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over the batch of the squared action error; returns dpred too."""
    diff = pred - labels
    loss = float((diff * diff).sum(axis=1).mean())
    dpred = 2.0 * diff / len(labels)
    return loss, dpred
