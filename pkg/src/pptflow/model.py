"""Periodic-pattern forecasting network.

Forward pass: linear embedding with sinusoidal positions, zero-extended by
the forecast horizon, a stack of periodic blocks (FFT period detection,
period-aligned 2D folding, multi-scale convolution, amplitude/attention
weighted fusion, residual), then a causally masked self-attention decoder
whose learned queries are conditioned on the final horizon positions of
the encoder output, and a per-step linear head back to feature space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Tensor
from .errors import (
    ConfigurationError,
    NumericFailureError,
    UniformWeightFallbackWarning,
)
from .periods import detect_periods

FUSION_EPS = 1e-12


@dataclass
class PPTNetConfig:
    C: int = 12
    d_model: int = 64
    d_ff: int = 128
    heads: int = 4
    top_k: int = 6
    num_periodic_blocks: int = 3
    num_decoder_layers: int = 2
    T: int = 30
    H: int = 15
    kernel_sizes: tuple = (1, 3, 5)
    dropout: float = 0.2
    agg_hidden: int = 16
    use_periodic_blocks: bool = True
    use_decoder: bool = True

    def __post_init__(self):
        self.kernel_sizes = tuple(self.kernel_sizes)
        if self.d_model % self.heads != 0:
            raise ConfigurationError(
                f"d_model={self.d_model} not divisible by heads={self.heads}"
            )
        if self.T < self.H:
            raise ConfigurationError(f"need T >= H, got T={self.T}, H={self.H}")
        for name in ("C", "d_model", "d_ff", "heads", "top_k",
                     "num_periodic_blocks", "num_decoder_layers", "T", "H"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for r in self.kernel_sizes:
            if r % 2 == 0:
                raise ConfigurationError(
                    f"inception kernel sizes must be odd, got {r}"
                )

    @property
    def d_k(self):
        return self.d_model // self.heads


# ---------------------------------------------------------------------------
# stateless building blocks
# ---------------------------------------------------------------------------


def positional_encoding(length, d_model):
    """Interleaved sin/cos positional table of shape [length, d_model]."""
    pe = np.zeros((length, d_model))
    positions = np.arange(length)[:, None]
    pair = np.arange(0, d_model, 2)
    omega = 1.0 / (10000.0 ** (pair / d_model))
    pe[:, 0::2] = np.sin(positions * omega[None, :])
    pe[:, 1::2] = np.cos(positions * omega[None, : pe[:, 1::2].shape[1]])
    return pe


def embed(x, w_e, pe):
    """Linear projection plus positional encoding: x @ W_e + p_t."""
    x = ad.as_tensor(x)
    if x.shape[-1] != w_e.shape[0]:
        raise ad.ShapeMismatchError(
            f"embed: feature count {x.shape[-1]} != W_e rows {w_e.shape[0]}"
        )
    return ad.add(ad.matmul(x, w_e), ad.constant(pe[: x.shape[1]]))


def pad_and_reshape(x, period, total_len):
    """Fold [B, total_len, d] into a period-aligned grid [B, d, p, L/p].

    The sequence is zero-padded to the smallest multiple L of the period;
    each grid column holds one full cycle (within-period position varies
    along the axis of extent p).
    """
    if period < 2:
        raise ConfigurationError(f"period must be >= 2, got {period}")
    x = ad.as_tensor(x)
    b, l0, d = x.shape
    cycles = -(-total_len // period)
    l_full = cycles * period
    if l_full > l0:
        zeros = ad.constant(np.zeros((b, l_full - l0, d)))
        x = ad.concat([x, zeros], axis=1)
    grid = ad.reshape(x, (b, cycles, period, d))
    return ad.transpose(grid, (0, 3, 2, 1))


def inverse_reshape(grid, total_len):
    """Unfold [B, d, p, cycles] back to [B, total_len, d]."""
    grid = ad.as_tensor(grid)
    b, d, period, cycles = grid.shape
    x = ad.transpose(grid, (0, 3, 2, 1))
    x = ad.reshape(x, (b, cycles * period, d))
    return x[:, :total_len, :]


def inception_2d(grid, kernels):
    """Average of same-padded convolutions over all configured kernel sizes."""
    if not kernels:
        raise ConfigurationError("inception_2d requires at least one kernel")
    acc = None
    for kernel in kernels:
        y = ad.conv2d_same(grid, kernel)
        acc = y if acc is None else ad.add(acc, y)
    return ad.mul(acc, 1.0 / len(kernels))


def adaptive_aggregate(branches, a, w1, b1, w2, b2):
    """Fuse period branches with amplitude- and attention-derived weights.

    Scores come from a two-layer ReLU network over the channel-mean of
    each branch at the last time step; softmax scores are multiplied by
    the per-sample amplitude weights ``a`` and renormalized.  Rows whose
    normalizer underflows fall back to uniform weights with a warning.
    """
    k = len(branches)
    cols = [
        ad.reshape(branch[:, -1, :].mean(axis=-1), (-1, 1)) for branch in branches
    ]
    u = ad.concat(cols, axis=1)                               # [B, k]
    hidden = ad.relu(ad.add(ad.matmul(u, w1), b1))
    scores = ad.add(ad.matmul(hidden, w2), b2)                # [B, k]
    alpha = ad.softmax_lastdim(scores)
    raw = ad.mul(a, alpha)                                    # [B, k]
    denom = raw.sum(axis=1, keepdims=True)                    # [B, 1]
    bad = denom.data[:, 0] < FUSION_EPS
    if np.any(bad):
        warnings.warn(
            "fusion-weight normalizer underflowed for "
            f"{int(bad.sum())} sample(s); using uniform weights",
            UniformWeightFallbackWarning,
        )
        keep = ad.constant((~bad)[:, None].astype(np.float64))
        fallback = ad.constant(bad[:, None] * np.full((1, k), 1.0 / k))
        safe_denom = ad.constant(np.where(bad[:, None], 1.0, denom.data))
        weights = ad.add(ad.mul(ad.div(raw, safe_denom), keep), fallback)
    else:
        weights = ad.div(raw, denom)
    out = None
    for i, branch in enumerate(branches):
        w_i = ad.reshape(weights[:, i:i + 1], (-1, 1, 1))
        term = ad.mul(w_i, branch)
        out = term if out is None else ad.add(out, term)
    return out


def causal_mask(h_len):
    """[H, H] additive mask: -inf strictly above the diagonal."""
    mask = np.zeros((h_len, h_len))
    mask[np.triu_indices(h_len, k=1)] = -np.inf
    return mask


# ---------------------------------------------------------------------------
# the network
# ---------------------------------------------------------------------------


@dataclass
class _DecoderLayerParams:
    w_q: Param
    w_k: Param
    w_v: Param
    w_out: Param
    b_out: Param
    ln1_gain: Param
    ln1_bias: Param
    ffn_w1: Param
    ffn_b1: Param
    ffn_w2: Param
    ffn_b2: Param
    ln2_gain: Param
    ln2_bias: Param


@dataclass
class _BlockParams:
    kernels: list                 # one Param per kernel size
    agg_w1: Param
    agg_b1: Param
    agg_w2: Param
    agg_b2: Param


class PPTNet:
    """Forecasting network; owns parameters, RNG, and the forward pass."""

    def __init__(self, config, seed=0):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        cfg = config
        init = self.rng

        def glorot(shape, name):
            fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
            fan_out = shape[-1]
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            return Param(init.normal(0.0, scale, size=shape), name)

        self.w_e = glorot((cfg.C, cfg.d_model), "embed.W_e")
        self.pe = positional_encoding(cfg.T + cfg.H, cfg.d_model)

        self.blocks = []
        for bi in range(cfg.num_periodic_blocks):
            kernels = []
            for r in cfg.kernel_sizes:
                # small init keeps the residual path near identity at start
                kernels.append(
                    Param(
                        init.normal(
                            0.0, 0.02 / (r * np.sqrt(cfg.d_model)),
                            size=(cfg.d_model, cfg.d_model, r, r),
                        ),
                        f"block{bi}.K{r}",
                    )
                )
            self.blocks.append(
                _BlockParams(
                    kernels=kernels,
                    agg_w1=glorot((cfg.top_k, cfg.agg_hidden), f"block{bi}.agg.W1"),
                    agg_b1=Param(np.zeros(cfg.agg_hidden), f"block{bi}.agg.b1"),
                    agg_w2=glorot((cfg.agg_hidden, cfg.top_k), f"block{bi}.agg.W2"),
                    agg_b2=Param(np.zeros(cfg.top_k), f"block{bi}.agg.b2"),
                )
            )

        self.q0 = Param(
            init.normal(0.0, 0.02, size=(cfg.H, cfg.d_model)), "decoder.Q0"
        )
        self.decoder_layers = []
        for li in range(cfg.num_decoder_layers):
            d = cfg.d_model
            self.decoder_layers.append(
                _DecoderLayerParams(
                    w_q=glorot((d, d), f"dec{li}.W_q"),
                    w_k=glorot((d, d), f"dec{li}.W_k"),
                    w_v=glorot((d, d), f"dec{li}.W_v"),
                    w_out=glorot((d, d), f"dec{li}.W_out"),
                    b_out=Param(np.zeros(d), f"dec{li}.b_out"),
                    ln1_gain=Param(np.ones(d), f"dec{li}.ln1.gain"),
                    ln1_bias=Param(np.zeros(d), f"dec{li}.ln1.bias"),
                    ffn_w1=glorot((d, cfg.d_ff), f"dec{li}.ffn.W1"),
                    ffn_b1=Param(np.zeros(cfg.d_ff), f"dec{li}.ffn.b1"),
                    ffn_w2=glorot((cfg.d_ff, d), f"dec{li}.ffn.W2"),
                    ffn_b2=Param(np.zeros(d), f"dec{li}.ffn.b2"),
                    ln2_gain=Param(np.ones(d), f"dec{li}.ln2.gain"),
                    ln2_bias=Param(np.zeros(d), f"dec{li}.ln2.bias"),
                )
            )

        self.w_o = glorot((cfg.d_model, cfg.C), "head.W_o")
        self.b_o = Param(np.zeros(cfg.C), "head.b_o")
        self._mask = causal_mask(cfg.H)

    # -- parameter plumbing ------------------------------------------------

    def parameters(self):
        params = [self.w_e]
        for block in self.blocks:
            params.extend(block.kernels)
            params.extend([block.agg_w1, block.agg_b1, block.agg_w2, block.agg_b2])
        params.append(self.q0)
        for layer in self.decoder_layers:
            params.extend(
                getattr(layer, f.name) for f in layer.__dataclass_fields__.values()
            )
        params.extend([self.w_o, self.b_o])
        return params

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_arrays(self):
        return {p.name: p.data for p in self.parameters()}

    def load_state_arrays(self, state):
        for p in self.parameters():
            if p.name not in state:
                raise KeyError(f"missing parameter {p.name!r} in state")
            if state[p.name].shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {p.name!r}: "
                    f"{state[p.name].shape} vs {p.data.shape}"
                )
            p.data[...] = state[p.name]

    # -- forward pieces ----------------------------------------------------

    def periodic_block(self, x, block, training=False):
        """One encoder unit; returns a tensor of the input's shape."""
        cfg = self.config
        total = x.shape[1]
        period_set, a = detect_periods(x, cfg.top_k)
        if not period_set.entries:
            return x
        branches = []
        for entry in period_set.entries:
            grid = pad_and_reshape(x, entry.period, total)
            feat = inception_2d(grid, block.kernels)
            branches.append(inverse_reshape(feat, total))
        k_eff = len(branches)
        if k_eff < cfg.top_k:
            # slice the aggregation net down to the branches that exist
            w1 = block.agg_w1[:k_eff, :]
            w2 = block.agg_w2[:, :k_eff]
            b2 = block.agg_b2[:k_eff]
        else:
            w1, w2, b2 = block.agg_w1, block.agg_w2, block.agg_b2
        fused = adaptive_aggregate(branches, a, w1, block.agg_b1, w2, b2)
        return ad.add(fused, x)

    def _mhsa(self, q, layer, training):
        cfg = self.config
        b, h_len, d = q.shape
        heads, d_k = cfg.heads, cfg.d_k

        def split(t):
            t = ad.reshape(t, (b, h_len, heads, d_k))
            return ad.transpose(t, (0, 2, 1, 3))              # [B, h, H, d_k]

        qh = split(ad.matmul(q, layer.w_q))
        kh = split(ad.matmul(q, layer.w_k))
        vh = split(ad.matmul(q, layer.w_v))
        scores = ad.mul(
            ad.matmul(qh, ad.transpose(kh, (0, 1, 3, 2))), 1.0 / np.sqrt(d_k)
        )
        scores = ad.add(scores, ad.constant(self._mask))
        attn = ad.softmax_lastdim(scores)
        ctx = ad.matmul(attn, vh)                             # [B, h, H, d_k]
        ctx = ad.transpose(ctx, (0, 2, 1, 3))
        ctx = ad.reshape(ctx, (b, h_len, d))
        out = ad.add(ad.matmul(ctx, layer.w_out), layer.b_out)
        return ad.dropout(out, cfg.dropout, self.rng, training)

    def decoder_stack(self, q, training=False):
        """Masked decoder layers over queries [B, H, d_model]."""
        cfg = self.config
        for layer in self.decoder_layers:
            attn = self._mhsa(q, layer, training)
            q = ad.layer_norm(ad.add(q, attn), layer.ln1_gain, layer.ln1_bias)
            hidden = ad.relu(ad.add(ad.matmul(q, layer.ffn_w1), layer.ffn_b1))
            ff = ad.add(ad.matmul(hidden, layer.ffn_w2), layer.ffn_b2)
            ff = ad.dropout(ff, cfg.dropout, self.rng, training)
            q = ad.layer_norm(ad.add(q, ff), layer.ln2_gain, layer.ln2_bias)
        return q

    def decoder_forward(self, enc, training=False):
        """Condition learned queries on the horizon tail of the encoder."""
        cfg = self.config
        tail = enc[:, cfg.T:cfg.T + cfg.H, :]
        q0 = ad.add(self.q0, tail)                            # broadcast over batch
        return self.decoder_stack(q0, training)

    def encode(self, x, training=False):
        """Embedding, zero extension by H, and the periodic-block stack."""
        cfg = self.config
        x = ad.as_tensor(x)
        rep = embed(x, self.w_e, self.pe)
        self._check_finite(rep, "embed")
        zeros = ad.constant(np.zeros((x.shape[0], cfg.H, cfg.d_model)))
        rep = ad.concat([rep, zeros], axis=1)                 # [B, T+H, d]
        if cfg.use_periodic_blocks:
            for bi, block in enumerate(self.blocks):
                rep = self.periodic_block(rep, block, training)
                self._check_finite(rep, f"periodic_block[{bi}]")
        return rep

    def forward(self, x, training=False):
        """Standardized input [B, T, C] -> standardized forecast [B, H, C]."""
        cfg = self.config
        enc = self.encode(x, training)
        if cfg.use_decoder:
            q = self.decoder_forward(enc, training)
            self._check_finite(q, "decoder")
        else:
            q = enc[:, cfg.T:cfg.T + cfg.H, :]
        out = ad.add(ad.matmul(q, self.w_o), self.b_o)
        self._check_finite(out, "output_head")
        return out

    def predict(self, x):
        """Inference-mode forward returning a plain array."""
        return self.forward(x, training=False).data

    @staticmethod
    def _check_finite(t, stage):
        if not np.all(np.isfinite(t.data)):
            raise NumericFailureError(stage)


def config_to_dict(config):
    return asdict(config)


def config_from_dict(d):
    d = dict(d)
    d["kernel_sizes"] = tuple(d.get("kernel_sizes", (1, 3, 5)))
    return PPTNetConfig(**d)
