"""Generator graph: STFT features -> encoder -> RVQ -> decoder -> iSTFT.

Both halves follow the Vocos backbone layout at a fixed 100 Hz frame rate
(stride 1 everywhere, no resampling)::

    encoder: linear 722->192, embed conv k7, norm, 6 ConvNeXt (192->216->192),
             attention module, norm
    decoder: embed conv k7, norm, attention module (grouped ResNet convs),
             6 ConvNeXt (192->192->192), norm, linear 192->722 head

The attention module is 4 ResNet blocks with a masked self-attention block
after the second. Tensor names are listed by :func:`parameter_shapes`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from . import dsp, nn, rvq
from .bitstream import StreamHeader, pack, unpack
from .errors import ConfigError, ShapeError, UsageError


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 722
    hidden_dim: int = 192
    encoder_blocks: int = 6
    decoder_blocks: int = 6
    convnext_intermediate: int = 216
    dw_kernel: int = 7
    embed_kernel: int = 7
    attn_resnet_blocks: int = 4
    attn_after_block: int = 2
    resnet_kernel: int = 3
    decoder_groups: int = 2
    attn_heads: int = 1
    positional_encoding: bool = False
    context_limit: int = 300
    rvq_stages: int = 6
    codebook_size: int = 1024
    code_dim: int = 8
    stft: dsp.StftConfig = field(default_factory=dsp.StftConfig)

    def __post_init__(self):
        if self.feature_dim != 2 * self.stft.n_bins:
            raise ConfigError(f"feature_dim {self.feature_dim} != 2 * {self.stft.n_bins} bins")
        if self.hidden_dim % self.decoder_groups:
            raise ConfigError("hidden_dim must be divisible by decoder_groups")
        if self.hidden_dim % self.attn_heads:
            raise ConfigError("hidden_dim must be divisible by attn_heads")
        if not 0 <= self.attn_after_block <= self.attn_resnet_blocks:
            raise ConfigError("attn_after_block out of range")

    @property
    def frame_rate(self) -> float:
        return self.stft.frame_rate


DEFAULT_CONFIG = ModelConfig()


# -- tensor layout -------------------------------------------------------------


def _norm(prefix, c):
    return {f"{prefix}.weight": (c,), f"{prefix}.bias": (c,)}


def _dense(prefix, c_out, c_in, bias=True):
    out = {f"{prefix}.weight": (c_out, c_in)}
    if bias:
        out[f"{prefix}.bias"] = (c_out,)
    return out


def _conv(prefix, c_out, c_in, k, groups=1):
    return {f"{prefix}.weight": (c_out, c_in // groups, k), f"{prefix}.bias": (c_out,)}


def _convnext(prefix, c, inter, k):
    return {
        **_conv(f"{prefix}.dwconv", c, c, k, groups=c),
        **_norm(f"{prefix}.norm", c),
        **_dense(f"{prefix}.pw1", inter, c),
        **_dense(f"{prefix}.pw2", c, inter),
        f"{prefix}.gamma": (c,),
    }


def _attention_module(prefix, cfg, groups):
    c, k = cfg.hidden_dim, cfg.resnet_kernel
    shapes = {}
    for i in range(cfg.attn_resnet_blocks):
        if i == cfg.attn_after_block:
            shapes.update(_attn_block(f"{prefix}.attn", c))
        shapes.update(_conv(f"{prefix}.res{i}.conv1", c, c, k, groups))
        shapes.update(_norm(f"{prefix}.res{i}.norm", c))
        shapes.update(_conv(f"{prefix}.res{i}.conv2", c, c, k, groups))
    if cfg.attn_after_block == cfg.attn_resnet_blocks:
        shapes.update(_attn_block(f"{prefix}.attn", c))
    return shapes


def _attn_block(prefix, c):
    shapes = _norm(f"{prefix}.norm", c)
    for name in ("q", "k", "v", "o"):
        shapes.update(_dense(f"{prefix}.{name}", c, c))
    return shapes


def encoder_shapes(cfg: ModelConfig = DEFAULT_CONFIG) -> dict:
    c = cfg.hidden_dim
    shapes = {
        **_dense("enc.in_proj", c, cfg.feature_dim),
        **_conv("enc.embed", c, c, cfg.embed_kernel),
        **_norm("enc.embed_norm", c),
    }
    for i in range(cfg.encoder_blocks):
        shapes.update(_convnext(f"enc.convnext{i}", c, cfg.convnext_intermediate, cfg.dw_kernel))
    shapes.update(_attention_module("enc.attn_module", cfg, groups=1))
    shapes.update(_norm("enc.final_norm", c))
    return shapes


def rvq_shapes(cfg: ModelConfig = DEFAULT_CONFIG) -> dict:
    shapes = {}
    for s in range(cfg.rvq_stages):
        shapes[f"rvq.stage{s}.codebook"] = (cfg.codebook_size, cfg.code_dim)
        shapes[f"rvq.stage{s}.in_proj"] = (cfg.code_dim, cfg.hidden_dim)
        shapes[f"rvq.stage{s}.out_proj"] = (cfg.hidden_dim, cfg.code_dim)
    return shapes


def decoder_shapes(cfg: ModelConfig = DEFAULT_CONFIG) -> dict:
    c = cfg.hidden_dim
    shapes = {
        **_conv("dec.embed", c, c, cfg.embed_kernel),
        **_norm("dec.embed_norm", c),
    }
    shapes.update(_attention_module("dec.attn_module", cfg, groups=cfg.decoder_groups))
    for i in range(cfg.decoder_blocks):
        # no inverted bottleneck on the receiver side
        shapes.update(_convnext(f"dec.convnext{i}", c, c, cfg.dw_kernel))
    shapes.update(_norm("dec.final_norm", c))
    shapes.update(_dense("dec.head", cfg.feature_dim, c))
    return shapes


def parameter_shapes(cfg: ModelConfig = DEFAULT_CONFIG) -> dict:
    return {**encoder_shapes(cfg), **rvq_shapes(cfg), **decoder_shapes(cfg)}


def init_weights(cfg: ModelConfig = DEFAULT_CONFIG, seed: int = 0) -> nn.WeightStore:
    """Deterministic untrained weights.

    Matrices, kernels, biases, layer scales and codebooks are uniform in
    [-0.05, 0.05]; normalization scales start at 1 and shifts at 0.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in parameter_shapes(cfg).items():
        if "norm." in name:
            fill = 1.0 if name.endswith(".weight") else 0.0
            tensors[name] = np.full(shape, fill, dtype=np.float32)
        else:
            tensors[name] = nn.uniform_init(shape, rng)
    return nn.WeightStore(tensors)


def check_weights(weights: nn.WeightStore, shapes: dict):
    for name, shape in shapes.items():
        t = weights[name]
        if tuple(t.shape) != tuple(shape):
            raise ShapeError(f"tensor {name} has shape {t.shape}, expected {shape}")


# -- layers --------------------------------------------------------------------


class Dense:
    def __init__(self, weights, prefix, bias=True):
        self.w = weights.get64(f"{prefix}.weight")
        self.b = weights.get64(f"{prefix}.bias") if bias else None

    def __call__(self, x, state=None):
        return nn.linear(x, self.w, self.b)


class Conv:
    def __init__(self, weights, prefix, groups=1):
        self.name = prefix
        self.w = weights.get64(f"{prefix}.weight")
        self.b = weights.get64(f"{prefix}.bias")
        self.groups = groups
        self.k = self.w.shape[2]

    def __call__(self, x, state=None):
        if state is None:
            return nn.causal_conv1d(x, self.w, self.b, self.groups)
        history = state.conv.get(self.name)
        if history is None:
            history = np.zeros((x.shape[0], self.k - 1))
        y = nn.causal_conv1d(x, self.w, self.b, self.groups, history)
        state.conv[self.name] = np.concatenate([history, x], axis=1)[:, x.shape[1] :]
        return y


class Norm:
    def __init__(self, weights, prefix):
        self.g = weights.get64(f"{prefix}.weight")
        self.b = weights.get64(f"{prefix}.bias")

    def __call__(self, x, state=None):
        return nn.layer_norm(x, self.g, self.b)


class ConvNeXtBlock:
    def __init__(self, weights, prefix, dim):
        self.dw = Conv(weights, f"{prefix}.dwconv", groups=dim)
        self.norm = Norm(weights, f"{prefix}.norm")
        self.pw1 = Dense(weights, f"{prefix}.pw1")
        self.pw2 = Dense(weights, f"{prefix}.pw2")
        self.gamma = weights.get64(f"{prefix}.gamma")[:, None]

    def __call__(self, x, state=None):
        y = self.norm(self.dw(x, state))
        y = self.pw2(nn.gelu(self.pw1(y)))
        return x + self.gamma * y


class ResBlock:
    def __init__(self, weights, prefix, groups):
        self.conv1 = Conv(weights, f"{prefix}.conv1", groups)
        self.norm = Norm(weights, f"{prefix}.norm")
        self.conv2 = Conv(weights, f"{prefix}.conv2", groups)

    def __call__(self, x, state=None):
        y = nn.gelu(self.norm(self.conv1(x, state)))
        return x + self.conv2(y, state)


def sinusoidal_positions(start, count, dim):
    pos = np.arange(start, start + count)[None, :]
    i = np.arange(dim // 2)[:, None]
    angle = pos / (10000.0 ** (2 * i / dim))
    pe = np.zeros((dim, count))
    pe[0::2] = np.sin(angle)
    pe[1::2] = np.cos(angle)
    return pe


class AttnBlock:
    def __init__(self, weights, prefix, cfg):
        self.name = prefix
        self.norm = Norm(weights, f"{prefix}.norm")
        self.params = []
        for n in ("q", "k", "v", "o"):
            self.params += [weights.get64(f"{prefix}.{n}.weight"), weights.get64(f"{prefix}.{n}.bias")]
        self.heads = cfg.attn_heads
        self.limit = cfg.context_limit
        self.positional = cfg.positional_encoding

    def __call__(self, x, state=None):
        h = self.norm(x)
        start = state.frames if state is not None else 0
        if self.positional:
            h = h + sinusoidal_positions(start, h.shape[1], h.shape[0])
        past_k = past_v = None
        if state is not None:
            past_k = state.keys.get(self.name)
            past_v = state.values.get(self.name)
        y, keys, values = nn.masked_self_attention(
            h, *self.params, heads=self.heads,
            past_keys=past_k, past_values=past_v, context_limit=self.limit,
        )
        if state is not None:
            # the next query sees itself plus the limit - 1 most recent keys
            start = max(keys.shape[1] - (self.limit - 1), 0)
            state.keys[self.name] = keys[:, start:]
            state.values[self.name] = values[:, start:]
        return x + y


class AttentionModule:
    def __init__(self, weights, prefix, cfg, groups):
        self.layers = []
        for i in range(cfg.attn_resnet_blocks):
            if i == cfg.attn_after_block:
                self.layers.append(AttnBlock(weights, f"{prefix}.attn", cfg))
            self.layers.append(ResBlock(weights, f"{prefix}.res{i}", groups))
        if cfg.attn_after_block == cfg.attn_resnet_blocks:
            self.layers.append(AttnBlock(weights, f"{prefix}.attn", cfg))

    def __call__(self, x, state=None):
        for layer in self.layers:
            x = layer(x, state)
        return x


class Encoder:
    """Feature map (722, T) -> latent (192, T)."""

    def __init__(self, weights, cfg: ModelConfig = DEFAULT_CONFIG):
        check_weights(weights, encoder_shapes(cfg))
        c = cfg.hidden_dim
        self.cfg = cfg
        self.layers = [
            Dense(weights, "enc.in_proj"),
            Conv(weights, "enc.embed"),
            Norm(weights, "enc.embed_norm"),
            *[ConvNeXtBlock(weights, f"enc.convnext{i}", c) for i in range(cfg.encoder_blocks)],
            AttentionModule(weights, "enc.attn_module", cfg, groups=1),
            Norm(weights, "enc.final_norm"),
        ]

    def __call__(self, features, state=None):
        x = np.asarray(features, dtype=np.float64)
        if x.shape[0] != self.cfg.feature_dim:
            raise ShapeError(f"encoder expects {self.cfg.feature_dim} channels, got {x.shape[0]}")
        for layer in self.layers:
            x = layer(x, state)
        if state is not None:
            state.frames += x.shape[1]
        return x


class Decoder:
    """Dequantized latent (192, T) -> head output (722, T).

    Only ``dec.*`` tensors are read, so a receiver can run from a weight
    store that holds no encoder tensors at all.
    """

    def __init__(self, weights, cfg: ModelConfig = DEFAULT_CONFIG):
        check_weights(weights, decoder_shapes(cfg))
        c = cfg.hidden_dim
        self.cfg = cfg
        self.layers = [
            Conv(weights, "dec.embed"),
            Norm(weights, "dec.embed_norm"),
            AttentionModule(weights, "dec.attn_module", cfg, groups=cfg.decoder_groups),
            *[ConvNeXtBlock(weights, f"dec.convnext{i}", c) for i in range(cfg.decoder_blocks)],
            Norm(weights, "dec.final_norm"),
            Dense(weights, "dec.head"),
        ]

    def __call__(self, latent, state=None):
        x = np.asarray(latent, dtype=np.float64)
        for layer in self.layers:
            x = layer(x, state)
        if state is not None:
            state.frames += x.shape[1]
        return x

    def spectrum(self, latent, state=None):
        mag_log, phase = dsp.split_head(self(latent, state), self.cfg.stft.n_bins)
        return dsp.spectrum_from_head(mag_log, phase)


def load_codebooks(weights, cfg: ModelConfig = DEFAULT_CONFIG) -> rvq.CodebookSet:
    check_weights(weights, rvq_shapes(cfg))
    return rvq.CodebookSet.from_weights(weights, cfg.rvq_stages)


# -- enhancement cascade -------------------------------------------------------


class CascadeStage(Protocol):
    lookahead_ms: float

    def __call__(self, spec: np.ndarray) -> np.ndarray: ...


class PassThrough:
    lookahead_ms = 0.0

    def __call__(self, spec):
        return spec


class SpectralGate:
    """Frame-local magnitude gate: bins below ``threshold`` are zeroed.

    Stands in for an enhancement network in tests; it looks at one frame
    at a time so it adds no look-ahead unless one is declared.
    """

    def __init__(self, threshold=1e-3, lookahead_ms=0.0):
        self.threshold = threshold
        self.lookahead_ms = lookahead_ms

    def __call__(self, spec):
        return np.where(np.abs(spec) >= self.threshold, spec, 0.0)


# -- batch pipeline --------------------------------------------------------------


def _samples(audio, cfg):
    if isinstance(audio, tuple):
        samples, rate = audio
    else:
        samples, rate = audio, cfg.stft.sample_rate
    if rate != cfg.stft.sample_rate:
        raise ConfigError(f"expected {cfg.stft.sample_rate} Hz audio, got {rate} Hz")
    return np.asarray(samples, dtype=np.float64)


def analysis_features(audio, cfg: ModelConfig = DEFAULT_CONFIG, cascade=None, sample_rate=None):
    x = _samples(audio if sample_rate is None else (audio, sample_rate), cfg)
    spec = dsp.stft(x, cfg.stft)
    if cascade is not None:
        spec = cascade(spec)
    return dsp.build_features(spec)


def encode(audio, weights, cfg: ModelConfig = DEFAULT_CONFIG, cascade=None, sample_rate=None):
    """Audio -> latent of shape (hidden_dim, T)."""
    features = analysis_features(audio, cfg, cascade, sample_rate)
    return Encoder(weights, cfg)(features)


def encode_codes(audio, weights, n_layers, cfg: ModelConfig = DEFAULT_CONFIG, cascade=None,
                 sample_rate=None) -> np.ndarray:
    latent = encode(audio, weights, cfg, cascade, sample_rate)
    return rvq.quantize(latent, load_codebooks(weights, cfg), n_layers).codes


def decode(codes, n_layers, weights, cfg: ModelConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Codes (T, >= n_layers) -> audio of ``T * hop + (win - hop)`` samples."""
    latent = rvq.dequantize(codes, load_codebooks(weights, cfg), n_layers)
    spec = Decoder(weights, cfg).spectrum(latent)
    return dsp.istft(spec, cfg.stft)


def declared_latency_ms(cfg: ModelConfig = DEFAULT_CONFIG, cascade=None) -> float:
    from .complexity import latency_budget

    lookahead = cascade.lookahead_ms if cascade is not None else 0.0
    return latency_budget(cfg.stft, lookahead).total_ms


def codec_roundtrip(audio, n_layers, weights, cfg: ModelConfig = DEFAULT_CONFIG, cascade=None):
    """Full transmit/receive path through the packed wire format."""
    codes = encode_codes(audio, weights, n_layers, cfg, cascade)
    stream = pack(codes, StreamHeader(n_layers=n_layers))
    _, received = unpack(stream)
    return decode(received, n_layers, weights, cfg)


# -- streaming -------------------------------------------------------------------


class StreamingEncoder:
    """Push hop-sized chunks of samples; get one code frame per push once
    a full analysis window has been buffered (from the third push on)."""

    def __init__(self, weights, n_layers, cfg: ModelConfig = DEFAULT_CONFIG, cascade=None):
        self.cfg = cfg
        self.encoder = Encoder(weights, cfg)
        self.books = load_codebooks(weights, cfg)
        if not 1 <= n_layers <= cfg.rvq_stages:
            raise UsageError(f"n_layers must be in [1, {cfg.rvq_stages}]")
        self.n_layers = n_layers
        self.cascade = cascade
        self.reset()

    def reset(self):
        self.state = nn.StreamState(self.cfg.context_limit)
        self._buffer = np.zeros(0)

    def push_latent(self, chunk) -> Optional[np.ndarray]:
        hop = self.cfg.stft.hop_length
        chunk = np.asarray(chunk, dtype=np.float64)
        if chunk.shape != (hop,):
            raise UsageError(f"push exactly {hop} samples, got shape {chunk.shape}")
        self._buffer = np.concatenate([self._buffer, chunk])[-self.cfg.stft.win_length :]
        if len(self._buffer) < self.cfg.stft.win_length:
            return None
        spec = dsp.stft(self._buffer, self.cfg.stft)
        if self.cascade is not None:
            spec = self.cascade(spec)
        return self.encoder(dsp.build_features(spec), self.state)[:, 0]

    def push_frame(self, chunk) -> Optional[np.ndarray]:
        latent = self.push_latent(chunk)
        if latent is None:
            return None
        return rvq.quantize(latent[:, None], self.books, self.n_layers).codes[0]


class StreamingDecoder:
    """Push one code frame; get one hop of finished audio back."""

    def __init__(self, weights, n_layers, cfg: ModelConfig = DEFAULT_CONFIG):
        self.cfg = cfg
        self.decoder = Decoder(weights, cfg)
        self.books = load_codebooks(weights, cfg)
        if not 1 <= n_layers <= cfg.rvq_stages:
            raise UsageError(f"n_layers must be in [1, {cfg.rvq_stages}]")
        self.n_layers = n_layers
        self.reset()

    def reset(self):
        self.state = nn.StreamState(self.cfg.context_limit)
        self.ola = dsp.OverlapAdd(self.cfg.stft)

    def push_frame(self, code_frame) -> np.ndarray:
        codes = np.asarray(code_frame).reshape(1, -1)
        latent = rvq.dequantize(codes, self.books, self.n_layers)
        spec = self.decoder.spectrum(latent, self.state)
        return self.ola.push(spec[:, 0])

    def flush(self) -> np.ndarray:
        return self.ola.flush()


def streaming_session(weights, n_layers, cfg: ModelConfig = DEFAULT_CONFIG, side="encoder", cascade=None):
    if side == "encoder":
        return StreamingEncoder(weights, n_layers, cfg, cascade)
    if side == "decoder":
        return StreamingDecoder(weights, n_layers, cfg)
    raise UsageError(f"side must be 'encoder' or 'decoder', got {side!r}")


def causal_horizon(first_changed_sample: int, cfg: ModelConfig = DEFAULT_CONFIG) -> int:
    """Number of leading decoded samples unaffected by changing the input
    from ``first_changed_sample`` onwards (frames reaching into the change
    are the first ones perturbed; each frame only finalizes its own hop)."""
    st = cfg.stft
    first_frame = max(0, math.ceil((first_changed_sample - st.win_length + 1) / st.hop_length))
    return first_frame * st.hop_length
