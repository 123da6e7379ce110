"""Numpy compute kernels for the generator graph and the tensor container.

Feature maps are ``(channels, frames)`` float64 arrays. Every kernel is
causal along the frame axis. Batch and streaming execution run the same
code: a :class:`StreamState` substitutes cached history for the zero
padding that batch mode uses. Per-frame matrix products may be summed in a
different order by BLAS than the batched ones, so streaming matches batch
to rounding error (checked at 1e-9 in the tests), not bit-for-bit.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from types import MappingProxyType

import numpy as np

from .errors import ConfigError, MissingTensorError, ShapeError, WeightFileError

WEIGHT_MAGIC = b"VCW1"
INIT_SCALE = 0.05


class WeightStore:
    """Immutable mapping of tensor name -> float32 array."""

    def __init__(self, tensors=None):
        entries = {}
        for name, value in (tensors or {}).items():
            arr = np.array(value, dtype=np.float32, copy=True)
            arr.setflags(write=False)
            entries[name] = arr
        self._tensors = MappingProxyType(entries)

    def __getitem__(self, name):
        try:
            return self._tensors[name]
        except KeyError:
            raise MissingTensorError(name) from None

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self):
        return list(self._tensors)

    def get64(self, name) -> np.ndarray:
        return self[name].astype(np.float64)

    def num_params(self) -> int:
        return sum(int(t.size) for t in self._tensors.values())

    def updated(self, tensors) -> "WeightStore":
        merged = dict(self._tensors)
        merged.update(tensors)
        return WeightStore(merged)

    def subset(self, prefixes) -> "WeightStore":
        prefixes = tuple(prefixes)
        return WeightStore({k: v for k, v in self._tensors.items() if k.startswith(prefixes)})

    def to_bytes(self) -> bytes:
        header = [
            {"name": name, "dtype": "f32", "shape": list(t.shape)}
            for name, t in self._tensors.items()
        ]
        head = json.dumps(header, separators=(",", ":")).encode("utf-8")
        parts = [WEIGHT_MAGIC, struct.pack("<I", len(head)), head]
        parts.extend(t.astype("<f4").tobytes() for t in self._tensors.values())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WeightStore":
        if data[:4] != WEIGHT_MAGIC:
            raise WeightFileError("not a VCW1 weight file (bad magic)")
        if len(data) < 8:
            raise WeightFileError("truncated VCW1 header")
        (head_len,) = struct.unpack("<I", data[4:8])
        try:
            header = json.loads(data[8 : 8 + head_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise WeightFileError(f"unreadable VCW1 header: {exc}") from None
        offset = 8 + head_len
        expected = sum(math.prod(e["shape"]) for e in header)
        if len(data) - offset != 4 * expected:
            raise WeightFileError(
                f"payload holds {(len(data) - offset) / 4:g} floats, header implies {expected}"
            )
        tensors = {}
        for entry in header:
            if entry.get("dtype") != "f32":
                raise WeightFileError(f"unsupported dtype {entry.get('dtype')!r} for {entry['name']}")
            if entry["name"] in tensors:
                raise WeightFileError(f"duplicate tensor name {entry['name']!r}")
            count = math.prod(entry["shape"])
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            tensors[entry["name"]] = arr.reshape(entry["shape"])
            offset += 4 * count
        return cls(tensors)

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "WeightStore":
        return cls.from_bytes(Path(path).read_bytes())


def uniform_init(shape, rng, scale=INIT_SCALE):
    return rng.uniform(-scale, scale, size=shape).astype(np.float32)


class StreamState:
    """Per-stream caches: conv input history and attention keys/values."""

    def __init__(self, context_limit=300):
        self.context_limit = context_limit
        self.conv = {}
        self.keys = {}
        self.values = {}
        self.frames = 0

    def reset(self):
        self.conv.clear()
        self.keys.clear()
        self.values.clear()
        self.frames = 0


def linear(x, weight, bias=None):
    weight = np.asarray(weight, dtype=np.float64)
    if x.shape[0] != weight.shape[1]:
        raise ShapeError(f"linear expects {weight.shape[1]} input channels, got {x.shape[0]}")
    y = weight @ x
    if bias is not None:
        y = y + np.asarray(bias, dtype=np.float64)[:, None]
    return y


def causal_conv1d(x, weight, bias=None, groups=1, history=None):
    """Stride-1 causal convolution.

    ``weight`` is (C_out, C_in // groups, K). ``history`` holds the K - 1
    input frames preceding ``x``; zeros are used when it is None.
    """
    weight = np.asarray(weight, dtype=np.float64)
    c_out, c_in_g, k = weight.shape
    c_in = x.shape[0]
    if k < 1 or c_in % groups or c_out % groups or c_in // groups != c_in_g:
        raise ShapeError(
            f"conv weight {weight.shape} incompatible with {c_in} input channels, groups={groups}"
        )
    if history is None:
        history = np.zeros((c_in, k - 1))
    xp = np.concatenate([history, x], axis=1)
    n = x.shape[1]
    xg = xp.reshape(groups, c_in_g, -1)
    wg = weight.reshape(groups, c_out // groups, c_in_g, k)
    if c_in_g == 1 and c_out == c_in:
        # depthwise: per-channel FIR
        y = np.zeros((c_in, n))
        w = weight[:, 0, :]
        for j in range(k):
            y += w[:, j : j + 1] * xp[:, j : j + n]
    else:
        y = np.zeros((groups, c_out // groups, n))
        for j in range(k):
            y += np.matmul(wg[:, :, :, j], xg[:, :, j : j + n])
        y = y.reshape(c_out, n)
    if bias is not None:
        y = y + np.asarray(bias, dtype=np.float64)[:, None]
    return y


def layer_norm(x, gamma, beta, eps=1e-6):
    """Normalize each frame over the channel axis."""
    mean = x.mean(axis=0, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=0, keepdims=True)
    y = (x - mean) / np.sqrt(var + eps)
    return np.asarray(gamma, np.float64)[:, None] * y + np.asarray(beta, np.float64)[:, None]


def gelu(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


def masked_self_attention(
    x, wq, bq, wk, bk, wv, bv, wo, bo, heads=1, past_keys=None, past_values=None, context_limit=None
):
    """Causal multi-head self-attention over a (C, T) feature map.

    ``past_keys``/``past_values`` are (C, P) projections of earlier frames.
    With ``context_limit`` W, a query attends to at most the W most recent
    positions including itself. Returns ``(y, keys, values)`` where the last
    two are the full key/value sequences (past + current).
    """
    c, t = x.shape
    if heads < 1 or c % heads:
        raise ConfigError(f"{c} channels not divisible by {heads} heads")
    q = linear(x, wq, bq)
    k = linear(x, wk, bk)
    v = linear(x, wv, bv)
    if past_keys is not None and past_keys.shape[1]:
        k = np.concatenate([past_keys, k], axis=1)
        v = np.concatenate([past_values, v], axis=1)
    p = k.shape[1] - t
    qpos = p + np.arange(t)[:, None]
    kpos = np.arange(k.shape[1])[None, :]
    allowed = kpos <= qpos
    if context_limit is not None:
        allowed &= qpos - kpos < context_limit
    d = c // heads
    out = np.empty((c, t))
    for h in range(heads):
        sl = slice(h * d, (h + 1) * d)
        scores = (q[sl].T @ k[sl]) / math.sqrt(d)
        scores = np.where(allowed, scores, -np.inf)
        scores -= scores.max(axis=1, keepdims=True)
        probs = np.exp(scores)
        probs /= probs.sum(axis=1, keepdims=True)
        out[sl] = (probs @ v[sl].T).T
    return linear(out, wo, bo), k, v
