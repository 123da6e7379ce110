"""Analytic MAC, parameter and latency accounting for the generator graph.

Counting convention: one MAC is one multiply-accumulate. A dense layer
costs ``C_in * C_out`` per frame, a (grouped/depthwise) convolution
``C_out * C_in / groups * K``, codebook search ``size * code_dim`` per stage,
and self-attention ``4 C^2`` for its projections plus ``2 C W`` for scores
and value mixing over a context of W frames. Biases, normalization,
activations and softmax are elementwise and are not counted.

Attention cost grows with context, so the report is parameterised by it:
``"utterance"`` averages the causal context over a 3 s utterance (frame t
sees t + 1 frames), ``"limit"`` charges every frame the full streaming
window.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .dsp import StftConfig
from .model import DEFAULT_CONFIG, ModelConfig, decoder_shapes, encoder_shapes, rvq_shapes

TRANSMITTER = "transmitter"
RECEIVER = "receiver"


@dataclass(frozen=True)
class LayerCost:
    name: str
    side: str
    params: int
    macs_per_frame: int
    frame_rate: int = 100

    @property
    def macs_per_second(self) -> int:
        return self.macs_per_frame * self.frame_rate


@dataclass(frozen=True)
class LatencyBreakdown:
    buffering_ms: float
    algorithmic_ms: float
    cascade_lookahead_ms: float = 0.0

    @property
    def total_ms(self) -> float:
        return self.buffering_ms + self.algorithmic_ms + self.cascade_lookahead_ms


@dataclass
class MacsReport:
    entries: list
    frame_rate: int
    attention_context: float
    latency: LatencyBreakdown
    context_mode: str = "utterance"
    _totals: dict = field(default_factory=dict, repr=False)

    def _sum(self, attr, side=None):
        return sum(getattr(e, attr) for e in self.entries if side is None or e.side == side)

    @property
    def total_macs_per_second(self) -> int:
        return self._sum("macs_per_second")

    @property
    def transmitter_macs_per_second(self) -> int:
        return self._sum("macs_per_second", TRANSMITTER)

    @property
    def receiver_macs_per_second(self) -> int:
        return self._sum("macs_per_second", RECEIVER)

    @property
    def total_params(self) -> int:
        return self._sum("params")

    def to_dict(self) -> dict:
        return {
            "frame_rate": self.frame_rate,
            "context_mode": self.context_mode,
            "attention_context_frames": self.attention_context,
            "entries": [
                {
                    "name": e.name,
                    "side": e.side,
                    "params": e.params,
                    "macs_per_frame": e.macs_per_frame,
                    "macs_per_second": e.macs_per_second,
                }
                for e in self.entries
            ],
            "totals": {
                "params": self.total_params,
                "macs_per_second": self.total_macs_per_second,
                "transmitter_macs_per_second": self.transmitter_macs_per_second,
                "receiver_macs_per_second": self.receiver_macs_per_second,
            },
            "latency_ms": {**asdict(self.latency), "total_ms": self.latency.total_ms},
        }


def latency_budget(stft_cfg: StftConfig, cascade_lookahead_ms: float = 0.0) -> LatencyBreakdown:
    """One hop of buffering plus the synthesis window overhang."""
    ms = 1000.0 / stft_cfg.sample_rate
    return LatencyBreakdown(
        buffering_ms=stft_cfg.hop_length * ms,
        algorithmic_ms=(stft_cfg.win_length - stft_cfg.hop_length) * ms,
        cascade_lookahead_ms=float(cascade_lookahead_ms),
    )


def _group(shapes):
    """Collapse tensor names to layer prefixes, preserving order."""
    layers = {}
    for name, shape in shapes.items():
        prefix, leaf = name.rsplit(".", 1)
        layers.setdefault(prefix, {})[leaf] = shape
    return layers


def _layer_macs(prefix, tensors):
    w = tensors.get("weight")
    if w is None or prefix.endswith("norm") or len(w) < 2:
        return 0
    return math.prod(w)


def count_graph(cfg: ModelConfig = DEFAULT_CONFIG, context="utterance", utterance_frames=300,
                cascade_lookahead_ms=0.0) -> MacsReport:
    stft_cfg = cfg.stft
    if stft_cfg.sample_rate % stft_cfg.hop_length:
        raise ValueError("frame rate must be an integer number of frames per second")
    rate = stft_cfg.sample_rate // stft_cfg.hop_length
    c = cfg.hidden_dim
    if context == "utterance":
        # mean over t = 0..N-1 of 2 C (t + 1) = C (N + 1)
        score_macs = c * (utterance_frames + 1)
        ctx = (utterance_frames + 1) / 2
    elif context == "limit":
        score_macs = 2 * c * cfg.context_limit
        ctx = float(cfg.context_limit)
    else:
        raise ValueError(f"unknown context mode {context!r}")

    entries = []

    def add(name, side, params, macs):
        entries.append(LayerCost(name, side, params, macs, rate))

    def add_network(shapes, side):
        for prefix, tensors in _group(shapes).items():
            params = sum(math.prod(s) for s in tensors.values())
            add(prefix, side, params, _layer_macs(prefix, tensors))
            if prefix.endswith("attn.o"):
                add(prefix[: -len(".o")] + ".scores", side, 0, score_macs)

    add_network(encoder_shapes(cfg), TRANSMITTER)
    d, k = cfg.code_dim, cfg.codebook_size
    shapes = rvq_shapes(cfg)
    for s in range(cfg.rvq_stages):
        p = f"rvq.stage{s}"
        add(f"{p}.in_proj", TRANSMITTER, math.prod(shapes[f"{p}.in_proj"]), d * c)
        add(f"{p}.codebook", TRANSMITTER, math.prod(shapes[f"{p}.codebook"]), k * d)
        # residual update reuses the receiver's out_proj parameters
        add(f"{p}.residual", TRANSMITTER, 0, c * d)
    for s in range(cfg.rvq_stages):
        p = f"rvq.stage{s}"
        add(f"{p}.out_proj", RECEIVER, math.prod(shapes[f"{p}.out_proj"]), c * d)
    add_network(decoder_shapes(cfg), RECEIVER)
    return MacsReport(
        entries=entries,
        frame_rate=rate,
        attention_context=ctx,
        latency=latency_budget(stft_cfg, cascade_lookahead_ms),
        context_mode=context,
    )


def count_params(weights) -> int:
    return sum(int(t.size) for _, t in weights.items())


def format_table(report: MacsReport) -> str:
    lines = [f"{'layer':<40} {'side':<12} {'params':>10} {'MACs/frame':>12} {'MACs/s':>14}"]
    for e in report.entries:
        lines.append(
            f"{e.name:<40} {e.side:<12} {e.params:>10,} {e.macs_per_frame:>12,} {e.macs_per_second:>14,}"
        )
    lines.append("-" * len(lines[0]))
    lines.append(f"{'transmitter total':<53} {'':>10} {'':>12} {report.transmitter_macs_per_second:>14,}")
    lines.append(f"{'receiver total':<53} {'':>10} {'':>12} {report.receiver_macs_per_second:>14,}")
    lines.append(
        f"{'graph total':<53} {report.total_params:>10,} {'':>12} {report.total_macs_per_second:>14,}"
    )
    lat = report.latency
    lines.append(
        f"attention context: {report.attention_context:g} frames ({report.context_mode})"
    )
    lines.append(
        f"latency: {lat.total_ms:g} ms = {lat.buffering_ms:g} ms buffering + "
        f"{lat.algorithmic_ms:g} ms algorithmic + {lat.cascade_lookahead_ms:g} ms cascade look-ahead"
    )
    return "\n".join(lines)


def to_json(report: MacsReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)
