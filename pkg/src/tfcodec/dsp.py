"""Causal STFT analysis, overlap-add synthesis and the log-magnitude/phase
feature map that feeds the encoder.

Framing is strictly causal: frame ``t`` covers samples
``[t * hop, t * hop + win)`` and a trailing partial frame is dropped.
Synthesis emits ``T * hop + (win - hop)`` samples; trimming is left to the
caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

SAMPLE_RATE = 24000
MAG_FLOOR = 1e-7


def sqrt_hann(length: int) -> np.ndarray:
    """Periodic square-root Hann window."""
    n = np.arange(length)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / length))


@dataclass(frozen=True)
class StftConfig:
    win_length: int = 720
    hop_length: int = 240
    fft_size: int = 720
    sample_rate: int = SAMPLE_RATE
    window: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.fft_size == self.win_length == 3 * self.hop_length):
            raise ConfigError(
                "fft_size, win_length and 3 * hop_length must be equal, got "
                f"{self.fft_size}, {self.win_length}, {3 * self.hop_length}"
            )
        object.__setattr__(self, "window", sqrt_hann(self.win_length))

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_length

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.win_length:
            return 0
        return (n_samples - self.win_length) // self.hop_length + 1

    def synth_length(self, n_frames: int) -> int:
        if n_frames == 0:
            return 0
        return n_frames * self.hop_length + self.win_length - self.hop_length


DEFAULT_STFT = StftConfig()


def _check_rate(sample_rate, cfg):
    if sample_rate != cfg.sample_rate:
        raise ConfigError(f"expected {cfg.sample_rate} Hz audio, got {sample_rate} Hz")


def frame_signal(x: np.ndarray, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Return the (T, win) matrix of causal frames (a view when possible)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected mono samples, got shape {x.shape}")
    n = cfg.num_frames(len(x))
    if n == 0:
        return np.zeros((0, cfg.win_length))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.win_length)
    return frames[:: cfg.hop_length][:n]


def stft(x, cfg: StftConfig = DEFAULT_STFT, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Complex spectrum of shape (F, T) with F = fft_size // 2 + 1."""
    _check_rate(sample_rate, cfg)
    frames = frame_signal(x, cfg) * cfg.window
    return np.fft.rfft(frames, n=cfg.fft_size, axis=1).T


def window_envelope(n_frames: int, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Summed squared window over all frame positions."""
    env = np.zeros(cfg.synth_length(n_frames))
    w2 = cfg.window ** 2
    for t in range(n_frames):
        env[t * cfg.hop_length : t * cfg.hop_length + cfg.win_length] += w2
    return env


def normalize_by_envelope(y: np.ndarray, env: np.ndarray) -> np.ndarray:
    # sample 0 sits under a zero window value; leave such samples at zero
    return np.divide(y, env, out=np.zeros_like(y), where=env > 1e-10)


def istft(spec: np.ndarray, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`."""
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[0] != cfg.n_bins:
        raise ShapeError(f"expected ({cfg.n_bins}, T) spectrum, got {spec.shape}")
    n_frames = spec.shape[1]
    frames = np.fft.irfft(spec.T, n=cfg.fft_size, axis=1)[:, : cfg.win_length]
    frames = frames * cfg.window
    y = np.zeros(cfg.synth_length(n_frames))
    for t in range(n_frames):
        y[t * cfg.hop_length : t * cfg.hop_length + cfg.win_length] += frames[t]
    return normalize_by_envelope(y, window_envelope(n_frames, cfg))


def build_features(spec: np.ndarray) -> np.ndarray:
    """Stack log-magnitude over phase: (F, T) complex -> (2F, T) real."""
    mag = np.abs(spec)
    log_mag = np.log(np.maximum(mag, MAG_FLOOR))
    phase = np.arctan2(spec.imag, spec.real)
    # arctan2 returns -pi for a negative-zero imaginary part; keep (-pi, pi]
    phase = np.where(phase == -np.pi, np.pi, phase)
    phase = np.where(mag == 0.0, 0.0, phase)
    return np.concatenate([log_mag, phase], axis=0)


def spectrum_from_head(mag_log: np.ndarray, phase: np.ndarray) -> np.ndarray:
    mag_log = np.asarray(mag_log, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if mag_log.shape != phase.shape:
        raise ShapeError(f"log-magnitude {mag_log.shape} and phase {phase.shape} differ")
    return np.exp(mag_log) * (np.cos(phase) + 1j * np.sin(phase))


def split_head(head: np.ndarray, n_bins: int = DEFAULT_STFT.n_bins):
    """Split a (2F, T) head output into log-magnitude and phase halves."""
    if head.shape[0] != 2 * n_bins:
        raise ShapeError(f"head output must have {2 * n_bins} channels, got {head.shape[0]}")
    return head[:n_bins], head[n_bins:]


class OverlapAdd:
    """Streaming synthesis: one spectrum frame in, one hop of audio out.

    A hop becomes final once the frame starting at its first sample has
    been added, so every push returns exactly ``hop`` finished samples and
    :meth:`flush` returns the ``win - hop`` sample tail.
    """

    def __init__(self, cfg: StftConfig = DEFAULT_STFT):
        self.cfg = cfg
        self.reset()

    def reset(self):
        self._acc = np.zeros(self.cfg.win_length)
        self._env = np.zeros(self.cfg.win_length)
        self._w2 = self.cfg.window ** 2
        self._pushed = 0

    def push(self, spec_frame: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        if spec_frame.shape != (cfg.n_bins,):
            raise ShapeError(f"expected ({cfg.n_bins},) frame, got {spec_frame.shape}")
        frame = np.fft.irfft(spec_frame, n=cfg.fft_size)[: cfg.win_length] * cfg.window
        self._acc += frame
        self._pushed += 1
        self._env += self._w2
        hop = cfg.hop_length
        out = normalize_by_envelope(self._acc[:hop].copy(), self._env[:hop])
        self._acc = np.concatenate([self._acc[hop:], np.zeros(hop)])
        self._env = np.concatenate([self._env[hop:], np.zeros(hop)])
        return out

    def flush(self) -> np.ndarray:
        tail = self.cfg.win_length - self.cfg.hop_length
        if self._pushed == 0:
            return np.zeros(0)
        out = normalize_by_envelope(self._acc[:tail].copy(), self._env[:tail])
        self.reset()
        return out
