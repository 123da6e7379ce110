"""Forward evaluation of the enhancement and codec training objectives.

Reduction conventions (kept fixed so weighted totals are reproducible):

* power-compressed spectral losses are squared L2 norms, i.e. sums over
  every bin and frame;
* the multi-scale mel loss averages the L1 distance within a scale and
  sums over scales;
* adversarial and feature-matching losses average within each score or
  feature map and then average over discriminator scales;
* codebook / commitment terms are mean squared differences.

Stop-gradient has no effect on forward values, so the codebook and
commitment losses coincide here; they only differ under training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dsp
from .errors import ConfigError, ShapeError
from .nn import WeightStore, uniform_init

AUDIO_EPS = 1e-8
MEL_FLOOR = 1e-5


@dataclass(frozen=True)
class SeLossWeights:
    si_snr: float = 1.0
    mag: float = 70.0
    real_imag: float = 30.0


@dataclass(frozen=True)
class GenLossWeights:
    rec: float = 15.0
    g: float = 1.0
    feat: float = 2.0
    code: float = 1.0
    c: float = 0.25


@dataclass(frozen=True)
class SeComponents:
    si_snr: float
    mag: float
    real: float
    imag: float


@dataclass(frozen=True)
class GenComponents:
    rec: float
    g: float
    feat: float
    code: float
    c: float


@dataclass(frozen=True)
class MelConfig:
    windows: tuple = (32, 64, 128, 256, 512, 1024, 2048)
    n_mels: tuple = (5, 10, 20, 40, 80, 160, 320)
    sample_rate: int = 24000
    fmin: float = 0.0
    fmax: float = 12000.0

    def __post_init__(self):
        if len(self.windows) != len(self.n_mels):
            raise ConfigError("windows and n_mels must be index-aligned")


@dataclass(frozen=True)
class DiscriminatorConfig:
    windows: tuple = (128, 256, 512, 1024, 2048)
    channels: int = 8
    slope: float = 0.2

    def __post_init__(self):
        if len(self.windows) != 5:
            raise ConfigError("the STFT discriminator uses exactly 5 scales")


# -- enhancement losses --------------------------------------------------------


def _pair(est, ref):
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise ShapeError(f"shape mismatch {est.shape} vs {ref.shape}")
    return est, ref


def si_snr_loss(est, ref, eps=AUDIO_EPS, zero_mean=True) -> float:
    """Negative log10 of the target-to-distortion energy ratio.

    Both signals are mean-removed first when ``zero_mean`` is set. The clamp
    ``eps`` is taken relative to the estimate's energy and added to both
    energies, so the loss stays exactly scale-invariant and a perfect
    estimate saturates at ``-log10((1 + eps) / eps)``.
    """
    est, ref = _pair(est, ref)
    if est.size == 0:
        raise ShapeError("SI-SNR needs at least one sample")
    if zero_mean:
        est = est - est.mean()
        ref = ref - ref.mean()
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ConfigError("SI-SNR reference has zero energy")
    target = (np.dot(est, ref) / ref_energy) * ref
    noise = est - target
    floor = eps * (float(np.dot(est, est)) or 1.0)
    return -float(np.log10((np.dot(target, target) + floor) / (np.dot(noise, noise) + floor)))


def mag_loss(est_spec, ref_spec) -> float:
    est, ref = _pair(np.abs(est_spec), np.abs(ref_spec))
    return float(np.sum((est ** 0.3 - ref ** 0.3) ** 2))


def real_imag_losses(est_spec, ref_spec, eps=AUDIO_EPS):
    """Return ``(L_real, L_imag)`` for spectra compressed by ``|X|^-0.7``."""
    est_spec = np.asarray(est_spec)
    ref_spec = np.asarray(ref_spec)
    if est_spec.shape != ref_spec.shape:
        raise ShapeError(f"shape mismatch {est_spec.shape} vs {ref_spec.shape}")
    est_c = est_spec / np.maximum(np.abs(est_spec), eps) ** 0.7
    ref_c = ref_spec / np.maximum(np.abs(ref_spec), eps) ** 0.7
    return (
        float(np.sum((est_c.real - ref_c.real) ** 2)),
        float(np.sum((est_c.imag - ref_c.imag) ** 2)),
    )


def real_imag_loss(est_spec, ref_spec, eps=AUDIO_EPS) -> float:
    return sum(real_imag_losses(est_spec, ref_spec, eps))


def se_components(est, ref, stft_cfg: dsp.StftConfig = dsp.DEFAULT_STFT) -> SeComponents:
    est, ref = _pair(est, ref)
    est_spec = dsp.stft(est, stft_cfg)
    ref_spec = dsp.stft(ref, stft_cfg)
    real, imag = real_imag_losses(est_spec, ref_spec)
    return SeComponents(si_snr_loss(est, ref), mag_loss(est_spec, ref_spec), real, imag)


def weighted_se_total(parts: SeComponents, weights: SeLossWeights = SeLossWeights()) -> float:
    return (
        weights.si_snr * parts.si_snr
        + weights.mag * parts.mag
        + weights.real_imag * (parts.real + parts.imag)
    )


def se_total_loss(est, ref, weights: SeLossWeights = SeLossWeights(),
                  stft_cfg: dsp.StftConfig = dsp.DEFAULT_STFT) -> float:
    return weighted_se_total(se_components(est, ref, stft_cfg), weights)


# -- multi-scale mel reconstruction loss -----------------------------------------


def _hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz, min_log_mel, logstep = 1000.0, 15.0, np.log(6.4) / 27.0
    lin = f / f_sp
    log = min_log_mel + np.log(np.maximum(f, min_log_hz) / min_log_hz) / logstep
    return np.where(f >= min_log_hz, log, lin)


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz, min_log_mel, logstep = 1000.0, 15.0, np.log(6.4) / 27.0
    lin = f_sp * m
    log = min_log_hz * np.exp(logstep * (m - min_log_mel))
    return np.where(m >= min_log_mel, log, lin)


def mel_filterbank(sample_rate, n_fft, n_mels, fmin=0.0, fmax=None) -> np.ndarray:
    """Slaney-scale triangular filters with area normalization, (n_mels, n_fft//2+1)."""
    fmax = sample_rate / 2 if fmax is None else fmax
    fft_freqs = np.linspace(0.0, sample_rate / 2, n_fft // 2 + 1)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    fb = np.maximum(0.0, np.minimum(lower, upper))
    return fb * (2.0 / (edges[2:] - edges[:-2]))[:, None]


def magnitude_spectrogram(x, window: int) -> np.ndarray:
    """|STFT| with a periodic Hann window, hop window/4, causal framing."""
    hop = window // 4
    n = (len(x) - window) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, window)[::hop][:n]
    hann = dsp.sqrt_hann(window) ** 2
    return np.abs(np.fft.rfft(frames * hann, axis=1)).T


def log_mel(x, window, n_mels, cfg: MelConfig = MelConfig()) -> np.ndarray:
    fb = mel_filterbank(cfg.sample_rate, window, n_mels, cfg.fmin, cfg.fmax)
    return np.log(np.maximum(fb @ magnitude_spectrogram(x, window), MEL_FLOOR))


def mel_loss(est, ref, cfg: MelConfig = MelConfig()) -> float:
    est, ref = _pair(est, ref)
    if len(est) < max(cfg.windows):
        raise ConfigError(f"mel loss needs at least {max(cfg.windows)} samples, got {len(est)}")
    total = 0.0
    for window, n_mels in zip(cfg.windows, cfg.n_mels):
        total += float(np.mean(np.abs(log_mel(est, window, n_mels, cfg) - log_mel(ref, window, n_mels, cfg))))
    return total


# -- multi-scale STFT discriminator ------------------------------------------------


def conv2d(x, weight, bias, stride=(1, 1), padding=(1, 1)) -> np.ndarray:
    """Plain 2-D cross-correlation of a (C_in, H, W) map."""
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    kh, kw = weight.shape[2:]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, :: stride[0], :: stride[1]]
    return np.einsum("chwij,ocij->ohw", win, weight) + bias[:, None, None]


_LAYERS = (  # (stride, has activation)
    ((2, 1), True),
    ((2, 1), True),
    ((2, 1), True),
    ((1, 1), False),
)


def init_discriminator(cfg: DiscriminatorConfig = DiscriminatorConfig(), seed: int = 0) -> WeightStore:
    rng = np.random.default_rng(seed)
    tensors = {}
    for i in range(len(cfg.windows)):
        c_in = 2
        for j in range(len(_LAYERS)):
            c_out = 1 if j == len(_LAYERS) - 1 else cfg.channels
            tensors[f"disc.scale{i}.conv{j}.weight"] = uniform_init((c_out, c_in, 3, 3), rng)
            tensors[f"disc.scale{i}.conv{j}.bias"] = uniform_init((c_out,), rng)
            c_in = c_out
    return WeightStore(tensors)


@dataclass
class ScaleOutput:
    score: np.ndarray  # (F', T)
    features: list = field(default_factory=list)


def disc_input(x, window) -> np.ndarray:
    """Stacked real/imaginary STFT of one scale, (2, F, T)."""
    hop = window // 4
    n = (len(x) - window) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, window)[::hop][:n]
    spec = np.fft.rfft(frames * dsp.sqrt_hann(window) ** 2, axis=1).T
    return np.stack([spec.real, spec.imag])


def disc_forward(audio, weights: WeightStore, cfg: DiscriminatorConfig = DiscriminatorConfig()):
    """Per-scale score map and intermediate activations."""
    x = np.asarray(audio, dtype=np.float64)
    if len(x) < max(cfg.windows):
        raise ConfigError(f"discriminator needs at least {max(cfg.windows)} samples, got {len(x)}")
    outputs = []
    for i, window in enumerate(cfg.windows):
        h = disc_input(x, window)
        feats = []
        for j, (stride, act) in enumerate(_LAYERS):
            h = conv2d(h, weights.get64(f"disc.scale{i}.conv{j}.weight"),
                       weights.get64(f"disc.scale{i}.conv{j}.bias"), stride)
            if act:
                h = np.where(h > 0, h, cfg.slope * h)
                feats.append(h)
        outputs.append(ScaleOutput(h[0], feats))
    return outputs


def score_shape(n_samples, window) -> tuple:
    """Score map shape for one scale: frequency halves three times, frames are kept."""
    f = window // 2 + 1
    for _ in range(3):
        f = (f - 1) // 2 + 1
    return f, (n_samples - window) // (window // 4) + 1


def generator_adv_loss(fake_scores: Sequence[np.ndarray]) -> float:
    return float(np.mean([np.mean((1.0 - s) ** 2) for s in fake_scores]))


def discriminator_adv_loss(real_scores, fake_scores) -> float:
    return float(np.mean([
        np.mean((1.0 - r) ** 2) + np.mean(f ** 2) for r, f in zip(real_scores, fake_scores)
    ]))


def feature_matching_loss(real_features, fake_features) -> float:
    """``real_features[scale][layer]`` maps; factor 2 applied per scale."""
    per_scale = []
    for real_layers, fake_layers in zip(real_features, fake_features):
        per_scale.append(2.0 * sum(float(np.mean(np.abs(r - f))) for r, f in zip(real_layers, fake_layers)))
    return float(np.mean(per_scale))


def adv_losses(real_audio, fake_audio, weights: WeightStore,
               cfg: DiscriminatorConfig = DiscriminatorConfig()):
    """Return ``(L_g, L_feat, L_d)`` from one discriminator evaluation per signal."""
    real = disc_forward(real_audio, weights, cfg)
    fake = disc_forward(fake_audio, weights, cfg)
    fake_scores = [o.score for o in fake]
    return (
        generator_adv_loss(fake_scores),
        feature_matching_loss([o.features for o in real], [o.features for o in fake]),
        discriminator_adv_loss([o.score for o in real], fake_scores),
    )


# -- VQ terms and the generator objective -------------------------------------------


def vq_losses(z_e, e_k):
    """Forward values of the codebook and commitment losses."""
    z_e, e_k = _pair(z_e, e_k)
    mse = float(np.mean((z_e - e_k) ** 2))
    return mse, mse


def generator_total(parts: GenComponents, weights: GenLossWeights = GenLossWeights()) -> float:
    return (
        weights.rec * parts.rec
        + weights.g * parts.g
        + weights.feat * parts.feat
        + weights.code * parts.code
        + weights.c * parts.c
    )
