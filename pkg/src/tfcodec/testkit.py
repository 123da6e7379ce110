"""Brute-force reference implementations used by the test suite.

Nothing here imports the production kernels: transforms are evaluated from
their definitions, searches are exhaustive, bit layouts are built as
strings. They are slow on purpose.
"""

from __future__ import annotations

import cmath
import math

import numpy as np


def length_algebra(n_samples: int, win: int, hop: int):
    """``(frames, synthesized_samples)``; sub-window input gives ``(0, 0)``."""
    if n_samples < win:
        return 0, 0
    frames = (n_samples - win) // hop + 1
    return frames, frames * hop + (win - hop)


def naive_dft(frame, n_fft=None):
    """Non-negative-frequency bins of the O(N^2) DFT."""
    x = [float(v) for v in frame]
    n = n_fft or len(x)
    x = x + [0.0] * (n - len(x))
    idx = np.arange(n)
    out = np.empty(n // 2 + 1, dtype=complex)
    for k in range(n // 2 + 1):
        out[k] = np.sum(np.asarray(x) * np.exp(-2j * np.pi * k * idx / n))
    return out


def hann(n: int):
    return np.array([0.5 - 0.5 * math.cos(2 * math.pi * i / n) for i in range(n)])


def exhaustive_nn(query, codebook) -> int:
    """Index minimizing the distance between L2-normalized vectors.

    Full scan; strict comparison keeps the lowest index on ties. A zero
    query is equidistant from every codeword and yields 0.
    """

    def unit(v):
        norm = math.sqrt(sum(float(a) * float(a) for a in v))
        return [float(a) / max(norm, 1e-12) for a in v]

    if not any(float(a) for a in query):
        return 0
    q = unit(query)
    best, best_d = 0, math.inf
    for i, c in enumerate(codebook):
        u = unit(c)
        d = sum((a - b) ** 2 for a, b in zip(q, u))
        if d < best_d:
            best, best_d = i, d
    return best


def bit_layout(indices, bits: int = 10) -> bytes:
    """MSB-first concatenation of fixed-width indices, zero-padded to bytes."""
    s = "".join(format(int(i), f"0{bits}b") for i in indices)
    s += "0" * (-len(s) % 8)
    return bytes(int(s[i : i + 8], 2) for i in range(0, len(s), 8))


def naive_causal_conv1d(x, weight, bias, groups=1):
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    c_out, c_in_g, k = weight.shape
    c_in, t_len = x.shape
    out_per_group = c_out // groups
    y = np.zeros((c_out, t_len))
    for o in range(c_out):
        g = o // out_per_group
        for t in range(t_len):
            acc = float(bias[o]) if bias is not None else 0.0
            for i in range(c_in_g):
                for j in range(k):
                    src = t - (k - 1) + j
                    if src >= 0:
                        acc += weight[o, i, j] * x[g * c_in_g + i, src]
            y[o, t] = acc
    return y


def naive_attention(x, wq, bq, wk, bk, wv, bv, wo, bo, heads=1, context_limit=None):
    """Per-query loop over visible keys with an explicit softmax."""
    x = np.asarray(x, dtype=np.float64)
    c, t_len = x.shape
    d = c // heads
    q = [np.asarray(wq) @ x[:, t] + bq for t in range(t_len)]
    k = [np.asarray(wk) @ x[:, t] + bk for t in range(t_len)]
    v = [np.asarray(wv) @ x[:, t] + bv for t in range(t_len)]
    out = np.zeros((c, t_len))
    for t in range(t_len):
        lo = 0 if context_limit is None else max(0, t - context_limit + 1)
        mixed = np.zeros(c)
        for h in range(heads):
            sl = slice(h * d, (h + 1) * d)
            scores = [float(q[t][sl] @ k[j][sl]) / math.sqrt(d) for j in range(lo, t + 1)]
            m = max(scores)
            ws = [math.exp(s - m) for s in scores]
            z = sum(ws)
            for w, j in zip(ws, range(lo, t + 1)):
                mixed[sl] += (w / z) * v[j][sl]
        out[:, t] = np.asarray(wo) @ mixed + bo
    return out


def planted_cluster_latents(n_centers=1024, repeats=4, dim=192, seed=0):
    """Latent frames that take exactly ``n_centers`` distinct values.

    Returns ``(latents, centers)`` with latents shaped (dim, n_centers * repeats),
    columns in a seeded random order.
    """
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_centers, dim))
    order = rng.permutation(np.repeat(np.arange(n_centers), repeats))
    return centers[order].T.copy(), centers


# -- loss oracles --------------------------------------------------------------


def si_snr_oracle(est, ref, eps=1e-8, zero_mean=True):
    est = [float(v) for v in est]
    ref = [float(v) for v in ref]
    if zero_mean:
        me, mr = math.fsum(est) / len(est), math.fsum(ref) / len(ref)
        est = [v - me for v in est]
        ref = [v - mr for v in ref]
    dot = math.fsum(a * b for a, b in zip(est, ref))
    rr = math.fsum(b * b for b in ref)
    target = [dot / rr * b for b in ref]
    noise = [a - t for a, t in zip(est, target)]
    tt = math.fsum(t * t for t in target)
    nn = math.fsum(n * n for n in noise)
    ee = math.fsum(a * a for a in est)
    floor = eps * (ee if ee > 0 else 1.0)
    return -math.log10((tt + floor) / (nn + floor))


def mag_oracle(est_spec, ref_spec):
    total = 0.0
    for a, b in zip(np.ravel(est_spec), np.ravel(ref_spec)):
        total += (abs(complex(a)) ** 0.3 - abs(complex(b)) ** 0.3) ** 2
    return total


def real_imag_oracle(est_spec, ref_spec, eps=1e-8):
    lr = li = 0.0
    for a, b in zip(np.ravel(est_spec), np.ravel(ref_spec)):
        a, b = complex(a), complex(b)
        ca = a / max(abs(a), eps) ** 0.7
        cb = b / max(abs(b), eps) ** 0.7
        lr += (ca.real - cb.real) ** 2
        li += (ca.imag - cb.imag) ** 2
    return lr, li


def _slaney_hz_to_mel(f):
    if f < 1000.0:
        return 3.0 * f / 200.0
    return 15.0 + 27.0 * math.log(f / 1000.0) / math.log(6.4)


def _slaney_mel_to_hz(m):
    if m < 15.0:
        return 200.0 * m / 3.0
    return 1000.0 * 6.4 ** ((m - 15.0) / 27.0)


def mel_filters_oracle(sr, n_fft, n_mels, fmin=0.0, fmax=None):
    fmax = sr / 2 if fmax is None else fmax
    lo, hi = _slaney_hz_to_mel(fmin), _slaney_hz_to_mel(fmax)
    pts = [_slaney_mel_to_hz(lo + (hi - lo) * i / (n_mels + 1)) for i in range(n_mels + 2)]
    n_bins = n_fft // 2 + 1
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, centre, right = pts[m], pts[m + 1], pts[m + 2]
        area = 2.0 / (right - left)
        for b in range(n_bins):
            f = b * sr / n_fft
            if left <= f <= centre and centre > left:
                fb[m, b] = area * (f - left) / (centre - left)
            elif centre < f <= right:
                fb[m, b] = area * (right - f) / (right - centre)
    return fb


def log_mel_oracle(x, window, n_mels, sr=24000, floor=1e-5):
    hop = window // 4
    w = hann(window)
    fb = mel_filters_oracle(sr, window, n_mels)
    cols = []
    start = 0
    while start + window <= len(x):
        mag = np.abs(naive_dft(np.asarray(x[start : start + window]) * w))
        cols.append([math.log(max(float(v), floor)) for v in fb @ mag])
        start += hop
    return np.array(cols).T


def mel_loss_oracle(est, ref, windows=(32, 64, 128, 256, 512, 1024, 2048),
                    n_mels=(5, 10, 20, 40, 80, 160, 320)):
    total = 0.0
    for w, m in zip(windows, n_mels):
        a, b = log_mel_oracle(est, w, m), log_mel_oracle(ref, w, m)
        total += math.fsum(abs(float(p) - float(q)) for p, q in zip(a.ravel(), b.ravel())) / a.size
    return total


def mse_oracle(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return math.fsum((float(p) - float(q)) ** 2 for p, q in zip(a, b)) / len(a)


def lsgan_oracles(real_scores, fake_scores, real_feats, fake_feats):
    """``(L_g, L_feat, L_d)`` by explicit loops over scales and elements."""
    n = len(fake_scores)

    def mean(values):
        values = [float(v) for v in np.ravel(values)]
        return math.fsum(values) / len(values)

    lg = math.fsum(mean([(1 - v) ** 2 for v in np.ravel(s)]) for s in fake_scores) / n
    ld = math.fsum(
        mean([(1 - v) ** 2 for v in np.ravel(r)]) + mean([v ** 2 for v in np.ravel(f)])
        for r, f in zip(real_scores, fake_scores)
    ) / n
    lf = math.fsum(
        2 * math.fsum(mean([abs(p - q) for p, q in zip(np.ravel(rl), np.ravel(fl))]) for rl, fl in zip(rs, fs))
        for rs, fs in zip(real_feats, fake_feats)
    ) / n
    return lg, lf, ld


def naive_conv2d(x, weight, bias, stride=(1, 1), padding=(1, 1)):
    c_in, h, w = x.shape
    c_out, _, kh, kw = weight.shape
    ph, pw = padding
    ho = (h + 2 * ph - kh) // stride[0] + 1
    wo = (w + 2 * pw - kw) // stride[1] + 1
    y = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for i in range(ho):
            for j in range(wo):
                acc = float(bias[o])
                for c in range(c_in):
                    for a in range(kh):
                        for b in range(kw):
                            r, s = i * stride[0] + a - ph, j * stride[1] + b - pw
                            if 0 <= r < h and 0 <= s < w:
                                acc += weight[o, c, a, b] * x[c, r, s]
                y[o, i, j] = acc
    return y


def phase_oracle(z: complex) -> float:
    """Phase in (-pi, pi], zero for a zero bin."""
    if z == 0:
        return 0.0
    p = cmath.phase(z)
    return math.pi if p == -math.pi else p
