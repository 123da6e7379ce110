"""Residual vector quantizer with factorized low-dimensional codes.

Each stage projects the running 192-D residual down to ``code_dim``
dimensions, L2-normalizes query and codewords (so the nearest neighbour is
the cosine-closest codeword), and subtracts the stage's reconstruction
``out_proj @ codeword`` from the residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidIndexError, UsageError

NORM_EPS = 1e-12


def l2_normalize(v: np.ndarray, axis: int) -> np.ndarray:
    norm = np.sqrt((v * v).sum(axis=axis, keepdims=True))
    return v / np.maximum(norm, NORM_EPS)


@dataclass(frozen=True)
class CodebookSet:
    codebooks: np.ndarray  # (stages, size, code_dim)
    in_proj: np.ndarray  # (stages, code_dim, hidden)
    out_proj: np.ndarray  # (stages, hidden, code_dim)

    @property
    def n_stages(self) -> int:
        return self.codebooks.shape[0]

    @property
    def size(self) -> int:
        return self.codebooks.shape[1]

    @classmethod
    def from_weights(cls, weights, n_stages: int) -> "CodebookSet":
        def stack(kind):
            return np.stack([weights.get64(f"rvq.stage{s}.{kind}") for s in range(n_stages)])

        books = cls(stack("codebook"), stack("in_proj"), stack("out_proj"))
        if not np.all(np.isfinite(books.codebooks)):
            raise ConfigError("codebooks contain non-finite values")
        return books

    def to_tensors(self) -> dict:
        out = {}
        for s in range(self.n_stages):
            out[f"rvq.stage{s}.codebook"] = self.codebooks[s]
            out[f"rvq.stage{s}.in_proj"] = self.in_proj[s]
            out[f"rvq.stage{s}.out_proj"] = self.out_proj[s]
        return out

    def with_codebooks(self, codebooks) -> "CodebookSet":
        return CodebookSet(np.asarray(codebooks, dtype=np.float64), self.in_proj, self.out_proj)


@dataclass
class QuantizeResult:
    codes: np.ndarray  # (T, n_layers) int64
    quantized: np.ndarray  # (hidden, T)
    residual_energy: np.ndarray  # (n_layers,) mean squared residual after each stage


def nearest_codeword(query: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Cosine nearest neighbour for each column of ``query`` (D, T).

    Ties resolve to the lowest index; an all-zero query scores 0 against
    every codeword and therefore selects index 0.
    """
    scores = l2_normalize(codebook, axis=1) @ l2_normalize(query, axis=0)
    return np.argmax(scores, axis=0)


def stage_contribution(books: CodebookSet, stage: int, indices: np.ndarray) -> np.ndarray:
    return books.out_proj[stage] @ books.codebooks[stage][indices].T


def _check_layers(n_layers, books):
    if not 1 <= n_layers <= books.n_stages:
        raise UsageError(f"n_layers must be in [1, {books.n_stages}], got {n_layers}")


def quantize(latent: np.ndarray, books: CodebookSet, n_layers: int) -> QuantizeResult:
    _check_layers(n_layers, books)
    residual = np.array(latent, dtype=np.float64)
    quantized = np.zeros_like(residual)
    codes = np.zeros((latent.shape[1], n_layers), dtype=np.int64)
    energy = np.zeros(n_layers)
    for s in range(n_layers):
        idx = nearest_codeword(books.in_proj[s] @ residual, books.codebooks[s])
        contrib = stage_contribution(books, s, idx)
        quantized += contrib
        residual = residual - contrib
        codes[:, s] = idx
        energy[s] = float(np.mean(residual ** 2)) if residual.size else 0.0
    return QuantizeResult(codes, quantized, energy)


def dequantize(codes: np.ndarray, books: CodebookSet, n_layers: int) -> np.ndarray:
    codes = np.asarray(codes)
    _check_layers(n_layers, books)
    if codes.ndim != 2 or codes.shape[1] < n_layers:
        raise UsageError(f"codes of shape {codes.shape} carry fewer than {n_layers} layers")
    bad = (codes[:, :n_layers] < 0) | (codes[:, :n_layers] >= books.size)
    if bad.any():
        t, s = np.argwhere(bad)[0]
        raise InvalidIndexError(
            f"code index {codes[t, s]} at frame {t}, layer {s} outside [0, {books.size})"
        )
    out = np.zeros((books.out_proj.shape[1], codes.shape[0]))
    for s in range(n_layers):
        out += stage_contribution(books, s, codes[:, s])
    return out


def codebook_utilization(codes: np.ndarray, codebook_size: int = 1024) -> np.ndarray:
    """Fraction of distinct codewords used, per stage."""
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[0] == 0:
        n = codes.shape[1] if codes.ndim == 2 else 0
        return np.zeros(n)
    return np.array([len(np.unique(codes[:, s])) / codebook_size for s in range(codes.shape[1])])


# -- desk-scale codebook fitting ---------------------------------------------


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            j = rng.choice(n, p=d2 / total)
        else:
            # fewer distinct points than clusters: remaining centres duplicate
            j = rng.integers(n)
        centers[i] = points[j]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def _assign(points, centers):
    d2 = (
        (points ** 2).sum(axis=1, keepdims=True)
        - 2.0 * points @ centers.T
        + (centers ** 2).sum(axis=1)[None, :]
    )
    labels = np.argmin(d2, axis=1)
    # exact objective from the chosen centres, not the expanded form
    err = ((points - centers[labels]) ** 2).sum(axis=1)
    return labels, float(err.mean())


def kmeans(points: np.ndarray, k: int, iterations: int, rng: np.random.Generator):
    """Lloyd's algorithm from a k-means++ start.

    Returns ``(centers, history)`` where ``history[i]`` is the mean squared
    distance to the assigned centre at iteration ``i``. Empty clusters keep
    their previous centre, which keeps the history non-increasing.
    """
    centers = kmeans_plus_plus(points, k, rng)
    history = []
    labels, err = _assign(points, centers)
    history.append(err)
    for _ in range(iterations):
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, points)
        counts = np.bincount(labels, minlength=k)
        filled = counts > 0
        centers[filled] = sums[filled] / counts[filled, None]
        labels, err = _assign(points, centers)
        history.append(err)
    return centers, history


@dataclass
class FitReport:
    histories: list  # per stage, k-means objective per iteration

    @property
    def final_errors(self) -> list:
        return [h[-1] for h in self.histories]


def fit_codebooks(latents, books: CodebookSet, seed: int = 0, iterations: int = 20):
    """Greedy per-stage k-means on normalized projections of the residual.

    ``latents`` is a (hidden, N) array or a sequence of (hidden, T_i)
    arrays. Projections in ``books`` are kept; only codebooks are refit.
    """
    if isinstance(latents, np.ndarray):
        data = np.asarray(latents, dtype=np.float64)
    else:
        parts = [np.asarray(z, dtype=np.float64) for z in latents]
        data = np.concatenate(parts, axis=1) if parts else np.zeros((books.in_proj.shape[2], 0))
    k = books.size
    if data.shape[1] < k:
        raise ConfigError(f"need at least {k} latent frames to fit codebooks, got {data.shape[1]}")
    rng = np.random.default_rng(seed)
    residual = data.copy()
    fitted = books.codebooks.copy()
    histories = []
    for s in range(books.n_stages):
        points = l2_normalize(books.in_proj[s] @ residual, axis=0).T
        centers, history = kmeans(points, k, iterations, rng)
        fitted[s] = centers
        histories.append(history)
        staged = books.with_codebooks(fitted)
        idx = nearest_codeword(books.in_proj[s] @ residual, fitted[s])
        residual = residual - stage_contribution(staged, s, idx)
    return books.with_codebooks(fitted), FitReport(histories)
