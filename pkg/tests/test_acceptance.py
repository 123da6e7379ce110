"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

import contextlib
import math
import time

import numpy as np
import pytest

from tfcodec import bitstream, complexity, dsp, losses, model, nn, rvq, testkit
from tfcodec.bitstream import StreamHeader

from .conftest import ACCEPTANCE_RESULTS, speech_like

HOP, WIN = 240, 720


@contextlib.contextmanager
def criterion(number, title):
    detail = {"text": ""}
    try:
        yield detail
    except BaseException as exc:
        ACCEPTANCE_RESULTS[number] = (False, title, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        print(f"criterion {number}: FAIL  {title}")
        raise
    ACCEPTANCE_RESULTS[number] = (True, title, detail["text"])
    print(f"criterion {number}: PASS  {title}: {detail['text']}")


def rel(value, target):
    return value / target - 1


def test_criterion_1_complexity():
    with criterion(1, "complexity reproduction") as d:
        start = time.perf_counter()
        report = complexity.count_graph(model.DEFAULT_CONFIG)
        params = complexity.count_params(model.init_weights())
        elapsed = time.perf_counter() - start
        total, receiver = report.total_macs_per_second, report.receiver_macs_per_second
        assert abs(rel(total, 349.29e6)) <= 0.05, total
        assert abs(rel(receiver, 144.82e6)) <= 0.05, receiver
        assert abs(rel(params, 3.47e6)) <= 0.05, params
        assert elapsed < 1.0, elapsed
        d["text"] = (
            f"{total / 1e6:.2f}M MACs/s ({rel(total, 349.29e6):+.2%}), receiver {receiver / 1e6:.2f}M "
            f"({rel(receiver, 144.82e6):+.2%}), {params:,} params ({rel(params, 3.47e6):+.2%})"
        )


def test_criterion_2_bitrate(rng):
    with criterion(2, "bitrate exactness") as d:
        for n in range(1, 7):
            data = bitstream.pack(rng.integers(0, 1024, (100, n)), StreamHeader(n_layers=n))
            header, codes = bitstream.unpack(data)
            bits = codes.shape[1] * header.bits_per_index * len(codes)
            seconds = len(codes) * header.hop / header.sample_rate
            assert bits / seconds == n * 1000
            assert header.information_bps == n * 1000
        one = bitstream.pack([[1023]], StreamHeader(n_layers=1))
        six = bitstream.pack([[0, 1, 2, 1021, 512, 1023]], StreamHeader(n_layers=6))
        from .test_bitstream import GOLDEN

        assert one == (GOLDEN / "one_layer_1023.voc").read_bytes()
        assert six == (GOLDEN / "six_layer_frame.voc").read_bytes()
        assert six[12:] == testkit.bit_layout([0, 1, 2, 1021, 512, 1023])
        d["text"] = "n_layers x 1000 bps for n = 1..6; 1- and 6-layer golden frames match"


def test_criterion_3_latency():
    with criterion(3, "latency budget") as d:
        assert complexity.latency_budget(dsp.DEFAULT_STFT).total_ms == 30.0
        assert complexity.latency_budget(dsp.DEFAULT_STFT, 20.0).total_ms == 50.0
        assert model.declared_latency_ms(cascade=model.SpectralGate(lookahead_ms=20.0)) == 50.0
        d["text"] = "30 ms default, 50 ms with a 20 ms look-ahead cascade"


def test_criterion_4_stft_reconstruction():
    with criterion(4, "STFT perfect reconstruction") as d:
        start = time.perf_counter()
        r = np.random.default_rng(4)
        worst = 0.0
        for _ in range(100):
            x = r.standard_normal(72000)
            y = dsp.istft(dsp.stft(x))
            t = dsp.DEFAULT_STFT.num_frames(len(x))
            lo, hi = WIN - HOP, t * HOP
            err = np.linalg.norm(y[lo:hi] - x[lo:hi]) / np.linalg.norm(x[lo:hi])
            worst = max(worst, err)
        elapsed = time.perf_counter() - start
        w2 = testkit.hann(WIN)
        cola = [sum(w2[n + k * HOP] for k in range(WIN // HOP)) for n in range(HOP)]
        assert worst < 1e-6, worst
        assert max(abs(c - 1.5) for c in cola) <= 1e-9
        assert elapsed < 10.0, elapsed
        d["text"] = f"worst relative error {worst:.1e} over 100 signals in {elapsed:.1f} s; COLA 1.5"


def _layers(weights):
    enc = model.Encoder(weights).layers
    dec = model.Decoder(weights).layers
    return [(l, 722 if i == 0 else 192) for i, l in enumerate(enc)] + [(l, 192) for l in dec]


def test_criterion_5_causality_and_streaming(weights):
    with criterion(5, "causality and streaming equivalence") as d:
        start = time.perf_counter()
        r = np.random.default_rng(5)
        for layer, c_in in _layers(weights):
            x = r.standard_normal((c_in, 16))
            for t in (0, 7, 15):
                y = x.copy()
                y[:, t] += 1.0
                assert np.array_equal(layer(x)[:, :t], layer(y)[:, :t])
        base = speech_like(1.0, seed=50)
        for t in (3, 40, 97):
            y = base.copy()
            y[t * HOP :] = r.standard_normal(len(base) - t * HOP) * 0.1
            a = model.codec_roundtrip(base, 6, weights)
            b = model.codec_roundtrip(y, 6, weights)
            keep = model.causal_horizon(t * HOP)
            assert np.array_equal(a[:keep], b[:keep])
            z = model.encode(base, weights)
            assert np.array_equal(z[:, : t - 2], model.encode(y, weights)[:, : t - 2])
        worst_latent = worst_audio = 0.0
        for i in range(10):
            x = speech_like(3.0, seed=100 + i) if i % 2 else 0.1 * r.standard_normal(72000)
            enc = model.StreamingEncoder(weights, 6)
            pushed = [enc.push_latent(x[j : j + HOP]) for j in range(0, len(x), HOP)]
            streamed = np.stack([z for z in pushed if z is not None], axis=1)
            batch = model.encode(x, weights)
            worst_latent = max(worst_latent, float(np.max(np.abs(streamed - batch))))
            codes = rvq.quantize(batch, model.load_codebooks(weights), 6).codes
            dec = model.StreamingDecoder(weights, 6)
            audio = np.concatenate([dec.push_frame(c) for c in codes] + [dec.flush()])
            worst_audio = max(worst_audio, float(np.max(np.abs(audio - model.decode(codes, 6, weights)))))
        elapsed = time.perf_counter() - start
        assert worst_latent <= 1e-6 and worst_audio <= 1e-6, (worst_latent, worst_audio)
        assert elapsed < 60.0, elapsed
        d["text"] = (
            f"every layer and end to end exact; streaming max-abs {worst_latent:.1e} (latent), "
            f"{worst_audio:.1e} (audio) over 10 utterances in {elapsed:.1f} s"
        )


def test_criterion_6_rvq(weights):
    with criterion(6, "RVQ correctness") as d:
        books = model.load_codebooks(weights)
        r = np.random.default_rng(6)
        z = r.standard_normal((192, 1000))
        res = rvq.quantize(z, books, 6)
        residual = z.copy()
        agree = 0
        for s in range(6):
            q = books.in_proj[s] @ residual
            agree += sum(res.codes[t, s] == testkit.exhaustive_nn(q[:, t], books.codebooks[s]) for t in range(1000))
            residual = residual - rvq.stage_contribution(books, s, res.codes[:, s])
        assert agree == 6000
        for n in range(2, 7):
            assert np.array_equal(
                rvq.dequantize(res.codes, books, n),
                rvq.dequantize(res.codes, books, n - 1) + rvq.stage_contribution(books, n - 1, res.codes[:, n - 1]),
            )
        base = rvq.quantize(z, books, 1).codes
        for alpha in (0.1, 1.0, 10.0):
            assert np.array_equal(rvq.quantize(alpha * z, books, 1).codes, base)
        latents, _ = testkit.planted_cluster_latents(seed=6)
        _, report = rvq.fit_codebooks(latents, books, seed=0)
        assert max(report.final_errors) < 1e-6
        d["text"] = (
            f"6000/6000 selections match exhaustive search; additivity exact; stage selection "
            f"scale-invariant; planted fit error {max(report.final_errors):.1e}"
        )


def test_criterion_7_bitstream(weights):
    with criterion(7, "bitstream round trip and prefix property") as d:
        r = np.random.default_rng(7)
        codes = r.integers(0, 1024, (10_000, 6))
        header, back = bitstream.unpack(bitstream.pack(codes, StreamHeader()))
        assert header == StreamHeader() and np.array_equal(back, codes)
        stream = bitstream.pack(model.encode_codes(speech_like(1.0, seed=70), weights, 6), StreamHeader())
        _, full = bitstream.unpack(stream)
        for k in range(1, 7):
            h, stripped = bitstream.unpack(bitstream.strip_layers(stream, k))
            assert model.decode(stripped, h.n_layers, weights).tobytes() == model.decode(full, k, weights).tobytes()
        d["text"] = "10,000-frame identity; stripped decode byte-identical for k = 1..6"


def test_criterion_8_losses():
    with criterion(8, "loss suite") as d:
        r = np.random.default_rng(8)
        worst = 0.0

        def check(got, want):
            nonlocal worst
            worst = max(worst, abs(got - want))
            assert abs(got - want) <= 1e-9, (got, want)

        est, ref = r.standard_normal(300), r.standard_normal(300)
        check(losses.si_snr_loss(est, ref), testkit.si_snr_oracle(est, ref))
        a = r.standard_normal((9, 6)) + 1j * r.standard_normal((9, 6))
        b = r.standard_normal((9, 6)) + 1j * r.standard_normal((9, 6))
        check(losses.mag_loss(a, b), testkit.mag_oracle(a, b))
        check(losses.real_imag_loss(a, b), sum(testkit.real_imag_oracle(a, b)))
        x, y = r.standard_normal(2200), r.standard_normal(2200)
        check(losses.mel_loss(x, y), testkit.mel_loss_oracle(x, y))
        ze, ek = r.standard_normal((192, 5)), r.standard_normal((192, 5))
        for v in losses.vq_losses(ze, ek):
            check(v, testkit.mse_oracle(ze, ek))
        disc = losses.init_discriminator(seed=8)
        real, fake = losses.disc_forward(x, disc), losses.disc_forward(y, disc)
        oracle = testkit.lsgan_oracles(
            [o.score for o in real], [o.score for o in fake], [o.features for o in real], [o.features for o in fake]
        )
        for got, want in zip(losses.adv_losses(x, y, disc), oracle):
            check(got, want)

        assert losses.mag_loss(a, a) == 0.0 and losses.real_imag_loss(a, a) == 0.0
        assert losses.mel_loss(x, x) == 0.0
        assert losses.vq_losses(ze, ze) == (0.0, 0.0)
        assert losses.adv_losses(x, x, disc)[1] == 0.0
        assert losses.generator_adv_loss([np.ones((4, 3))] * 5) == 0.0
        assert losses.discriminator_adv_loss([np.ones(3)] * 5, [np.zeros(3)] * 5) == 0.0
        floor = -math.log10((1 + 1e-8) / 1e-8)
        assert abs(losses.si_snr_loss(2.0 * ref, ref) - floor) <= 1e-9

        drift = max(abs(losses.si_snr_loss(al * est, ref) - losses.si_snr_loss(est, ref)) for al in (1e-3, 0.5, 40.0))
        assert drift <= 1e-9
        assert losses.generator_total(losses.GenComponents(1, 1, 1, 1, 1)) == 19.25
        d["text"] = f"oracle agreement within {worst:.1e}; identity minima exact; SI-SNR scale drift {drift:.1e}; 19.25"


def test_criterion_9_smoke_round_trip(weights):
    with criterion(9, "non-reproducible perceptual results replaced by a round-trip smoke test") as d:
        corpus = [model.encode(speech_like(4.0, seed=s), weights) for s in range(3)]
        fitted, _ = rvq.fit_codebooks(corpus, model.load_codebooks(weights), seed=0)
        trained = weights.updated(fitted.to_tensors())
        x = speech_like(3.0, seed=99)
        decoded = model.codec_roundtrip(x, 6, trained)
        t, synth = testkit.length_algebra(len(x), WIN, HOP)
        assert np.all(np.isfinite(decoded))
        assert len(decoded) == synth == t * HOP + WIN - HOP
        ours, silent = losses.mel_loss(decoded, x), losses.mel_loss(np.zeros_like(x), x)
        assert ours < silent, (ours, silent)
        d["text"] = (
            f"listening-test and objective scores need full GAN training and are not reproduced; "
            f"smoke test mel {ours:.3f} < silence {silent:.3f}, {len(decoded)} finite samples"
        )
