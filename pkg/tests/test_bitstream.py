from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfcodec import bitstream, model, testkit
from tfcodec.bitstream import StreamHeader
from tfcodec.errors import (
    BadMagicError,
    CorruptStreamError,
    FieldRangeError,
    TruncatedStreamError,
    UnsupportedVersionError,
    UsageError,
)

GOLDEN = Path(__file__).parent / "golden"


class TestHeader:
    def test_layout(self):
        assert StreamHeader(n_layers=3).to_bytes() == bytes.fromhex("564f4331015dc0f0030a0000")
        assert len(StreamHeader().to_bytes()) == bitstream.HEADER_SIZE == 12

    @pytest.mark.parametrize("n", range(1, 7))
    def test_rates(self, n):
        h = StreamHeader(n_layers=n)
        assert h.information_bps == n * 1000
        assert h.frame_bytes == [2, 3, 4, 5, 7, 8][n - 1]
        assert h.wire_bps == h.frame_bytes * 800

    def test_bits_per_index(self):
        assert StreamHeader().bits_per_index == int(np.ceil(np.log2(1024)))


class TestPack:
    def test_zero_index(self):
        assert bitstream.pack([[0]], StreamHeader(n_layers=1))[12:] == b"\x00\x00"

    def test_max_index(self):
        assert bitstream.pack([[1023]], StreamHeader(n_layers=1))[12:] == b"\xff\xc0"

    def test_six_layer_payload_size(self, rng):
        data = bitstream.pack(rng.integers(0, 1024, (100, 6)), StreamHeader())
        assert len(data) - 12 == 800
        assert 100 * 6 * 10 // 8 == 750

    @pytest.mark.parametrize("n", range(1, 7))
    def test_matches_string_layout(self, rng, n):
        codes = rng.integers(0, 1024, (20, n))
        payload = bitstream.pack(codes, StreamHeader(n_layers=n))[12:]
        assert payload == b"".join(testkit.bit_layout(row) for row in codes)

    def test_layer_mismatch(self):
        with pytest.raises(UsageError):
            bitstream.pack(np.zeros((3, 2), dtype=int), StreamHeader(n_layers=3))

    def test_index_range(self):
        with pytest.raises(UsageError):
            bitstream.pack([[1024]], StreamHeader(n_layers=1))

    def test_empty_stream(self):
        data = bitstream.pack(np.zeros((0, 4), dtype=int), StreamHeader(n_layers=4))
        header, codes = bitstream.unpack(data)
        assert header.n_layers == 4 and codes.shape == (0, 4)


class TestGolden:
    def test_one_layer(self):
        assert bitstream.pack([[1023]], StreamHeader(n_layers=1)) == (GOLDEN / "one_layer_1023.voc").read_bytes()

    def test_six_layers(self):
        data = bitstream.pack([[0, 1, 2, 1021, 512, 1023]], StreamHeader())
        assert data == (GOLDEN / "six_layer_frame.voc").read_bytes()
        assert data[12:] == bytes.fromhex("0000100bfd803ff0")

    def test_golden_unpack(self):
        header, codes = bitstream.unpack((GOLDEN / "six_layer_frame.voc").read_bytes())
        assert header == StreamHeader()
        assert codes.tolist() == [[0, 1, 2, 1021, 512, 1023]]


class TestUnpack:
    def test_roundtrip_ten_thousand_frames(self, rng):
        codes = rng.integers(0, 1024, (10_000, 6))
        header, back = bitstream.unpack(bitstream.pack(codes, StreamHeader()))
        assert header == StreamHeader()
        assert np.array_equal(back, codes)

    def test_truncation_names_frame(self, rng):
        data = bitstream.pack(rng.integers(0, 1024, (5, 6)), StreamHeader())
        with pytest.raises(TruncatedStreamError, match="frame 4") as info:
            bitstream.unpack(data[:-1])
        assert info.value.frame_index == 4
        assert info.value.offset == 12 + 4 * 8

    def test_bad_magic(self):
        data = bytearray(bitstream.pack([[1]], StreamHeader(n_layers=1)))
        data[0] = ord("X")
        with pytest.raises(BadMagicError) as info:
            bitstream.unpack(bytes(data))
        assert info.value.code == "bad_magic"

    def test_version(self):
        data = bytearray(bitstream.pack([[1]], StreamHeader(n_layers=1)))
        data[4] = 2
        with pytest.raises(UnsupportedVersionError):
            bitstream.unpack(bytes(data))

    @pytest.mark.parametrize("offset,value", [(8, 0), (8, 7), (9, 8), (7, 100), (10, 1)])
    def test_field_range(self, offset, value):
        data = bytearray(bitstream.pack([[1]], StreamHeader(n_layers=1)))
        data[offset] = value
        with pytest.raises(FieldRangeError):
            bitstream.unpack(bytes(data))

    def test_error_codes_distinct(self):
        codes = {cls.code for cls in (BadMagicError, UnsupportedVersionError, FieldRangeError, TruncatedStreamError)}
        assert len(codes) == 4
        assert all(issubclass(c, CorruptStreamError) for c in (BadMagicError, TruncatedStreamError))

    def test_short_header(self):
        with pytest.raises(TruncatedStreamError):
            bitstream.unpack(b"VOC1\x01")


class TestStrip:
    def test_keep_all_is_noop(self, rng):
        data = bitstream.pack(rng.integers(0, 1024, (9, 4)), StreamHeader(n_layers=4))
        assert bitstream.strip_layers(data, 4) == data

    def test_strip_to_one(self, rng):
        codes = rng.integers(0, 1024, (50, 6))
        data = bitstream.strip_layers(bitstream.pack(codes, StreamHeader()), 1)
        header, back = bitstream.unpack(data)
        assert len(data) - 12 == 2 * 50
        assert header.information_bps == 1000
        assert np.array_equal(back, codes[:, :1])

    @pytest.mark.parametrize("keep", [0, 7])
    def test_keep_range(self, keep):
        with pytest.raises(UsageError):
            bitstream.strip_layers(bitstream.pack([[1] * 6], StreamHeader()), keep)

    @pytest.mark.parametrize("keep", [1, 3, 6])
    def test_decode_equivalence(self, weights, rng, keep):
        codes = rng.integers(0, 1024, (12, 6))
        data = bitstream.pack(codes, StreamHeader())
        header, stripped = bitstream.unpack(bitstream.strip_layers(data, keep))
        a = model.decode(stripped, header.n_layers, weights)
        b = model.decode(codes, keep, weights)
        assert a.tobytes() == b.tobytes()


@settings(max_examples=60, deadline=None)
@given(rows=st.lists(st.lists(st.integers(0, 1023), min_size=1, max_size=6), min_size=1, max_size=8).filter(
    lambda r: len({len(x) for x in r}) == 1))
def test_roundtrip_property(rows):
    header = StreamHeader(n_layers=len(rows[0]))
    data = bitstream.pack(rows, header)
    assert bitstream.unpack(data)[1].tolist() == rows
    for keep in range(1, header.n_layers + 1):
        assert bitstream.unpack(bitstream.strip_layers(data, keep))[1].tolist() == [r[:keep] for r in rows]
