from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from lacp.errors import BadMagic, BodyTooLarge, UnsupportedVersion
from lacp.framing import (
    CLASS_REQUEST,
    HEADER_SIZE,
    MAX_BODY,
    Frame,
    FrameDecoder,
    decode_frames,
    encode_frame,
)


class TestEncode:
    def test_declared_layout(self):
        data = encode_frame(Frame(frame_class=0x01, body=b"hello"))
        assert len(data) == 15
        assert data[:10] == bytes.fromhex("4c414350" "01" "01" "00000005")
        assert data[10:] == b"hello"

    def test_empty_body(self):
        data = encode_frame(Frame(frame_class=0x02, body=b""))
        assert len(data) == HEADER_SIZE
        assert data[6:10] == b"\x00\x00\x00\x00"

    def test_body_cap(self):
        assert len(encode_frame(Frame(0x01, b"x" * MAX_BODY))) == MAX_BODY + HEADER_SIZE
        with pytest.raises(BodyTooLarge):
            encode_frame(Frame(0x01, b"x" * (MAX_BODY + 1)))


class TestDecode:
    def test_one_byte_chunks(self):
        data = encode_frame(Frame(0x01, b"hello"))
        decoder = FrameDecoder()
        frames = []
        for i in range(len(data)):
            frames.extend(decoder.feed(data[i:i + 1]))
        assert frames == [Frame(0x01, b"hello")]
        assert decoder.residual == b""

    def test_bad_magic_fails_fast(self):
        decoder = FrameDecoder()
        with pytest.raises(BadMagic):
            decoder.feed(b"HTTP/1.1 200 OK")
        # poisoned decoder keeps raising
        with pytest.raises(BadMagic):
            decoder.feed(b"")

    def test_bad_magic_on_partial_prefix(self):
        decoder = FrameDecoder()
        with pytest.raises(BadMagic):
            decoder.feed(b"LX")

    def test_unsupported_version(self):
        decoder = FrameDecoder()
        with pytest.raises(UnsupportedVersion):
            decoder.feed(b"LACP\x02")

    def test_oversize_length_header(self):
        header = b"LACP\x01\x01" + (MAX_BODY + 1).to_bytes(4, "big")
        with pytest.raises(BodyTooLarge):
            FrameDecoder().feed(header)

    def test_residual_partial_frame(self):
        data = encode_frame(Frame(0x03, b"abcdef"))
        frames, residual = decode_frames(data[:-2])
        assert frames == []
        assert residual == data[:-2]

    def test_two_frames_one_chunk(self):
        data = encode_frame(Frame(0x01, b"a")) + encode_frame(Frame(0x02, b"bb"))
        frames, residual = decode_frames(data)
        assert frames == [Frame(0x01, b"a"), Frame(0x02, b"bb")]
        assert residual == b""

    def test_prefix_safety(self):
        """No proper prefix of a valid frame yields a complete frame."""
        data = encode_frame(Frame(0x01, b"hello world"))
        for cut in range(len(data)):
            frames, _ = decode_frames(data[:cut])
            assert frames == []


class TestGolden:
    def test_golden_frame_bytes_stable(self, data_dir):
        compact = (data_dir / "fixture_envelope.txt").read_text().strip()
        golden = bytes.fromhex((data_dir / "golden_frame.hex").read_text().strip())
        assert encode_frame(Frame(CLASS_REQUEST, compact.encode("utf-8"))) == golden

    def test_golden_frame_decodes_to_verifiable_envelope(self, data_dir):
        from lacp import envelope as env
        golden = bytes.fromhex((data_dir / "golden_frame.hex").read_text().strip())
        frames, residual = decode_frames(golden)
        assert residual == b"" and len(frames) == 1
        keystore = env.Keystore.load(str(data_dir / "fixture_keystore.json"))
        claims = env.verify_envelope(
            env.compact_decode(frames[0].body.decode("utf-8")), keystore)
        assert claims.sender == "alice"
        assert claims.payload.intent_id == "golden-intent"


# --- chunking invariance property ----------------------------------------------

frames_strategy = st.lists(
    st.builds(Frame,
              frame_class=st.sampled_from([0x01, 0x02, 0x03]),
              body=st.binary(max_size=200)),
    min_size=0, max_size=6)


@given(frames_strategy, st.randoms(use_true_random=False))
@settings(max_examples=200)
def test_chunking_invariance(frames, rng):
    stream = b"".join(encode_frame(f) for f in frames)
    decoder = FrameDecoder()
    out = []
    pos = 0
    while pos < len(stream):
        step = rng.randint(1, max(1, len(stream) - pos))
        out.extend(decoder.feed(stream[pos:pos + step]))
        pos += step
    assert out == frames
    assert decoder.residual == b""


def test_chunking_invariance_seeded_sweep():
    """Deterministic companion to the hypothesis property."""
    rng = random.Random(1234)
    for _ in range(100):
        frames = [Frame(rng.choice([1, 2, 3]), rng.randbytes(rng.randrange(0, 300)))
                  for _ in range(rng.randrange(0, 5))]
        stream = b"".join(encode_frame(f) for f in frames)
        decoder = FrameDecoder()
        out, pos = [], 0
        while pos < len(stream):
            step = rng.randint(1, len(stream) - pos)
            out.extend(decoder.feed(stream[pos:pos + step]))
            pos += step
        assert out == frames and decoder.residual == b""
