import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from softhand import imageio
from softhand.framing import (
    Frame,
    FramingError,
    PixelFormat,
    SyncLoss,
    decode_stream,
    dcmi_decode,
    dcmi_encode,
    downsample_2x2,
    encode_frame,
)


def crc32_reference(data: bytes) -> int:
    """Table-free bitwise CRC-32 (reflected 0xEDB88320), independent oracle."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def make_frame(rng, h=6, w=8, fmt=PixelFormat.RGB565, camera=0, counter=0):
    payload = rng.integers(0, 256, h * w * fmt.bytes_per_pixel, dtype=np.uint8).tobytes()
    return Frame(camera, counter, w, h, fmt, payload)


class TestFrame:
    def test_payload_length_enforced(self):
        with pytest.raises(FramingError):
            Frame(0, 0, 4, 4, PixelFormat.RGB565, b"\x00" * 10)

    def test_camera_id_range(self):
        with pytest.raises(FramingError):
            Frame(5, 0, 1, 1, PixelFormat.RGB888, b"\x00\x00\x00")

    def test_qcif_rgb565_payload_size(self):
        rng = np.random.default_rng(0)
        frame = make_frame(rng, h=144, w=176)
        assert frame.payload_bytes == 50688

    def test_array_round_trip_rgb888(self):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, (6, 8, 3), dtype=np.uint8)
        frame = Frame.from_array(img, 1, 9, PixelFormat.RGB888)
        np.testing.assert_array_equal(frame.to_array(), img)


class TestEncodeDecode:
    def test_round_trip_identity(self):
        rng = np.random.default_rng(2)
        for fmt in PixelFormat:
            frame = make_frame(rng, fmt=fmt, camera=3, counter=123456)
            events = decode_stream(encode_frame(frame))
            assert events == [frame]

    def test_zero_filled_88x72_rgb888_round_trip(self):
        frame = Frame(0, 0, 88, 72, PixelFormat.RGB888, bytes(88 * 72 * 3))
        assert dcmi_decode(dcmi_encode(frame)) == frame

    def test_crc_matches_independent_implementation(self):
        import binascii

        rng = np.random.default_rng(3)
        for _ in range(20):
            data = rng.integers(0, 256, int(rng.integers(1, 200)), dtype=np.uint8).tobytes()
            assert binascii.crc32(data) == crc32_reference(data)

    def test_distinct_frames_distinct_crc(self):
        rng = np.random.default_rng(4)
        a = make_frame(rng, counter=1)
        b = make_frame(rng, counter=2)
        assert encode_frame(a)[-6:] != encode_frame(b)[-6:] or a.pixels != b.pixels

    def test_single_byte_change_flips_crc(self):
        rng = np.random.default_rng(5)
        frame = make_frame(rng)
        mutated_payload = bytearray(frame.pixels)
        mutated_payload[3] ^= 0x01
        other = Frame(
            frame.camera_id, frame.frame_counter, frame.width, frame.height,
            frame.pixel_format, bytes(mutated_payload),
        )
        import struct
        import binascii

        def crc_of(f):
            header = struct.pack(
                "<BIHHB", f.camera_id, f.frame_counter, f.width, f.height, int(f.pixel_format)
            )
            return binascii.crc32(header + f.pixels)

        assert crc_of(frame) != crc_of(other)

    @settings(max_examples=60, deadline=None)
    @given(
        h=st.integers(1, 12),
        w=st.integers(1, 12),
        fmt=st.sampled_from(list(PixelFormat)),
        camera=st.integers(0, 4),
        counter=st.integers(0, 2**32 - 1),
        seed=st.integers(0, 2**16),
    )
    def test_round_trip_property(self, h, w, fmt, camera, counter, seed):
        rng = np.random.default_rng(seed)
        frame = make_frame(rng, h=h, w=w, fmt=fmt, camera=camera, counter=counter)
        assert decode_stream(encode_frame(frame)) == [frame]

    def test_multi_frame_stream(self):
        rng = np.random.default_rng(6)
        frames = [make_frame(rng, camera=i % 5, counter=i) for i in range(20)]
        stream = b"".join(encode_frame(f) for f in frames)
        assert decode_stream(stream) == frames


class TestSyncLoss:
    def test_truncated_stream_reports_and_resyncs(self):
        rng = np.random.default_rng(7)
        first = make_frame(rng, counter=1)
        second = make_frame(rng, counter=2)
        stream = encode_frame(first)[: 40] + encode_frame(second)
        events = decode_stream(stream)
        assert isinstance(events[0], SyncLoss)
        assert events[-1] == second
        assert sum(isinstance(e, SyncLoss) for e in events) == 1

    def test_truncated_tail_is_eos(self):
        rng = np.random.default_rng(8)
        frame = make_frame(rng)
        events = decode_stream(encode_frame(frame)[:-6])
        assert len(events) == 1
        assert isinstance(events[0], SyncLoss)

    def test_single_bit_flip_sweep_never_accepts_a_frame(self):
        rng = np.random.default_rng(9)
        frame = make_frame(rng, h=3, w=4)
        encoded = encode_frame(frame)
        for i in range(len(encoded)):
            for bit in range(8):
                mutated = bytearray(encoded)
                mutated[i] ^= 1 << bit
                events = decode_stream(bytes(mutated))
                accepted = [e for e in events if isinstance(e, Frame)]
                assert not accepted, f"flip at byte {i} bit {bit} accepted a frame"
                assert any(isinstance(e, SyncLoss) for e in events)

    def test_arbitrary_garbage_never_crashes(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            blob = rng.integers(0, 256, int(rng.integers(0, 400)), dtype=np.uint8).tobytes()
            for event in decode_stream(blob):
                assert isinstance(event, (Frame, SyncLoss))

    def test_empty_stream(self):
        assert decode_stream(b"") == []
        assert dcmi_decode(b"") == SyncLoss(offset=0, reason="eos")


class TestDownsample:
    def test_constant_image_stays_constant(self):
        img = np.full((8, 8, 3), 77, dtype=np.uint8)
        out = downsample_2x2(Frame.from_array(img, 0, 0, PixelFormat.RGB888))
        assert out.width == 4 and out.height == 4
        assert np.all(out.to_array() == 77)

    def test_block_mean_rounds_half_up(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        img[1, 1, 0] = 4  # block (0, 0, 0, 4) -> mean 1.0
        out = downsample_2x2(Frame.from_array(img, 0, 0, PixelFormat.RGB888))
        assert out.to_array()[0, 0, 0] == 1
        img[1, 1, 0] = 2  # mean 0.5 rounds half up to 1
        out = downsample_2x2(Frame.from_array(img, 0, 0, PixelFormat.RGB888))
        assert out.to_array()[0, 0, 0] == 1

    def test_qcif_to_88x72(self):
        rng = np.random.default_rng(11)
        img = rng.integers(0, 256, (144, 176, 3), dtype=np.uint8)
        out = downsample_2x2(Frame.from_array(img, 2, 5, PixelFormat.RGB888))
        assert (out.width, out.height) == (88, 72)
        assert out.pixel_format is PixelFormat.RGB888
        assert out.camera_id == 2 and out.frame_counter == 5

    def test_matches_block_oracle(self):
        rng = np.random.default_rng(12)
        img = rng.integers(0, 256, (6, 8, 3), dtype=np.uint8)
        out = downsample_2x2(Frame.from_array(img, 0, 0, PixelFormat.RGB888)).to_array()
        for i in range(3):
            for j in range(4):
                for c in range(3):
                    block = img[2 * i : 2 * i + 2, 2 * j : 2 * j + 2, c].astype(int)
                    expected = (block.sum() + 2) // 4
                    assert out[i, j, c] == expected

    def test_odd_dimensions_rejected(self):
        img = np.zeros((3, 4, 3), dtype=np.uint8)
        with pytest.raises(FramingError):
            downsample_2x2(Frame.from_array(img, 0, 0, PixelFormat.RGB888))


class TestImageIo:
    def test_ppm_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        img = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
        path = tmp_path / "x.ppm"
        imageio.write_ppm(path, img)
        np.testing.assert_array_equal(imageio.read_ppm(path), img)

    def test_pgm_round_trip_bool(self, tmp_path):
        mask = np.random.default_rng(14).random((5, 7)) > 0.5
        path = tmp_path / "m.pgm"
        imageio.write_pgm(path, mask)
        np.testing.assert_array_equal(imageio.read_pgm(path) > 127, mask)

    def test_rgb565_round_trip_of_representable_colors(self):
        # colors already on the 5/6/5 grid survive exactly
        rng = np.random.default_rng(15)
        r5 = rng.integers(0, 32, (4, 4), dtype=np.uint16)
        g6 = rng.integers(0, 64, (4, 4), dtype=np.uint16)
        b5 = rng.integers(0, 32, (4, 4), dtype=np.uint16)
        img = np.stack(
            [(r5 << 3) | (r5 >> 2), (g6 << 2) | (g6 >> 4), (b5 << 3) | (b5 >> 2)], axis=-1
        ).astype(np.uint8)
        packed = imageio.rgb888_to_rgb565(img)
        np.testing.assert_array_equal(imageio.rgb565_to_rgb888(packed, 4, 4), img)
