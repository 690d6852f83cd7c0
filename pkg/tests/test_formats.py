import numpy as np
import pytest

from flashsep import CFAPattern
from flashsep.errors import DataError, FormatError
from flashsep.formats import (
    read_homography,
    read_lfr,
    read_pgm,
    read_ppm,
    read_raw_frame,
    write_homography,
    write_lfr,
    write_pgm,
    write_ppm,
    write_raw_frame,
)

from conftest import default_meta, frame_from_linear, smooth_image


class TestPgm:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        data = rng.integers(0, 65536, size=(7, 5)).astype(np.uint16)
        p = tmp_path / "a.pgm"
        write_pgm(p, data)
        assert np.array_equal(read_pgm(p), data)
        # re-serialization is byte-identical
        q = tmp_path / "b.pgm"
        write_pgm(q, read_pgm(p))
        assert p.read_bytes() == q.read_bytes()

    def test_big_endian_sample_order(self, tmp_path):
        p = tmp_path / "a.pgm"
        write_pgm(p, np.array([[0x0102]], dtype=np.uint16))
        payload = p.read_bytes().split(b"65535\n", 1)[1]
        assert payload == b"\x01\x02"

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P6\n1 1\n255\n\x00")
        with pytest.raises(FormatError) as e:
            read_pgm(p)
        assert e.value.offset == 0

    def test_truncated_payload_reports_offset(self, tmp_path):
        p = tmp_path / "trunc.pgm"
        p.write_bytes(b"P5\n4 4\n65535\n\x00\x00")
        with pytest.raises(FormatError) as e:
            read_pgm(p)
        assert e.value.offset is not None

    def test_comment_in_header(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# a comment\n2 1\n255\nAB")
        assert np.array_equal(read_pgm(p), np.array([[65, 66]]))


class TestPpm:
    @pytest.mark.parametrize("depth", [8, 16])
    def test_round_trip(self, tmp_path, depth):
        img = smooth_image(6, 4, seed=3)
        p = tmp_path / "a.ppm"
        write_ppm(p, img, depth=depth)
        back = read_ppm(p)
        assert np.abs(back - img).max() <= 1.0 / (255 if depth == 8 else 65535)
        q = tmp_path / "b.ppm"
        write_ppm(q, back, depth=depth)
        assert p.read_bytes() == q.read_bytes()

    def test_wrong_shape_rejected(self, tmp_path):
        with pytest.raises(DataError):
            write_ppm(tmp_path / "x.ppm", np.zeros((4, 4)), depth=8)


class TestLfr:
    def test_header_layout(self, tmp_path):
        p = tmp_path / "a.lfr"
        write_lfr(p, np.zeros((2, 2, 3), dtype=np.float32))
        head = p.read_bytes()[:16]
        assert head == b"LFR1" + (2).to_bytes(4, "little") * 2 + (3).to_bytes(4, "little")

    @pytest.mark.parametrize("channels", [1, 2, 3])
    def test_round_trip_bit_exact(self, tmp_path, rng, channels):
        data = rng.standard_normal((5, 7, channels)).astype(np.float32)
        p = tmp_path / "a.lfr"
        write_lfr(p, data)
        back = read_lfr(p)
        expected = data[:, :, 0] if channels == 1 else data
        assert np.array_equal(back, expected)
        q = tmp_path / "b.lfr"
        write_lfr(q, back)
        assert p.read_bytes() == q.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.lfr"
        p.write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(FormatError) as e:
            read_lfr(p)
        assert e.value.offset == 0

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "t.lfr"
        write_lfr(p, np.zeros((4, 4), dtype=np.float32))
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(FormatError):
            read_lfr(p)


class TestRawFrame:
    def test_round_trip_identical_samples(self, tmp_path):
        frame = frame_from_linear(smooth_image(8, 8, channels=1, seed=5))
        p = tmp_path / "frame.pgm"
        write_raw_frame(p, frame)
        back = read_raw_frame(p)
        assert np.array_equal(back.data, frame.data)
        assert back.cfa == frame.cfa
        assert back.meta == frame.meta

    def test_sidecar_name(self, tmp_path):
        frame = frame_from_linear(smooth_image(4, 4, channels=1, seed=5))
        write_raw_frame(tmp_path / "shot.pgm", frame)
        assert (tmp_path / "shot.meta.json").exists()

    def test_missing_sidecar(self, tmp_path):
        frame = frame_from_linear(smooth_image(4, 4, channels=1, seed=5))
        p = tmp_path / "shot.pgm"
        write_raw_frame(p, frame)
        (tmp_path / "shot.meta.json").unlink()
        with pytest.raises(DataError):
            read_raw_frame(p)


class TestHomographyJson:
    def test_round_trip(self, tmp_path):
        h = np.array([[1.5, 0.1, 3], [0.2, 0.9, -1], [1e-4, 0, 1]])
        p = tmp_path / "h.json"
        write_homography(p, h)
        assert np.array_equal(read_homography(p), h)
