import numpy as np
import pytest

from morphattack import read_flow, read_pgm, write_flow, write_pgm
from morphattack.core import FlowField, Image
from morphattack.errors import FormatError
from morphattack.rng import CounterRng

from conftest import random_flow, random_image


class TestPgm:
    def test_file_round_trip_bit_exact(self, tmp_path):
        rng = CounterRng.from_seeds(21)
        img = random_image(rng, 13, 9)
        p1 = tmp_path / "a.pgm"
        p2 = tmp_path / "b.pgm"
        write_pgm(img, p1)
        write_pgm(read_pgm(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_quantization_is_round_half(self):
        img = Image(np.array([[0.0, 1.0, 128 / 255.0]]))
        # values representable at 8 bits survive load exactly
        p = None
        import tempfile, os
        with tempfile.TemporaryDirectory() as d:
            p = os.path.join(d, "x.pgm")
            write_pgm(img, p)
            back = read_pgm(p)
        assert np.array_equal(back.pixels, img.pixels)

    def test_header_comments_are_skipped(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# a comment\n2 1\n255\n\x00\xff")
        img = read_pgm(p)
        assert img.width == 2 and img.height == 1
        assert np.array_equal(img.pixels, np.array([[0.0, 1.0]]))

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(FormatError):
            read_pgm(p)

    def test_truncated_raster(self, tmp_path):
        p = tmp_path / "short.pgm"
        p.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(FormatError):
            read_pgm(p)


class TestFlowFile:
    def test_file_round_trip_bit_exact(self, tmp_path):
        rng = CounterRng.from_seeds(22)
        flow = random_flow(rng, 6, 5, scale=3.0)
        p1 = tmp_path / "a.amfl"
        p2 = tmp_path / "b.amfl"
        write_flow(flow, p1)
        write_flow(read_flow(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_values_survive_as_float32(self, tmp_path):
        flow = FlowField(np.array([[1.25, -0.5]]), np.array([[0.0, 3.0]]))
        p = tmp_path / "f.amfl"
        write_flow(flow, p)
        back = read_flow(p)
        # exactly representable in binary32
        assert np.array_equal(back.h, flow.h)
        assert np.array_equal(back.v, flow.v)

    def test_layout(self, tmp_path):
        flow = FlowField(np.array([[1.0]]), np.array([[2.0]]))
        p = tmp_path / "g.amfl"
        write_flow(flow, p)
        buf = p.read_bytes()
        assert buf[:4] == b"AMFL"
        assert len(buf) == 4 + 8 + 8  # magic, dims, one (h, v) record
        rec = np.frombuffer(buf, dtype="<f4", offset=12)
        assert rec.tolist() == [1.0, 2.0]

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.amfl"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError):
            read_flow(p)

    def test_truncated_payload(self, tmp_path):
        rng = CounterRng.from_seeds(23)
        flow = random_flow(rng, 4, 4)
        p = tmp_path / "t.amfl"
        write_flow(flow, p)
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(FormatError):
            read_flow(p)
