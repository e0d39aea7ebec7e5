import struct
import zlib

import numpy as np
import pytest

from bonsaigen import ParseError
from bonsaigen.formats import (
    fmt,
    read_mask,
    read_obj,
    read_pfm,
    read_pgm,
    read_ply_points,
    read_png_gray,
    read_ppm,
    write_csv,
    write_obj,
    write_pfm,
    write_pgm8,
    write_pgm16_depth,
    write_ply_points,
    write_png_gray,
    write_ppm,
)


class TestFmt:
    def test_basic_forms(self):
        assert fmt(0.05) == "0.05"
        assert fmt(1.0) == "1"
        assert fmt(-0.0) == "0"
        assert fmt(1e20) == "1e+20"
        assert fmt(1 / 3) == "0.333333333"

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            fmt(float("inf"))

    def test_parse_format_fixed_point(self):
        rng = np.random.default_rng(0)
        values = np.concatenate(
            [rng.uniform(-10, 10, 20_000), rng.normal(0, 1e-6, 5_000), rng.normal(0, 1e6, 5_000)]
        )
        for x in values:
            once = fmt(float(x))
            again = fmt(float(once))
            assert once == again


class TestObj:
    def test_round_trip(self, tmp_path):
        v = np.array([[0.0, 0.0, 0.0], [1.5, 0.25, -3.0], [0.1, 2.0, 0.7]])
        f = np.array([[0, 1, 2]])
        write_obj(tmp_path / "a.obj", v, f)
        rv, rf = read_obj(tmp_path / "a.obj")
        assert np.abs(rv - v).max() < 1e-8
        assert np.array_equal(rf, f)

    def test_quad_triangulation_and_slashes(self, tmp_path):
        (tmp_path / "q.obj").write_text(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n"
        )
        v, f = read_obj(tmp_path / "q.obj")
        assert len(v) == 4 and len(f) == 2
        assert f.tolist() == [[0, 1, 2], [0, 2, 3]]

    def test_bad_face_index(self, tmp_path):
        (tmp_path / "b.obj").write_text("v 0 0 0\nf 1 2 3\n")
        with pytest.raises(ParseError):
            read_obj(tmp_path / "b.obj")


class TestPly:
    def test_round_trip_mixed_types(self, tmp_path):
        path = tmp_path / "p.ply"
        write_ply_points(
            path,
            [
                ("x", "float", np.array([0.0, 1.25])),
                ("label", "uchar", np.array([0, 1])),
                ("count", "int", np.array([-3, 9])),
            ],
        )
        data = read_ply_points(path)
        assert np.array_equal(data["x"], [0.0, 1.25])
        assert np.array_equal(data["label"], [0, 1])
        assert np.array_equal(data["count"], [-3, 9])

    def test_empty_cloud(self, tmp_path):
        path = tmp_path / "e.ply"
        write_ply_points(path, [("x", "float", np.empty(0))])
        assert len(read_ply_points(path)["x"]) == 0

    def test_malformed_rows(self, tmp_path):
        (tmp_path / "m.ply").write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n"
        )
        with pytest.raises(ParseError):
            read_ply_points(tmp_path / "m.ply")


class TestPfm:
    def test_round_trip_with_infinity(self, tmp_path):
        img = np.array([[1.5, np.inf], [0.25, 3.0]], dtype=np.float32)
        write_pfm(tmp_path / "d.pfm", img)
        back = read_pfm(tmp_path / "d.pfm")
        assert back.shape == (2, 2)
        assert back[0, 0] == np.float32(1.5)
        assert np.isinf(back[0, 1])
        assert back[1, 0] == np.float32(0.25)

    def test_header_layout(self, tmp_path):
        write_pfm(tmp_path / "h.pfm", np.zeros((3, 5), dtype=np.float32))
        raw = (tmp_path / "h.pfm").read_bytes()
        assert raw.startswith(b"Pf\n5 3\n-1.0\n")
        assert len(raw) == len(b"Pf\n5 3\n-1.0\n") + 3 * 5 * 4


class TestPgm:
    def test_depth16_mapping(self, tmp_path):
        depth = np.array([[np.inf, 1.0], [2.0, 3.0]])
        write_pgm16_depth(tmp_path / "d.pgm", depth)
        img = read_pgm(tmp_path / "d.pgm")
        assert img.dtype == np.uint16
        assert img[0, 0] == 0  # background
        assert img[0, 1] == 65535  # nearest
        assert img[1, 1] == 1  # farthest
        assert img[1, 0] == 1 + round(0.5 * 65534)

    def test_all_background(self, tmp_path):
        write_pgm16_depth(tmp_path / "b.pgm", np.full((2, 2), np.inf))
        assert (read_pgm(tmp_path / "b.pgm") == 0).all()

    def test_uniform_depth(self, tmp_path):
        write_pgm16_depth(tmp_path / "u.pgm", np.full((2, 2), 3.0))
        assert (read_pgm(tmp_path / "u.pgm") == 65535).all()

    def test_pgm8_round_trip_and_ascii_variant(self, tmp_path):
        img = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
        write_pgm8(tmp_path / "g.pgm", img)
        assert np.array_equal(read_pgm(tmp_path / "g.pgm"), img)
        (tmp_path / "a.pgm").write_text("P2\n# comment\n2 2\n255\n0 128\n255 7\n")
        assert read_pgm(tmp_path / "a.pgm").tolist() == [[0, 128], [255, 7]]


class TestPpm:
    def test_round_trip_quantized(self, tmp_path):
        img = np.array([[[0.0, 0.5, 1.0], [1.2, -0.1, 0.25]]])
        write_ppm(tmp_path / "c.ppm", img)
        back = read_ppm(tmp_path / "c.ppm")
        assert back.shape == (1, 2, 3)
        assert back[0, 0].tolist() == [0, 128, 255]
        assert back[0, 1].tolist() == [255, 0, 64]


class TestPng:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, size=(17, 23), dtype=np.uint8)
        write_png_gray(tmp_path / "g.png", img)
        assert np.array_equal(read_png_gray(tmp_path / "g.png"), img)

    @pytest.mark.parametrize("ftype", [0, 1, 2, 3, 4])
    def test_all_filter_types(self, tmp_path, ftype):
        # hand-build a PNG whose rows use one specific filter type
        rng = np.random.default_rng(ftype)
        img = rng.integers(0, 256, size=(6, 5), dtype=np.uint8)
        h, w = img.shape
        rows = []
        prev = np.zeros(w, dtype=np.int32)
        for r in range(h):
            cur = img[r].astype(np.int32)
            if ftype == 0:
                enc = cur
            elif ftype == 1:
                enc = cur - np.concatenate([[0], cur[:-1]])
            elif ftype == 2:
                enc = cur - prev
            elif ftype == 3:
                left = np.concatenate([[0], cur[:-1]])
                enc = cur - (left + prev) // 2
            else:
                left = np.concatenate([[0], cur[:-1]])
                ul = np.concatenate([[0], prev[:-1]])
                pred = np.zeros(w, dtype=np.int32)
                for c in range(w):
                    p = left[c] + prev[c] - ul[c]
                    pa, pb, pc = abs(p - left[c]), abs(p - prev[c]), abs(p - ul[c])
                    pred[c] = left[c] if pa <= pb and pa <= pc else (prev[c] if pb <= pc else ul[c])
                enc = cur - pred
            rows.append(bytes([ftype]) + bytes((enc & 0xFF).astype(np.uint8)))
            prev = cur
        payload = zlib.compress(b"".join(rows))

        def chunk(tag, data):
            return (
                struct.pack(">I", len(data)) + tag + data
                + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
            )

        blob = (
            b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0))
            + chunk(b"IDAT", payload)
            + chunk(b"IEND", b"")
        )
        (tmp_path / "f.png").write_bytes(blob)
        assert np.array_equal(read_png_gray(tmp_path / "f.png"), img)

    def test_rejects_non_grayscale(self, tmp_path):
        blob = b"\x89PNG\r\n\x1a\n" + struct.pack(">I", 13) + b"IHDR" + struct.pack(
            ">IIBBBBB", 2, 2, 8, 2, 0, 0, 0
        )
        blob += struct.pack(">I", zlib.crc32(blob[-17:]) & 0xFFFFFFFF)
        (tmp_path / "rgb.png").write_bytes(blob)
        with pytest.raises(ParseError):
            read_png_gray(tmp_path / "rgb.png")

    def test_corrupt_stream(self, tmp_path):
        write_png_gray(tmp_path / "ok.png", np.zeros((4, 4), dtype=np.uint8))
        raw = bytearray((tmp_path / "ok.png").read_bytes())
        raw[40] ^= 0xFF
        (tmp_path / "bad.png").write_bytes(bytes(raw))
        with pytest.raises(ParseError):
            read_png_gray(tmp_path / "bad.png")


class TestMask:
    def test_png_and_pgm_threshold(self, tmp_path):
        img = np.array([[0, 127], [128, 255]], dtype=np.uint8)
        write_png_gray(tmp_path / "m.png", img)
        write_pgm8(tmp_path / "m.pgm", img)
        expected = [[False, False], [True, True]]
        assert read_mask(tmp_path / "m.png").tolist() == expected
        assert read_mask(tmp_path / "m.pgm").tolist() == expected

    def test_rejects_other_formats(self, tmp_path):
        (tmp_path / "x.png").write_bytes(b"not an image")
        with pytest.raises(ParseError):
            read_mask(tmp_path / "x.png")


def test_write_csv(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b"], [(1, 0.5), (2, 1.0 / 3.0)])
    text = (tmp_path / "t.csv").read_text()
    assert text == "a,b\n1,0.5\n2,0.333333333\n"
