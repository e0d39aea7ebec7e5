"""Geometry and image file I/O: OBJ, ascii PLY, PFM, PGM, PPM, greyscale PNG, CSV.

All text output funnels floats through :func:`fmt` (9 significant digits,
negative zero normalized) so that every writer is byte-deterministic for
equal inputs.
"""

from __future__ import annotations

import math
import struct
import zlib
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError

# ---------------------------------------------------------------------------
# canonical number formatting


def fmt(x: float) -> str:
    """Canonical text form of a float: 9 significant digits, no negative zero."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot format non-finite value {x!r}")
    if x == 0.0:
        return "0"
    return f"{x:.9g}"


def _fmt_row(values: Iterable[float]) -> str:
    return " ".join(fmt(v) for v in values)


# ---------------------------------------------------------------------------
# Wavefront OBJ (triangles, 1-based indices)


def write_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces)
    lines = [f"v {_fmt_row(v)}" for v in vertices]
    lines += [f"f {int(a) + 1} {int(b) + 1} {int(c) + 1}" for a, b, c in faces]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    """Read v/f records; polygons are fan-triangulated. Returns (vertices, faces)."""
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad vertex: {exc}") from exc
            elif parts[0] == "f":
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad face: {exc}") from exc
                if len(idx) < 3:
                    raise ParseError(f"{path}:{lineno}: face needs >= 3 vertices")
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(f) and (f.min() < 0 or f.max() >= len(v)):
        raise ParseError(f"{path}: face index out of range")
    return v, f


# ---------------------------------------------------------------------------
# ascii PLY point clouds

_PLY_TYPES = {"float": float, "uchar": int, "int": int}


def write_ply_points(path, columns: Sequence[tuple[str, str, np.ndarray]]) -> None:
    """Write an ascii PLY vertex cloud.

    ``columns`` is a sequence of (property_name, ply_type, values); all value
    arrays must share the same length.
    """
    if not columns:
        raise ValueError("need at least one property column")
    n = len(columns[0][2])
    header = ["ply", "format ascii 1.0", f"element vertex {n}"]
    for name, ply_type, values in columns:
        if ply_type not in _PLY_TYPES:
            raise ValueError(f"unsupported PLY type {ply_type!r}")
        if len(values) != n:
            raise ValueError("property columns differ in length")
        header.append(f"property {ply_type} {name}")
    header.append("end_header")
    rows = []
    for i in range(n):
        cells = []
        for _, ply_type, values in columns:
            cells.append(str(int(values[i])) if ply_type != "float" else fmt(values[i]))
        rows.append(" ".join(cells))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(header + rows))
        fh.write("\n")


def read_ply_points(path) -> dict[str, np.ndarray]:
    """Read an ascii PLY vertex element into {property_name: array}."""
    with open(path, "r", encoding="ascii") as fh:
        if fh.readline().strip() != "ply":
            raise ParseError(f"{path}: not a PLY file")
        if fh.readline().strip() != "format ascii 1.0":
            raise ParseError(f"{path}: only ascii 1.0 PLY is supported")
        props: list[tuple[str, str]] = []
        count = None
        for raw in fh:
            parts = raw.split()
            if not parts or parts[0] == "comment":
                continue
            if parts[0] == "element":
                if parts[1] != "vertex" or count is not None:
                    raise ParseError(f"{path}: only a single vertex element is supported")
                count = int(parts[2])
            elif parts[0] == "property":
                if len(parts) != 3 or parts[1] not in _PLY_TYPES:
                    raise ParseError(f"{path}: unsupported property {raw.strip()!r}")
                props.append((parts[2], parts[1]))
            elif parts[0] == "end_header":
                break
            else:
                raise ParseError(f"{path}: unexpected header line {raw.strip()!r}")
        else:
            raise ParseError(f"{path}: truncated header")
        if count is None or not props:
            raise ParseError(f"{path}: header lacks vertex element or properties")
        data = {name: [] for name, _ in props}
        for i in range(count):
            line = fh.readline()
            cells = line.split()
            if len(cells) != len(props):
                raise ParseError(f"{path}: vertex row {i} malformed")
            for (name, ply_type), cell in zip(props, cells):
                try:
                    data[name].append(_PLY_TYPES[ply_type](cell))
                except ValueError as exc:
                    raise ParseError(f"{path}: vertex row {i}: {exc}") from exc
    out = {}
    for name, ply_type in props:
        dtype = np.float64 if ply_type == "float" else np.int64
        out[name] = np.asarray(data[name], dtype=dtype)
    return out


# ---------------------------------------------------------------------------
# PFM depth maps (greyscale, little endian, bottom-to-top rows)


def write_pfm(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2:
        raise ValueError("PFM writer expects a 2-D greyscale image")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(img).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ParseError(f"{path}: not a greyscale PFM")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise ParseError(f"{path}: bad dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        endian = "<" if scale < 0 else ">"
        payload = fh.read(w * h * 4)
        if len(payload) != w * h * 4:
            raise ParseError(f"{path}: truncated pixel data")
    img = np.frombuffer(payload, dtype=f"{endian}f4").reshape(h, w)
    return np.flipud(img).astype(np.float32)


# ---------------------------------------------------------------------------
# PGM (P5 binary / P2 ascii); 16-bit depth export, 8-bit mask import


def write_pgm16_depth(path, depth: np.ndarray) -> None:
    """Encode a depth image as 16-bit PGM.

    0 is background (+inf input); finite depths map linearly with the nearest
    depth at 65535 and the farthest at 1, so brighter means closer.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError("PGM writer expects a 2-D depth image")
    out = np.zeros(depth.shape, dtype=np.uint16)
    finite = np.isfinite(depth)
    if finite.any():
        dmin = float(depth[finite].min())
        dmax = float(depth[finite].max())
        if dmax > dmin:
            scaled = (dmax - depth[finite]) / (dmax - dmin)
            out[finite] = (1.0 + np.rint(scaled * 65534.0)).astype(np.uint16)
        else:
            out[finite] = 65535
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(out.astype(">u2").tobytes())


def _read_pnm_tokens(data: bytes, count: int, offset: int) -> tuple[list[int], int]:
    tokens: list[int] = []
    i = offset
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ParseError("truncated PNM header")
        try:
            tokens.append(int(data[i:j]))
        except ValueError as exc:
            raise ParseError(f"bad PNM header token {data[i:j]!r}") from exc
        i = j
    return tokens, i


def read_pgm(path) -> np.ndarray:
    """Read an 8- or 16-bit PGM (P2 or P5) as a uint array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"{path}: not a PGM file")
    (w, h, maxval), i = _read_pnm_tokens(data, 3, 2)
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise ParseError(f"{path}: bad PGM dimensions")
    if magic == b"P2":
        values, _ = _read_pnm_tokens(data, w * h, i)
        arr = np.asarray(values, dtype=np.uint16).reshape(h, w)
    else:
        i += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else np.uint8
        itemsize = 2 if maxval > 255 else 1
        payload = data[i : i + w * h * itemsize]
        if len(payload) != w * h * itemsize:
            raise ParseError(f"{path}: truncated PGM pixel data")
        arr = np.frombuffer(payload, dtype=dtype).reshape(h, w).astype(np.uint16)
    if arr.max(initial=0) > maxval:
        raise ParseError(f"{path}: sample exceeds maxval")
    return arr if maxval > 255 else arr.astype(np.uint8)


def write_pgm8(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


# ---------------------------------------------------------------------------
# PPM (binary P6) color export


def write_ppm(path, color: np.ndarray) -> None:
    """Write an (h, w, 3) float image in [0, 1] as binary P6."""
    img = np.asarray(color, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM writer expects an (h, w, 3) image")
    q = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w, _ = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(q.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P6":
        raise ParseError(f"{path}: not a binary PPM")
    (w, h, maxval), i = _read_pnm_tokens(data, 3, 2)
    if maxval != 255:
        raise ParseError(f"{path}: only maxval 255 supported")
    i += 1
    payload = data[i : i + w * h * 3]
    if len(payload) != w * h * 3:
        raise ParseError(f"{path}: truncated PPM pixel data")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)


# ---------------------------------------------------------------------------
# minimal greyscale PNG (8-bit, color type 0, non-interlaced)


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def write_png_gray(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("PNG writer expects a 2-D greyscale image")
    h, w = img.shape
    raw = b"".join(b"\x00" + img[r].tobytes() for r in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(b"\x89PNG\r\n\x1a\n")
        fh.write(_png_chunk(b"IHDR", ihdr))
        fh.write(_png_chunk(b"IDAT", zlib.compress(raw, 9)))
        fh.write(_png_chunk(b"IEND", b""))


def _png_unfilter(raw: np.ndarray, w: int, h: int) -> np.ndarray:
    stride = w + 1
    out = np.zeros((h, w), dtype=np.uint8)
    prev = np.zeros(w, dtype=np.int32)
    for r in range(h):
        ftype = int(raw[r * stride])
        line = raw[r * stride + 1 : (r + 1) * stride].astype(np.int32)
        cur = np.zeros(w, dtype=np.int32)
        if ftype == 0:
            cur = line
        elif ftype == 2:  # Up
            cur = (line + prev) & 0xFF
        elif ftype in (1, 3, 4):  # Sub / Average / Paeth need a running scan
            left = 0
            for c in range(w):
                up = int(prev[c])
                ul = int(prev[c - 1]) if c > 0 else 0
                if ftype == 1:
                    val = line[c] + left
                elif ftype == 3:
                    val = line[c] + (left + up) // 2
                else:
                    p = left + up - ul
                    pa, pb, pc = abs(p - left), abs(p - up), abs(p - ul)
                    if pa <= pb and pa <= pc:
                        pred = left
                    elif pb <= pc:
                        pred = up
                    else:
                        pred = ul
                    val = line[c] + pred
                left = val & 0xFF
                cur[c] = left
        else:
            raise ParseError(f"unsupported PNG filter type {ftype}")
        out[r] = cur & 0xFF
        prev = cur & 0xFF
    return out


def read_png_gray(path) -> np.ndarray:
    """Read an 8-bit greyscale non-interlaced PNG."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ParseError(f"{path}: not a PNG file")
    i = 8
    w = h = None
    idat = b""
    while i + 8 <= len(data):
        (length,) = struct.unpack(">I", data[i : i + 4])
        tag = data[i + 4 : i + 8]
        payload = data[i + 8 : i + 8 + length]
        if len(payload) != length:
            raise ParseError(f"{path}: truncated chunk {tag!r}")
        if tag == b"IHDR":
            w, h, depth, ctype, _, _, interlace = struct.unpack(">IIBBBBB", payload)
            if depth != 8 or ctype != 0 or interlace != 0:
                raise ParseError(
                    f"{path}: only 8-bit greyscale non-interlaced PNG is supported"
                )
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
        i += 12 + length
    if w is None or not idat:
        raise ParseError(f"{path}: missing IHDR or IDAT")
    try:
        raw = np.frombuffer(zlib.decompress(idat), dtype=np.uint8)
    except zlib.error as exc:
        raise ParseError(f"{path}: corrupt PNG stream: {exc}") from exc
    if len(raw) != h * (w + 1):
        raise ParseError(f"{path}: unexpected PNG payload size")
    return _png_unfilter(raw, w, h)


def read_mask(path) -> np.ndarray:
    """Load an 8-bit greyscale mask (PNG or PGM); > 127 is foreground."""
    p = str(path)
    with open(p, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x89P":
        img = read_png_gray(p)
    elif magic in (b"P2", b"P5"):
        img = read_pgm(p)
    else:
        raise ParseError(f"{p}: not a PNG or PGM mask")
    return np.asarray(img) > 127


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = [fmt(v) if isinstance(v, float) else str(v) for v in row]
        lines.append(",".join(cells))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
