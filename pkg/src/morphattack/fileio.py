"""Binary file formats for images and flow fields.

Images travel as binary PGM (P5, maxval 255); 8-bit values map to
intensities by v/255 on load and round(v*255) on save.

Flow fields use the AMFL format, little-endian throughout:

    magic  b"AMFL"
    u32    width
    u32    height
    width*height records of (float32 h, float32 v), row-major

File -> memory -> file round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import FlowField, Image
from .errors import FormatError

FLOW_MAGIC = b"AMFL"


def write_pgm(image: Image, path) -> None:
    data = np.rint(image.pixels * 255.0).astype(np.uint8)
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def _read_pgm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comment lines between header tokens.
    while pos < len(buf):
        ch = buf[pos:pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            while pos < len(buf) and buf[pos:pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and buf[pos:pos + 1] not in b" \t\r\n":
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header")
    return buf[start:pos], pos


def read_pgm(path) -> Image:
    buf = Path(path).read_bytes()
    magic, pos = _read_pgm_token(buf, 0)
    if magic != b"P5":
        raise FormatError(f"not a binary PGM (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _read_pgm_token(buf, pos)
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = buf[pos:pos + width * height]
    if len(raster) != width * height:
        raise FormatError("truncated PGM raster")
    px = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    return Image(px.reshape(height, width))


def write_flow(flow: FlowField, path) -> None:
    interleaved = np.empty((flow.height, flow.width, 2), dtype="<f4")
    interleaved[:, :, 0] = flow.h
    interleaved[:, :, 1] = flow.v
    header = FLOW_MAGIC + struct.pack("<II", flow.width, flow.height)
    Path(path).write_bytes(header + interleaved.tobytes())


def read_flow(path) -> FlowField:
    buf = Path(path).read_bytes()
    if buf[:4] != FLOW_MAGIC:
        raise FormatError(f"bad flow magic {buf[:4]!r}")
    if len(buf) < 12:
        raise FormatError("truncated flow header")
    width, height = struct.unpack("<II", buf[4:12])
    expected = 12 + width * height * 8
    if len(buf) != expected:
        raise FormatError(
            f"flow payload is {len(buf)} bytes, expected {expected}")
    rec = np.frombuffer(buf, dtype="<f4", offset=12).reshape(height, width, 2)
    return FlowField(rec[:, :, 0].astype(np.float64),
                     rec[:, :, 1].astype(np.float64))
