"""Minimal 16-bit PNG codec (stdlib only).

Supports exactly what the envelope images need: 16-bit RGB (color type 2)
and 16-bit grayscale (color type 0), non-interlaced, with tEXt metadata
chunks. Samples are big-endian on the wire per the PNG spec. The encoder
always writes filter type 0; the decoder reconstructs all five standard
filter types so externally produced files remain readable.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import FormatError

SIGNATURE = b"\x89PNG\r\n\x1a\n"

_COLOR_GRAY = 0
_COLOR_RGB = 2
_CHANNELS = {_COLOR_GRAY: 1, _COLOR_RGB: 3}


def _chunk(tag: bytes, data: bytes) -> bytes:
    body = tag + data
    return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)


def encode(channels: np.ndarray, text: dict[str, str] | None = None) -> bytes:
    """Encode a (H, W, C) uint16 array (C = 1 or 3) as a PNG byte string."""
    if channels.ndim != 3 or channels.shape[2] not in (1, 3):
        raise FormatError(f"expected (H, W, 1|3) array, got shape {channels.shape}")
    if channels.dtype != np.uint16:
        raise FormatError(f"expected uint16 samples, got {channels.dtype}")
    h, w, nch = channels.shape
    color = _COLOR_GRAY if nch == 1 else _COLOR_RGB

    ihdr = struct.pack(">IIBBBBB", w, h, 16, color, 0, 0, 0)
    # Filter byte 0 per scanline, then big-endian u16 samples.
    rowdata = channels.astype(">u2").tobytes()
    bytes_per_row = w * nch * 2
    raw = b"".join(
        b"\x00" + rowdata[r * bytes_per_row : (r + 1) * bytes_per_row] for r in range(h)
    )

    out = [SIGNATURE, _chunk(b"IHDR", ihdr)]
    for key, value in (text or {}).items():
        out.append(_chunk(b"tEXt", key.encode("latin-1") + b"\x00" + value.encode("latin-1")))
    out.append(_chunk(b"IDAT", zlib.compress(raw, 9)))
    out.append(_chunk(b"IEND", b""))
    return b"".join(out)


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, h: int, w: int, nch: int) -> bytes:
    bpp = nch * 2
    stride = w * bpp
    if len(raw) != h * (stride + 1):
        raise FormatError(f"decompressed size {len(raw)} != expected {h * (stride + 1)}")
    prev = bytearray(stride)
    out = bytearray()
    for r in range(h):
        ftype = raw[r * (stride + 1)]
        line = bytearray(raw[r * (stride + 1) + 1 : (r + 1) * (stride + 1)])
        if ftype == 0:
            pass
        elif ftype == 1:  # Sub
            for i in range(bpp, stride):
                line[i] = (line[i] + line[i - bpp]) & 0xFF
        elif ftype == 2:  # Up
            for i in range(stride):
                line[i] = (line[i] + prev[i]) & 0xFF
        elif ftype == 3:  # Average
            for i in range(stride):
                left = line[i - bpp] if i >= bpp else 0
                line[i] = (line[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:  # Paeth
            for i in range(stride):
                left = line[i - bpp] if i >= bpp else 0
                ul = prev[i - bpp] if i >= bpp else 0
                line[i] = (line[i] + _paeth(left, prev[i], ul)) & 0xFF
        else:
            raise FormatError(f"unknown filter type {ftype} in row {r}")
        out.extend(line)
        prev = line
    return bytes(out)


def decode(data: bytes) -> tuple[np.ndarray, dict[str, str]]:
    """Decode PNG bytes to ((H, W, C) uint16 array, text metadata)."""
    if len(data) < len(SIGNATURE) or data[: len(SIGNATURE)] != SIGNATURE:
        raise FormatError("not a PNG file (bad signature)")
    pos = len(SIGNATURE)
    ihdr = None
    idat = bytearray()
    text: dict[str, str] = {}
    seen_end = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise FormatError(f"truncated chunk header at offset {pos}")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        body_end = pos + 8 + length
        if body_end + 4 > len(data):
            raise FormatError(f"truncated chunk {tag!r} at offset {pos}")
        body = data[pos + 8 : body_end]
        (crc,) = struct.unpack(">I", data[body_end : body_end + 4])
        if crc != (zlib.crc32(tag + body) & 0xFFFFFFFF):
            raise FormatError(f"CRC mismatch in chunk {tag!r} at offset {pos}")
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", body)
        elif tag == b"tEXt":
            key, _, value = body.partition(b"\x00")
            text[key.decode("latin-1")] = value.decode("latin-1")
        elif tag == b"IDAT":
            idat.extend(body)
        elif tag == b"IEND":
            seen_end = True
            break
        pos = body_end + 4
    if ihdr is None:
        raise FormatError("missing IHDR chunk")
    if not seen_end:
        raise FormatError("missing IEND chunk")
    w, h, depth, color, comp, filt, interlace = ihdr
    if depth != 16:
        raise FormatError(f"unsupported bit depth {depth} (need 16)")
    if color not in _CHANNELS:
        raise FormatError(f"unsupported color type {color}")
    if comp != 0 or filt != 0 or interlace != 0:
        raise FormatError("unsupported compression/filter/interlace method")
    nch = _CHANNELS[color]
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise FormatError(f"corrupt IDAT stream: {exc}") from exc
    pixels = _unfilter(raw, h, w, nch)
    arr = np.frombuffer(pixels, dtype=">u2").reshape(h, w, nch).astype(np.uint16)
    return arr, text
