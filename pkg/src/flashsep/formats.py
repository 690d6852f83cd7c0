"""File formats: binary PGM/PPM (Netpbm), the LFR1 float container, sidecars.

On-disk conventions:
  * RawFrame: 16-bit binary PGM (P5, maxval 65535, big-endian samples) plus a
    JSON sidecar ``<name>.meta.json`` next to it.
  * LinearImage / FlowField: "LFR1" container -- 4-byte magic ``LFR1``, then
    width, height, channels as little-endian uint32, then float32
    little-endian samples, row-major, channel-interleaved. Flow fields use
    channels=2 (u then v).
  * RgbImage: binary PPM (P6), 8- or 16-bit. Pixel values are floats in [0,1]
    in memory and are quantized with round-to-nearest on write.

All writers produce canonical bytes so that write -> read -> write is
byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .rawcore import CaptureMeta, CFAPattern, Illumination, RawFrame

LFR1_MAGIC = b"LFR1"


# ---------------------------------------------------------------------------
# Netpbm (PGM / PPM)

def _read_netpbm_header(buf: bytes, expected_magic: bytes):
    """Parse a Netpbm header, returning (width, height, maxval, data_offset)."""
    if buf[:2] != expected_magic:
        raise FormatError(
            f"bad magic {buf[:2]!r}, expected {expected_magic!r}", offset=0)
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(buf):
            raise FormatError("truncated header", offset=pos)
        c = buf[pos:pos + 1]
        if c == b"#":  # comment to end of line
            nl = buf.find(b"\n", pos)
            if nl < 0:
                raise FormatError("unterminated comment", offset=pos)
            pos = nl + 1
        elif c.isspace():
            pos += 1
        elif c.isdigit():
            end = pos
            while end < len(buf) and buf[end:end + 1].isdigit():
                end += 1
            fields.append(int(buf[pos:end]))
            pos = end
        else:
            raise FormatError(f"unexpected byte {c!r} in header", offset=pos)
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("missing whitespace before payload", offset=pos)
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise FormatError(f"bad dimensions {width}x{height}", offset=2)
    if not 0 < maxval < 65536:
        raise FormatError(f"bad maxval {maxval}", offset=2)
    return width, height, maxval, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5). Returns uint8 or uint16 (native order)."""
    buf = Path(path).read_bytes()
    w, h, maxval, off = _read_netpbm_header(buf, b"P5")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    payload = buf[off:off + need]
    if len(payload) < need:
        raise FormatError(
            f"truncated payload: need {need} bytes, have {len(payload)}", offset=off)
    data = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return data.astype(np.uint16) if maxval > 255 else data.copy()


def write_pgm(path, data: np.ndarray, maxval: int = 65535) -> None:
    """Write a binary PGM (P5); 16-bit samples are stored big-endian."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise DataError(f"PGM data must be 2-D, got shape {data.shape}")
    h, w = data.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    if maxval > 255:
        payload = data.astype(">u2").tobytes()
    else:
        payload = data.astype("u1").tobytes()
    Path(path).write_bytes(header + payload)


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6) into float32 [0,1] of shape (h, w, 3)."""
    buf = Path(path).read_bytes()
    w, h, maxval, off = _read_netpbm_header(buf, b"P6")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * 3 * dtype.itemsize
    payload = buf[off:off + need]
    if len(payload) < need:
        raise FormatError(
            f"truncated payload: need {need} bytes, have {len(payload)}", offset=off)
    data = np.frombuffer(payload, dtype=dtype).reshape(h, w, 3)
    return (data.astype(np.float32) / maxval).astype(np.float32)


def write_ppm(path, img: np.ndarray, depth: int = 8) -> None:
    """Write float [0,1] RGB as binary PPM (P6) at 8 or 16 bits."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"PPM image must be (h, w, 3), got shape {img.shape}")
    if depth not in (8, 16):
        raise DataError(f"PPM depth must be 8 or 16, got {depth}")
    maxval = 255 if depth == 8 else 65535
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    h, w = img.shape[:2]
    header = f"P6\n{w} {h}\n{maxval}\n".encode("ascii")
    payload = q.astype("u1" if depth == 8 else ">u2").tobytes()
    Path(path).write_bytes(header + payload)


# ---------------------------------------------------------------------------
# LFR1 float container

def write_lfr(path, data: np.ndarray) -> None:
    """Write a float image or flow field to an LFR1 container."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.ndim != 3:
        raise DataError(f"LFR1 data must be 2-D or 3-D, got shape {data.shape}")
    h, w, c = data.shape
    header = LFR1_MAGIC + struct.pack("<III", w, h, c)
    Path(path).write_bytes(header + data.astype("<f4").tobytes())


def read_lfr(path) -> np.ndarray:
    """Read an LFR1 container. Single-channel data comes back 2-D."""
    buf = Path(path).read_bytes()
    if buf[:4] != LFR1_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {LFR1_MAGIC!r}", offset=0)
    if len(buf) < 16:
        raise FormatError("truncated LFR1 header", offset=len(buf))
    w, h, c = struct.unpack("<III", buf[4:16])
    if w == 0 or h == 0 or c == 0:
        raise FormatError(f"bad LFR1 dimensions {w}x{h}x{c}", offset=4)
    need = w * h * c * 4
    if len(buf) - 16 < need:
        raise FormatError(
            f"truncated LFR1 payload: need {need} bytes, have {len(buf) - 16}", offset=16)
    data = np.frombuffer(buf[16:16 + need], dtype="<f4").reshape(h, w, c)
    data = np.ascontiguousarray(data, dtype=np.float32)
    return data[:, :, 0] if c == 1 else data


# ---------------------------------------------------------------------------
# RawFrame with metadata sidecar

def _sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.json")


def write_raw_frame(path, frame: RawFrame) -> None:
    """Write a RawFrame as 16-bit PGM plus ``<name>.meta.json`` sidecar."""
    write_pgm(path, frame.data, maxval=65535)
    meta = frame.meta
    doc = {
        "cfa": frame.cfa.value,
        "black_level": list(meta.black_level),
        "white_level": meta.white_level,
        "exposure_ms": meta.exposure_ms,
        "iso": meta.iso,
        "wb_gains": list(meta.wb_gains),
        "ccm": list(meta.ccm),
        "illumination": meta.illumination.value,
    }
    _sidecar_path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_raw_frame(path) -> RawFrame:
    """Read a RawFrame written by :func:`write_raw_frame`."""
    data = read_pgm(path)
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise DataError(f"missing metadata sidecar {sidecar}")
    doc = json.loads(sidecar.read_text())
    meta = CaptureMeta(
        black_level=tuple(doc["black_level"]),
        white_level=doc["white_level"],
        exposure_ms=doc["exposure_ms"],
        iso=doc.get("iso", 100.0),
        wb_gains=tuple(doc.get("wb_gains", (1.0, 1.0, 1.0))),
        ccm=tuple(doc.get("ccm", (1, 0, 0, 0, 1, 0, 0, 0, 1))),
        illumination=Illumination(doc.get("illumination", "ambient")),
    )
    return RawFrame(data=data, cfa=CFAPattern(doc["cfa"]), meta=meta)


# ---------------------------------------------------------------------------
# Homography JSON

def write_homography(path, h: np.ndarray) -> None:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3):
        raise DataError(f"homography must be 3x3, got {h.shape}")
    Path(path).write_text(json.dumps([float(v) for v in h.ravel()]) + "\n")


def read_homography(path) -> np.ndarray:
    vals = json.loads(Path(path).read_text())
    if not isinstance(vals, list) or len(vals) != 9:
        raise FormatError("homography JSON must be a 9-element array")
    return np.asarray(vals, dtype=np.float64).reshape(3, 3)


def format_specs() -> str:
    """Human-readable description of the on-disk formats (for the CLI)."""
    return __doc__
