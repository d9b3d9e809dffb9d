"""Grayscale image rendering: dB-scale confocal images, linear Strehl maps.

Outputs are binary PGM (P5) and hand-encoded 8-bit grayscale PNG so the
bytes are a pure function of the pixel values.
"""
from __future__ import annotations

import struct
import warnings
import zlib

import numpy as np

__all__ = ["db_gray", "linear_gray", "to_pgm", "to_png", "render_db_image",
           "render_linear_image"]


def db_gray(image: np.ndarray, floor_db: float = -60.0) -> np.ndarray:
    """Map a non-negative intensity image to 8-bit gray on a dB scale.

    pixel = clamp(10 log10(I / max I), floor_db, 0) mapped linearly so the
    maximum is white and the floor black.  An all-zero image renders black
    with a warning.
    """
    image = np.asarray(image, dtype=float)
    if np.any(image < 0):
        raise ValueError("dB rendering expects a non-negative image")
    if not floor_db < 0:
        raise ValueError("floor_db must be negative")
    peak = image.max(initial=0.0)
    if peak == 0.0:
        warnings.warn("all-zero image renders uniformly black")
        return np.zeros(image.shape, dtype=np.uint8)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(image / peak)
    db = np.clip(db, floor_db, 0.0)
    return np.round(255.0 * (db - floor_db) / (-floor_db)).astype(np.uint8)


def linear_gray(image: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Linear [lo, hi] -> [black, white] mapping (Strehl maps)."""
    image = np.asarray(image, dtype=float)
    if hi <= lo:
        raise ValueError("need hi > lo")
    scaled = np.clip((image - lo) / (hi - lo), 0.0, 1.0)
    return np.round(255.0 * scaled).astype(np.uint8)


def to_pgm(gray: np.ndarray) -> bytes:
    gray = np.asarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise ValueError("PGM rendering expects a 2D image")
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes()


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    chunk = tag + payload
    return struct.pack(">I", len(payload)) + chunk + struct.pack(
        ">I", zlib.crc32(chunk) & 0xFFFFFFFF)


def to_png(gray: np.ndarray) -> bytes:
    """Minimal 8-bit grayscale PNG encoder (fixed zlib level, no filters)."""
    gray = np.asarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise ValueError("PNG rendering expects a 2D image")
    h, w = gray.shape
    raw = b"".join(b"\x00" + gray[row].tobytes() for row in range(h))
    header = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n"
            + _png_chunk(b"IHDR", header)
            + _png_chunk(b"IDAT", zlib.compress(raw, 6))
            + _png_chunk(b"IEND", b""))


def render_db_image(image: np.ndarray, floor_db: float = -60.0,
                    fmt: str = "pgm") -> bytes:
    gray = db_gray(image, floor_db)
    return to_pgm(gray) if fmt == "pgm" else to_png(gray)


def render_linear_image(image: np.ndarray, fmt: str = "pgm") -> bytes:
    gray = linear_gray(image)
    return to_pgm(gray) if fmt == "pgm" else to_png(gray)
