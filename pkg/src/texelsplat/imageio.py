"""Binary PPM (P6) output; sRGB encoding happens only here."""

from __future__ import annotations

import os

import numpy as np


def linear_to_srgb8(rgb) -> np.ndarray:
    c = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    enc = np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(c, 1.0 / 2.4) - 0.055)
    return np.floor(enc * 255.0 + 0.5).astype(np.uint8)


def write_ppm(rgb8: np.ndarray, path) -> None:
    """Write an ``(H, W, 3)`` uint8 array as binary PPM, rows top to bottom."""
    arr = np.ascontiguousarray(rgb8, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    h, w, _ = arr.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(arr.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write image {os.fspath(path)!r}: {exc.strerror or exc}") from exc


def write_image(framebuffer, path) -> None:
    """sRGB-encode a framebuffer's linear color and write it as PPM."""
    write_ppm(linear_to_srgb8(framebuffer.color), path)


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise ValueError(f"{os.fspath(path)!r} is not an 8-bit binary PPM")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos + 1)
    return pixels.reshape(h, w, 3)
