"""Binary PNM I/O and the preprocessing applied to face crops.

Images are plain numpy arrays: a gray image is a ``(height, width)`` uint8
array and an RGB image is ``(height, width, 3)`` uint8.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "PnmError",
    "load_pnm",
    "save_pgm",
    "save_ppm",
    "to_grayscale",
    "resize_bilinear",
    "crop",
    "clip_box",
]

_MAX_HEADER = 1024
_WHITESPACE = b" \t\r\n\v\f"


class PnmError(ValueError):
    """Raised when a PNM byte stream cannot be decoded."""


def _round_half_up(values: np.ndarray) -> np.ndarray:
    # inputs are nonnegative, so floor(v + 0.5) is round-half-away-from-zero
    return np.floor(values + 0.5)


def _header_tokens(data: bytes) -> tuple[list[bytes], int]:
    """Read magic, width, height and maxval; return them and the payload offset."""
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        if pos >= n:
            raise PnmError("truncated header")
        if pos > _MAX_HEADER:
            raise PnmError("header overflow")
        ch = data[pos : pos + 1]
        if ch in _WHITESPACE:
            pos += 1
        elif ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            start = pos
            while pos < n and data[pos : pos + 1] not in _WHITESPACE and data[pos : pos + 1] != b"#":
                pos += 1
                if pos - start > 32:
                    raise PnmError("header overflow")
            tokens.append(data[start:pos])
            if len(tokens) == 1 and tokens[0] not in (b"P5", b"P6"):
                raise PnmError(f"bad magic {tokens[0][:8]!r}")
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or data[pos : pos + 1] not in _WHITESPACE:
        raise PnmError("truncated header")
    return tokens, pos + 1


def load_pnm(data: bytes) -> np.ndarray:
    """Decode a binary PGM (P5) or PPM (P6) file with maxval 255.

    Returns a ``(h, w)`` array for P5 and ``(h, w, 3)`` for P6.
    """
    data = bytes(data)
    if data[:2] not in (b"P5", b"P6"):
        raise PnmError(f"bad magic {data[:2]!r}")
    tokens, offset = _header_tokens(data)
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PnmError("malformed header field") from None
    if width < 1 or height < 1:
        raise PnmError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise PnmError(f"unsupported maxval {maxval}")
    channels = 1 if magic == b"P5" else 3
    size = width * height * channels
    payload = data[offset : offset + size]
    if len(payload) < size:
        raise PnmError(f"truncated payload: expected {size} bytes, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).copy()
    if channels == 1:
        return pixels.reshape(height, width)
    return pixels.reshape(height, width, 3)


def save_pgm(img: np.ndarray) -> bytes:
    img = check_gray(img)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def save_ppm(img: np.ndarray) -> bytes:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB array, got shape {img.shape}")
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def check_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D gray image, got shape {img.shape}")
    if img.dtype != np.uint8:
        if np.any(img < 0) or np.any(img > 255):
            raise ValueError("gray pixel values must lie in [0, 255]")
        img = img.astype(np.uint8)
    return np.ascontiguousarray(img)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """BT.601 luma, rounded half up and clamped to [0, 255]."""
    rgb = np.asarray(img, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB array, got shape {rgb.shape}")
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(_round_half_up(luma), 0, 255).astype(np.uint8)


def _source_coords(dst_len: int, src_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if dst_len == 1 or src_len == 1:
        pos = np.zeros(dst_len)
    else:
        pos = np.arange(dst_len, dtype=np.float64) * (src_len - 1) / (dst_len - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, src_len - 1)
    return lo, hi, pos - lo


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with the align-corners convention.

    Output pixel ``d`` samples source position ``d * (src - 1) / (dst - 1)``
    along each axis; a length-1 axis samples index 0.
    """
    img = check_gray(img)
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    src = img.astype(np.float64)
    y0, y1, ty = _source_coords(out_h, h)
    x0, x1, tx = _source_coords(out_w, w)
    ty = ty[:, None]
    tx = tx[None, :]
    top = src[y0][:, x0] * (1 - tx) + src[y0][:, x1] * tx
    bottom = src[y1][:, x0] * (1 - tx) + src[y1][:, x1] * tx
    out = top * (1 - ty) + bottom * ty
    return np.clip(_round_half_up(out), 0, 255).astype(np.uint8)


def clip_box(shape: tuple[int, int], x: int, y: int, w: int, h: int) -> tuple[int, int, int, int] | None:
    """Intersect an ``(x, y, w, h)`` box with an image of ``shape``; None if empty."""
    height, width = shape[:2]
    x0, y0 = max(int(x), 0), max(int(y), 0)
    x1, y1 = min(int(x) + int(w), width), min(int(y) + int(h), height)
    if x1 <= x0 or y1 <= y0:
        return None
    return x0, y0, x1 - x0, y1 - y0


def crop(img: np.ndarray, box) -> np.ndarray:
    """Cut out the part of ``box`` that lies inside the image.

    ``box`` is anything with ``x, y, w, h`` attributes (e.g. a Detection) or
    an ``(x, y, w, h)`` tuple.
    """
    img = check_gray(img)
    if hasattr(box, "x"):
        x, y, w, h = box.x, box.y, box.w, box.h
    else:
        x, y, w, h = box
    clipped = clip_box(img.shape, x, y, w, h)
    if clipped is None:
        raise ValueError(f"box {(x, y, w, h)} lies outside the {img.shape[1]}x{img.shape[0]} image")
    cx, cy, cw, ch = clipped
    return img[cy : cy + ch, cx : cx + cw].copy()
