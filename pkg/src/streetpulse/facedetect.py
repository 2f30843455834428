"""HOG + linear classifier face detector.

Windows are 48x48 (the classifier's input size), described by 8x8-pixel
cells, 2x2-cell blocks at a one-cell stride and 9 unsigned orientation bins
centred on 0, 20, ..., 160 degrees. That gives 5 * 5 blocks * 36 = 900
features per window.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imageio import check_gray, clip_box, resize_bilinear

WINDOW = 48
CELL = 8
BLOCK = 2
BINS = 9
BIN_WIDTH = 180.0 / BINS
CELLS = WINDOW // CELL
BLOCKS = CELLS - BLOCK + 1
DESCRIPTOR_LEN = BLOCKS * BLOCKS * BLOCK * BLOCK * BINS
NORM_EPS = 1e-6

DEFAULT_SCALE = 1.2
DEFAULT_STRIDE = 8
DEFAULT_NMS_IOU = 0.3
DEFAULT_THRESHOLD = 0.0

_HFD_MAGIC = b"HFD1"


class DetectorFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    x: int
    y: int
    w: int
    h: int
    score: float = 0.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"detection must have positive size, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class LinearFaceModel:
    weights: np.ndarray
    bias: float
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32).reshape(-1)
        if w.size != DESCRIPTOR_LEN:
            raise ValueError(f"model needs {DESCRIPTOR_LEN} weights, got {w.size}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(np.float32(self.bias)))
        object.__setattr__(self, "threshold", float(np.float32(self.threshold)))

    def scores(self, descriptors: np.ndarray) -> np.ndarray:
        return np.asarray(descriptors, dtype=np.float64) @ self.weights.astype(np.float64) + self.bias

    def to_bytes(self) -> bytes:
        """``b"HFD1"``, u32 length, float32 weights, bias, threshold (little-endian)."""
        return (
            _HFD_MAGIC
            + struct.pack("<I", self.weights.size)
            + self.weights.astype("<f4").tobytes()
            + struct.pack("<ff", self.bias, self.threshold)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "LinearFaceModel":
        data = bytes(data)
        if data[:4] != _HFD_MAGIC:
            raise DetectorFormatError(f"bad magic {data[:4]!r}")
        if len(data) < 8:
            raise DetectorFormatError("truncated header")
        (n,) = struct.unpack("<I", data[4:8])
        if n != DESCRIPTOR_LEN:
            raise DetectorFormatError(f"weight vector length {n}, expected {DESCRIPTOR_LEN}")
        expected = 8 + 4 * n + 8
        if len(data) < expected:
            raise DetectorFormatError(f"truncated payload: {len(data)} of {expected} bytes")
        if len(data) > expected:
            raise DetectorFormatError(f"{len(data) - expected} trailing bytes")
        weights = np.frombuffer(data[8 : 8 + 4 * n], dtype="<f4").astype(np.float32)
        bias, threshold = struct.unpack("<ff", data[8 + 4 * n :])
        return cls(weights, bias, threshold)


# ---------------------------------------------------------------------------
# HOG


def _gradients(win: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # central differences with the index clamped at the borders
    gx = np.empty_like(win)
    gy = np.empty_like(win)
    gx[..., 1:-1] = win[..., 2:] - win[..., :-2]
    gx[..., 0] = win[..., 1] - win[..., 0]
    gx[..., -1] = win[..., -1] - win[..., -2]
    gy[..., 1:-1, :] = win[..., 2:, :] - win[..., :-2, :]
    gy[..., 0, :] = win[..., 1, :] - win[..., 0, :]
    gy[..., -1, :] = win[..., -1, :] - win[..., -2, :]
    return gx, gy


def hog_descriptors(windows: np.ndarray) -> np.ndarray:
    """HOG features for a stack of 48x48 windows, shape ``(n, 900)``."""
    win = np.asarray(windows, dtype=np.float64)
    if win.ndim != 3 or win.shape[1:] != (WINDOW, WINDOW):
        raise ValueError(f"expected windows of shape (n, 48, 48), got {win.shape}")
    n = win.shape[0]
    gx, gy = _gradients(win)
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    ang = np.where(ang >= 180.0, ang - 180.0, ang)
    pos = ang / BIN_WIDTH
    lo = np.floor(pos).astype(np.intp) % BINS
    frac = pos - np.floor(pos)
    hi = (lo + 1) % BINS
    votes = np.zeros((n, WINDOW, WINDOW, BINS))
    for b in range(BINS):
        votes[..., b] = mag * (1 - frac) * (lo == b) + mag * frac * (hi == b)
    cells = votes.reshape(n, CELLS, CELL, CELLS, CELL, BINS).sum(axis=(2, 4))
    out = np.empty((n, BLOCKS, BLOCKS, BLOCK * BLOCK * BINS))
    for by in range(BLOCKS):
        for bx in range(BLOCKS):
            block = cells[:, by : by + BLOCK, bx : bx + BLOCK, :].reshape(n, -1)
            norm = np.sqrt((block * block).sum(axis=1, keepdims=True) + NORM_EPS)
            out[:, by, bx] = block / norm
    return out.reshape(n, DESCRIPTOR_LEN)


def hog_descriptor(window: np.ndarray) -> np.ndarray:
    window = check_gray(window)
    if window.shape != (WINDOW, WINDOW):
        raise ValueError(f"HOG window must be 48x48, got {window.shape[1]}x{window.shape[0]}")
    return hog_descriptors(window[None])[0]


# ---------------------------------------------------------------------------
# multi-scale scanning


def pyramid_sizes(width: int, height: int, scale: float = DEFAULT_SCALE, min_side: int = WINDOW) -> list[tuple[int, int]]:
    if scale <= 1:
        raise ValueError("pyramid scale must exceed 1")
    if min_side < WINDOW:
        raise ValueError(f"min_side must be at least {WINDOW}")
    sizes = []
    k = 0
    while True:
        f = scale**k
        # tolerance guards against e.g. 96 / 1.2 landing just under 80
        w = math.floor(width / f + 1e-9)
        h = math.floor(height / f + 1e-9)
        if w < min_side or h < min_side:
            return sizes
        sizes.append((w, h))
        k += 1


def image_pyramid(img: np.ndarray, scale: float = DEFAULT_SCALE, min_side: int = WINDOW) -> list[tuple[np.ndarray, float]]:
    """Downscaled copies of ``img`` with their scale factors ``scale**k``.

    Level ``k`` is resized directly from the original to
    ``floor(side / scale**k)``; the sequence ends before either side would
    drop below ``min_side``.
    """
    img = check_gray(img)
    h, w = img.shape
    levels = []
    for k, (lw, lh) in enumerate(pyramid_sizes(w, h, scale, min_side)):
        level = img if k == 0 else resize_bilinear(img, lw, lh)
        levels.append((level, scale**k))
    return levels


def window_positions(width: int, height: int, stride: int) -> list[tuple[int, int]]:
    ys = range(0, height - WINDOW + 1, stride)
    xs = range(0, width - WINDOW + 1, stride)
    return [(x, y) for y in ys for x in xs]


def scan(
    img: np.ndarray,
    model: LinearFaceModel,
    stride: int = DEFAULT_STRIDE,
    scale: float = DEFAULT_SCALE,
    threshold: float | None = None,
    chunk: int = 512,
) -> list[Detection]:
    """Slide a 48x48 window over every pyramid level and score it.

    Windows scoring above ``threshold`` (the model's own threshold when not
    given) become detections in original-image coordinates.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    img = check_gray(img)
    threshold = model.threshold if threshold is None else threshold
    height, width = img.shape
    found = []
    for level, factor in image_pyramid(img, scale):
        grid = sliding_window_view(level, (WINDOW, WINDOW))[::stride, ::stride]
        rows, cols = grid.shape[:2]
        flat = grid.reshape(rows * cols, WINDOW, WINDOW)
        scores = np.concatenate([model.scores(hog_descriptors(flat[i : i + chunk])) for i in range(0, len(flat), chunk)])
        for idx in np.flatnonzero(scores > threshold):
            r, c = divmod(int(idx), cols)
            box = clip_box(
                (height, width),
                round(c * stride * factor),
                round(r * stride * factor),
                round(WINDOW * factor),
                round(WINDOW * factor),
            )
            if box is not None:
                found.append(Detection(*box, score=float(scores[idx])))
    return found


def iou(a: Detection, b: Detection) -> float:
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def nms(dets: Sequence[Detection], iou_threshold: float = DEFAULT_NMS_IOU) -> list[Detection]:
    """Greedy non-maximum suppression; output sorted by descending score.

    Equal scores keep their input order.
    """
    if not 0 <= iou_threshold <= 1:
        raise ValueError("iou_threshold must lie in [0, 1]")
    remaining = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    kept = []
    while remaining:
        best = dets[remaining.pop(0)]
        kept.append(best)
        remaining = [i for i in remaining if iou(best, dets[i]) <= iou_threshold]
    return kept


def detect(
    img: np.ndarray,
    model: LinearFaceModel,
    stride: int = DEFAULT_STRIDE,
    scale: float = DEFAULT_SCALE,
    nms_iou: float = DEFAULT_NMS_IOU,
    threshold: float | None = None,
) -> list[Detection]:
    return nms(scan(img, model, stride, scale, threshold), nms_iou)


# ---------------------------------------------------------------------------
# training


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def train_detector(
    positives: Sequence[np.ndarray],
    negatives: Sequence[np.ndarray],
    epochs: int = 50,
    lr: float = 0.1,
    seed: int = 0,
    threshold: float = DEFAULT_THRESHOLD,
) -> LinearFaceModel:
    """Logistic regression on HOG descriptors by per-sample SGD.

    The visiting order is reshuffled every epoch from ``seed``, so the
    result is a deterministic function of the inputs.
    """
    if len(positives) == 0 or len(negatives) == 0:
        raise ValueError("training needs at least one positive and one negative window")
    windows = [check_gray(w) for w in list(positives) + list(negatives)]
    if any(w.shape != (WINDOW, WINDOW) for w in windows):
        raise ValueError("training windows must be 48x48")
    feats = hog_descriptors(np.stack(windows))
    labels = np.r_[np.ones(len(positives)), np.zeros(len(negatives))]
    rng = np.random.default_rng(seed)
    w = np.zeros(DESCRIPTOR_LEN)
    b = 0.0
    for _ in range(epochs):
        for i in rng.permutation(len(labels)):
            err = _sigmoid(float(feats[i] @ w) + b) - labels[i]
            w -= lr * err * feats[i]
            b -= lr * err
    return LinearFaceModel(w.astype(np.float32), b, threshold)


def accuracy(model: LinearFaceModel, positives, negatives) -> float:
    feats = hog_descriptors(np.stack([check_gray(w) for w in list(positives) + list(negatives)]))
    labels = np.r_[np.ones(len(positives), bool), np.zeros(len(negatives), bool)]
    return float(np.mean((model.scores(feats) > model.threshold) == labels))
