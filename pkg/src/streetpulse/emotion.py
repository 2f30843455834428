"""Seven-class facial emotion classifier on 48x48 gray faces."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensorcore as tc
from .imageio import check_gray

log = logging.getLogger(__name__)

# canonical order; every distribution and confusion matrix is indexed by it
EMOTIONS = ("Anger", "Sad", "Neutral", "Disgust", "Surprise", "Fear", "Happy")
FER_CODES = {0: "Anger", 1: "Disgust", 2: "Fear", 3: "Happy", 4: "Sad", 5: "Surprise", 6: "Neutral"}
SPLITS = ("Training", "PublicTest", "PrivateTest")
FACE_SIZE = 48

DEFAULT_LR = 0.01
DEFAULT_MOMENTUM = 0.9
DEFAULT_BATCH = 32
DEFAULT_EPOCHS = 30
DEFAULT_SEED = 42


class FerFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FerExample:
    label: str
    image: np.ndarray
    split: str = "Training"

    def __post_init__(self):
        if self.label not in EMOTIONS:
            raise ValueError(f"unknown emotion {self.label!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        img = check_gray(self.image)
        if img.shape != (FACE_SIZE, FACE_SIZE):
            raise ValueError(f"face images must be 48x48, got {img.shape[1]}x{img.shape[0]}")
        object.__setattr__(self, "image", img)

    @property
    def label_index(self) -> int:
        return EMOTIONS.index(self.label)


@dataclass(frozen=True)
class EmotionDistribution:
    probs: np.ndarray

    @property
    def label(self) -> str:
        # argmax returns the first maximum, i.e. canonical-order tie breaking
        return EMOTIONS[int(np.argmax(self.probs))]

    def __getitem__(self, emotion: str) -> float:
        return float(self.probs[EMOTIONS.index(emotion)])

    def as_dict(self) -> dict[str, float]:
        return {name: float(p) for name, p in zip(EMOTIONS, self.probs)}


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray

    def format(self) -> str:
        width = max(len(e) for e in EMOTIONS)
        lines = [f"accuracy {self.accuracy:.4f}", " " * (width + 1) + " ".join(f"{e[:5]:>5}" for e in EMOTIONS)]
        for name, row in zip(EMOTIONS, self.confusion):
            lines.append(f"{name:>{width}} " + " ".join(f"{int(v):5d}" for v in row))
        return "\n".join(lines)


def load_fer_csv(text: str | bytes) -> list[FerExample]:
    """Parse a FER-2013 style ``emotion,pixels,Usage`` CSV."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["emotion", "pixels", "Usage"]:
        raise FerFormatError(f"expected header 'emotion,pixels,Usage', got {header!r}")
    examples = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise FerFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
        code, pixels, split = (field.strip() for field in row)
        try:
            code = int(code)
        except ValueError:
            raise FerFormatError(f"line {lineno}: malformed emotion code {code!r}") from None
        if code not in FER_CODES:
            raise FerFormatError(f"line {lineno}: emotion code {code} outside 0-6")
        if split not in SPLITS:
            raise FerFormatError(f"line {lineno}: unknown split {split!r}")
        values = pixels.split()
        if len(values) != FACE_SIZE * FACE_SIZE:
            raise FerFormatError(f"line {lineno}: expected 2304 pixels, got {len(values)}")
        try:
            arr = np.array([int(v) for v in values], dtype=np.int64)
        except ValueError:
            raise FerFormatError(f"line {lineno}: malformed pixel value") from None
        if arr.min() < 0 or arr.max() > 255:
            raise FerFormatError(f"line {lineno}: pixel value outside [0, 255]")
        image = arr.astype(np.uint8).reshape(FACE_SIZE, FACE_SIZE)
        examples.append(FerExample(FER_CODES[code], image, split))
    return examples


def architecture() -> list[tc.LayerSpec]:
    L = tc.LayerSpec
    return [
        L.conv2d(1, 32, 3),
        L("relu"),
        L.conv2d(32, 64, 3),
        L("relu"),
        L("maxpool2"),
        L.conv2d(64, 128, 3),
        L("relu"),
        L("maxpool2"),
        L("flatten"),
        L.dense(128 * 10 * 10, 256),
        L("relu"),
        L.dense(256, len(EMOTIONS)),
        L("softmax"),
    ]


def build_model(seed: int = DEFAULT_SEED) -> tuple[list[tc.LayerSpec], tc.ModelWeights]:
    specs = architecture()
    tc.output_shape(specs, (1, FACE_SIZE, FACE_SIZE))
    return specs, tc.init_weights(specs, seed)


def to_input(images: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Stack 48x48 uint8 faces into an ``N x 1 x 48 x 48`` float32 batch in [0, 1]."""
    batch = np.asarray(images)
    if batch.ndim == 2:
        batch = batch[None]
    if batch.shape[1:] != (FACE_SIZE, FACE_SIZE):
        raise ValueError(f"faces must be 48x48, got {batch.shape[1:]}")
    return (batch.astype(np.float32) / np.float32(255.0))[:, None]


def train(
    specs: Sequence[tc.LayerSpec],
    weights: tc.ModelWeights,
    examples: Iterable[FerExample],
    epochs: int = DEFAULT_EPOCHS,
    batch_size: int = DEFAULT_BATCH,
    lr: float = DEFAULT_LR,
    momentum: float = DEFAULT_MOMENTUM,
    seed: int = DEFAULT_SEED,
    on_epoch: Callable[[EpochStats, tc.ModelWeights], bool | None] | None = None,
) -> tuple[tc.ModelWeights, list[EpochStats]]:
    """Mini-batch momentum SGD on the ``Training`` split.

    Samples are reshuffled each epoch from a generator seeded with ``seed``.
    The logged loss and accuracy are running values over the epoch's
    batches, measured before each batch's update.

    ``on_epoch(stats, weights)`` runs after every epoch; a truthy return
    value ends training early.
    """
    train_set = [ex for ex in examples if ex.split == "Training"]
    if not train_set:
        raise ValueError("no Training examples to train on")
    if epochs < 1 or batch_size < 1:
        raise ValueError("epochs and batch_size must be positive")
    images = to_input([ex.image for ex in train_set])
    labels = np.array([ex.label_index for ex in train_set])
    rng = np.random.default_rng(seed)
    velocity = tc.zeros_like_weights(weights)
    history = []
    n = len(train_set)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, probs, _, grads = tc.loss_and_grads(specs, weights, images[idx], labels[idx])
            weights, velocity = tc.sgd_step(weights, grads, lr, momentum, velocity)
            total_loss += loss * len(idx)
            correct += int(np.sum(np.argmax(probs, axis=1) == labels[idx]))
        stats = EpochStats(epoch, total_loss / n, correct / n)
        history.append(stats)
        log.info("epoch %d loss %.6f accuracy %.4f", stats.epoch, stats.loss, stats.accuracy)
        if on_epoch is not None and on_epoch(stats, weights):
            break
    return weights, history


def predict_probs(specs, weights, faces, batch_size: int = 64) -> np.ndarray:
    x = to_input(faces)
    out = [tc.forward(specs, weights, x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, len(EMOTIONS)), dtype=np.float32)


def predict(specs, weights, face: np.ndarray) -> EmotionDistribution:
    face = check_gray(face)
    if face.shape != (FACE_SIZE, FACE_SIZE):
        raise ValueError(f"face must be 48x48, got {face.shape[1]}x{face.shape[0]}")
    return EmotionDistribution(predict_probs(specs, weights, face)[0])


def mean_loss(specs, weights, examples: Sequence[FerExample], batch_size: int = 64) -> float:
    probs = predict_probs(specs, weights, [ex.image for ex in examples], batch_size)
    return tc.cross_entropy(probs, np.array([ex.label_index for ex in examples]))


def evaluate(specs, weights, examples: Sequence[FerExample], batch_size: int = 64) -> EvalResult:
    """Accuracy and confusion matrix (rows true label, columns predicted)."""
    examples = list(examples)
    if not examples:
        raise ValueError("cannot evaluate on an empty example set")
    probs = predict_probs(specs, weights, [ex.image for ex in examples], batch_size)
    predicted = np.argmax(probs, axis=1)
    confusion = np.zeros((len(EMOTIONS), len(EMOTIONS)), dtype=np.int64)
    for ex, pred in zip(examples, predicted):
        confusion[ex.label_index, pred] += 1
    return EvalResult(float(np.trace(confusion)) / len(examples), confusion)
