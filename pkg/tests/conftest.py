import hashlib
import time

import numpy as np
import pytest

from streetpulse.census import CityEmotionCounts
from streetpulse.facedetect import train_detector

# Table I: Anger, Disgust, Surprise, Fear, Happy per city; Sad and Neutral
# were never detected.
TABLE_I = {
    "Barcelona": (2, 0, 90, 203, 5),
    "Istanbul": (1, 1, 64, 227, 7),
    "Kiev": (2, 0, 79, 215, 4),
    "London": (1, 0, 115, 182, 2),
    "New York": (1, 0, 61, 230, 8),
    "Paris": (2, 0, 31, 267, 0),
    "Tokyo": (3, 0, 32, 260, 5),
    "Copenhagen": (1, 0, 69, 227, 3),
}


def table_i_counts():
    out = []
    for city, (anger, disgust, surprise, fear, happy) in TABLE_I.items():
        counts = {"Anger": anger, "Sad": 0, "Neutral": 0, "Disgust": disgust, "Surprise": surprise, "Fear": fear, "Happy": happy}
        out.append(CityEmotionCounts.of(city, counts))
    return out


def table_i_csv() -> str:
    lines = ["city,emotion,value"]
    for city, (anger, disgust, surprise, fear, happy) in TABLE_I.items():
        for emotion, value in (("Anger", anger), ("Disgust", disgust), ("Surprise", surprise), ("Fear", fear), ("Happy", happy)):
            lines.append(f"{city},{emotion},{value}")
    return "\n".join(lines) + "\n"


def cross_pattern() -> np.ndarray:
    p = np.full((48, 48), 50, np.uint8)
    p[19:29, 6:42] = 210
    p[6:42, 19:29] = 210
    return p


def noise(rng, h, w) -> np.ndarray:
    return rng.integers(70, 150, (h, w)).astype(np.uint8)


def planted_frame(rng, w, h, x, y) -> np.ndarray:
    frame = noise(rng, h, w)
    frame[y : y + 48, x : x + 48] = cross_pattern()
    return frame


def detector_training_set(seed=0):
    rng = np.random.default_rng(seed)
    pos = [np.clip(cross_pattern().astype(int) + rng.integers(-6, 7, (48, 48)), 0, 255).astype(np.uint8) for _ in range(20)]
    neg = [noise(rng, 48, 48) for _ in range(30)]
    # shifted views of the pattern teach the detector to localize
    for dx, dy in [(16, 0), (-16, 0), (0, 16), (0, -16), (24, 24), (-24, 24), (24, -24), (-24, -24), (32, 0), (0, 32), (-32, 0), (0, -32)]:
        big = noise(rng, 144, 144)
        big[48:96, 48:96] = cross_pattern()
        neg.append(big[48 + dy : 96 + dy, 48 + dx : 96 + dx].copy())
    return pos, neg


@pytest.fixture(scope="session")
def cross_detector():
    pos, neg = detector_training_set()
    return train_detector(pos, neg, epochs=50, lr=0.1, seed=0)


def inverted_cross() -> np.ndarray:
    # same unsigned gradient orientations as the cross, so the HOG
    # detector fires on it too, but the classifier can tell them apart
    return (255 - cross_pattern().astype(int)).astype(np.uint8)




def small_classifier_specs():
    from streetpulse.tensorcore import LayerSpec as L

    return [L.conv2d(1, 4, 3), L("relu"), L("maxpool2"), L("flatten"), L.dense(4 * 23 * 23, 7), L("softmax")]


def train_pattern_classifier():
    """Small CNN that labels the cross Happy, the inverted cross Sad and noise Neutral."""
    from streetpulse.emotion import FerExample, evaluate, train
    from streetpulse.tensorcore import init_weights

    rng = np.random.default_rng(5)
    examples = []
    for _ in range(12):
        jitter = rng.integers(-6, 7, (48, 48))
        examples.append(FerExample("Happy", np.clip(cross_pattern() + jitter, 0, 255).astype(np.uint8)))
        examples.append(FerExample("Sad", np.clip(inverted_cross() + jitter, 0, 255).astype(np.uint8)))
        examples.append(FerExample("Neutral", noise(rng, 48, 48)))
    specs = small_classifier_specs()
    weights, _ = train(specs, init_weights(specs, 0), examples, epochs=10, batch_size=6, lr=0.01, momentum=0.9, seed=0)
    assert evaluate(specs, weights, examples).accuracy == 1.0
    return specs, weights


@pytest.fixture(scope="session")
def pattern_classifier():
    return train_pattern_classifier()


# Flat-intensity fixture: class k is a constant image of value 36k+18.
# Identical copies only add update steps per epoch; the settings below were
# chosen by sweeping copies/batch/lr at seed 42 (see the decisions notes).
FLAT_COPIES = 32
FLAT_BATCH = 16
FLAT_LR = 0.005
FLAT_MOMENTUM = 0.9
FLAT_EPOCHS = 20


def flat_examples():
    from streetpulse.emotion import EMOTIONS, FerExample

    return [FerExample(label, np.full((48, 48), 36 * k + 18, np.uint8)) for k, label in enumerate(EMOTIONS)]


def weights_digest(weights) -> str:
    h = hashlib.sha256()
    for params in weights:
        for p in params:
            h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()


def train_flat_fixture(seed=42, stop_at=None):
    """Train on the flat fixture, evaluating after every epoch.

    ``stop_at`` ends training after that many epochs (used to replay a run).
    """
    from streetpulse.emotion import build_model, evaluate, train

    examples = flat_examples()
    specs, weights = build_model(seed)
    per_epoch, digests = [], []

    def on_epoch(stats, w):
        per_epoch.append(evaluate(specs, w, examples).accuracy)
        digests.append(weights_digest(w))
        return stop_at is not None and stats.epoch >= stop_at

    start = time.perf_counter()
    weights, history = train(
        specs,
        weights,
        examples * FLAT_COPIES,
        epochs=FLAT_EPOCHS,
        batch_size=FLAT_BATCH,
        lr=FLAT_LR,
        momentum=FLAT_MOMENTUM,
        seed=seed,
        on_epoch=on_epoch,
    )
    return {
        "specs": specs,
        "weights": weights,
        "history": history,
        "accuracy": per_epoch,
        "digests": digests,
        "seconds": time.perf_counter() - start,
    }


@pytest.fixture(scope="session")
def flat_model():
    return train_flat_fixture()


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
