"""Per-city emotion census: frames in, emotion counts and CSV out."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import tensorcore as tc
from .emotion import EMOTIONS, FACE_SIZE, predict_probs
from .facedetect import DEFAULT_NMS_IOU, DEFAULT_SCALE, DEFAULT_STRIDE, LinearFaceModel, detect
from .imageio import crop, load_pnm, resize_bilinear, to_grayscale

log = logging.getLogger(__name__)

DEFAULT_MAX_FACES = 300
FRAME_SUFFIXES = (".pgm", ".ppm", ".pnm")
CSV_HEADER = ("city", "emotion", "value")


class CensusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CityEmotionCounts:
    city: str
    counts: Mapping[str, int]
    faces_processed: int

    def __post_init__(self):
        if not self.city or not self.city.isprintable():
            raise ValueError(f"city name must be nonempty printable text, got {self.city!r}")
        unknown = set(self.counts) - set(EMOTIONS)
        if unknown:
            raise ValueError(f"unknown emotion(s) {sorted(unknown)}")
        counts = {e: int(self.counts.get(e, 0)) for e in EMOTIONS}
        if any(v < 0 for v in counts.values()):
            raise ValueError("emotion counts must be nonnegative")
        if sum(counts.values()) != self.faces_processed:
            raise ValueError(f"counts sum to {sum(counts.values())}, faces_processed is {self.faces_processed}")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def of(cls, city: str, counts: Mapping[str, int] | None = None) -> "CityEmotionCounts":
        counts = dict(counts or {})
        return cls(city, counts, sum(int(v) for v in counts.values()))

    @property
    def happy(self) -> int:
        return self.counts["Happy"]


def merge_counts(a: CityEmotionCounts, b: CityEmotionCounts) -> CityEmotionCounts:
    if a.city != b.city:
        raise ValueError(f"cannot merge counts of {a.city!r} and {b.city!r}")
    return CityEmotionCounts(a.city, {e: a.counts[e] + b.counts[e] for e in EMOTIONS}, a.faces_processed + b.faces_processed)


# ---------------------------------------------------------------------------
# frames


def frame_files(directory: str | Path) -> list[Path]:
    """PNM files of a directory in lexicographic name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory {directory} does not exist")
    return sorted((p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES), key=lambda p: p.name)


def read_frame(path: str | Path) -> np.ndarray:
    img = load_pnm(Path(path).read_bytes())
    return to_grayscale(img) if img.ndim == 3 else img


def iter_frames(paths: Iterable[Path]) -> Iterator[np.ndarray]:
    """Load frames in order, logging and skipping unreadable ones."""
    for path in paths:
        try:
            yield read_frame(path)
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable frame %s: %s", path, exc)


@dataclass
class Pipeline:
    """Detector, classifier and the detection parameters shared by all frames."""

    detector: LinearFaceModel
    specs: Sequence[tc.LayerSpec]
    weights: tc.ModelWeights
    scale: float = DEFAULT_SCALE
    stride: int = DEFAULT_STRIDE
    nms_iou: float = DEFAULT_NMS_IOU
    threshold: float | None = None

    def faces(self, frame: np.ndarray) -> list[np.ndarray]:
        boxes = detect(frame, self.detector, self.stride, self.scale, self.nms_iou, self.threshold)
        return [resize_bilinear(crop(frame, box), FACE_SIZE, FACE_SIZE) for box in boxes]

    def classify_frame(self, frame: np.ndarray) -> list[int]:
        """Label indices of the faces in one frame, in detection-score order."""
        faces = self.faces(frame)
        if not faces:
            return []
        return [int(i) for i in np.argmax(predict_probs(self.specs, self.weights, faces), axis=1)]


def process_city(
    city: str,
    frames: Iterable[np.ndarray],
    pipeline: Pipeline,
    max_faces: int = DEFAULT_MAX_FACES,
    jobs: int = 1,
) -> CityEmotionCounts:
    """Detect, crop, classify and tally faces frame by frame.

    Stops as soon as ``max_faces`` faces have been classified, including
    part-way through a frame. With ``jobs > 1`` frames are classified on a
    thread pool but tallied in their original order, so the result does not
    depend on ``jobs``.
    """
    if max_faces < 1:
        raise ValueError("max_faces must be at least 1")
    tally = [0] * len(EMOTIONS)
    done = 0

    def labelled() -> Iterator[list[int]]:
        if jobs <= 1:
            for frame in frames:
                yield pipeline.classify_frame(frame)
            return
        frame_iter = iter(frames)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            while True:
                batch = [f for _, f in zip(range(2 * jobs), frame_iter)]
                if not batch:
                    return
                yield from pool.map(pipeline.classify_frame, batch)

    for labels in labelled():
        for label in labels:
            tally[label] += 1
            done += 1
            if done >= max_faces:
                break
        if done >= max_faces:
            break
    return CityEmotionCounts(city, dict(zip(EMOTIONS, tally)), done)


# ---------------------------------------------------------------------------
# manifest


@dataclass
class CensusManifest:
    cities: dict[str, Path] = field(default_factory=dict)
    max_faces: int = DEFAULT_MAX_FACES
    detector: Path | None = None
    classifier: Path | None = None
    scale: float = DEFAULT_SCALE
    stride: int = DEFAULT_STRIDE
    nms_iou: float = DEFAULT_NMS_IOU
    threshold: float | None = None


_NUMERIC_KEYS = {"max_faces": int, "scale": float, "stride": int, "nms_iou": float, "threshold": float}


def parse_manifest(text: str, base_dir: str | Path = ".") -> CensusManifest:
    """Parse flat ``key=value`` lines; relative paths resolve against ``base_dir``.

    Keys: ``city.<name>.dir``, ``max_faces``, ``detector``, ``classifier``,
    ``scale``, ``stride``, ``nms_iou``, ``threshold``. Blank lines and lines
    starting with ``#`` are ignored. Cities keep their file order.
    """
    base = Path(base_dir)
    m = CensusManifest()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CensusFormatError(f"manifest line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("city.") and key.endswith(".dir") and len(key) > len("city..dir"):
            name = key[len("city.") : -len(".dir")]
            if name in m.cities:
                raise CensusFormatError(f"manifest line {lineno}: duplicate city {name!r}")
            m.cities[name] = base / value
        elif key in ("detector", "classifier"):
            setattr(m, key, base / value)
        elif key in _NUMERIC_KEYS:
            try:
                setattr(m, key, _NUMERIC_KEYS[key](value))
            except ValueError:
                raise CensusFormatError(f"manifest line {lineno}: {key} needs a number, got {value!r}") from None
        else:
            raise CensusFormatError(f"manifest line {lineno}: unknown key {key!r}")
    if m.max_faces < 1:
        raise CensusFormatError("max_faces must be at least 1")
    if m.stride < 1 or m.scale <= 1 or not 0 <= m.nms_iou <= 1:
        raise CensusFormatError("need stride >= 1, scale > 1 and nms_iou in [0, 1]")
    if m.detector is None or m.classifier is None:
        raise CensusFormatError("manifest must name both detector and classifier files")
    return m


def load_pipeline(m: CensusManifest) -> Pipeline:
    for path in (m.detector, m.classifier):
        if not Path(path).is_file():
            raise FileNotFoundError(f"weights file {path} not found")
    detector = LinearFaceModel.from_bytes(Path(m.detector).read_bytes())
    specs, weights = tc.load_weights(Path(m.classifier).read_bytes())
    return Pipeline(detector, specs, weights, m.scale, m.stride, m.nms_iou, m.threshold)


def run_census(m: CensusManifest, jobs: int = 1) -> list[CityEmotionCounts]:
    pipeline = load_pipeline(m)
    results = []
    for city, directory in m.cities.items():
        paths = frame_files(directory)
        log.info("%s: %d frames", city, len(paths))
        results.append(process_city(city, iter_frames(paths), pipeline, m.max_faces, jobs))
    return results


# ---------------------------------------------------------------------------
# CSV


def export_csv(results: Iterable[CityEmotionCounts]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in results:
        for emotion in EMOTIONS:
            writer.writerow((r.city, emotion, r.counts[emotion]))
    return buf.getvalue()


def import_csv(text: str) -> list[CityEmotionCounts]:
    """Read ``city,emotion,value`` rows back; absent pairs count as 0."""
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise CensusFormatError(f"expected header 'city,emotion,value', got {header!r}")
    tallies: dict[str, dict[str, int]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise CensusFormatError(f"line {lineno}: malformed row {row!r}")
        city, emotion, value = row[0], row[1].strip(), row[2].strip()
        if emotion not in EMOTIONS:
            raise CensusFormatError(f"line {lineno}: unknown emotion {emotion!r}")
        try:
            count = int(value)
        except ValueError:
            raise CensusFormatError(f"line {lineno}: malformed value {value!r}") from None
        if count < 0:
            raise CensusFormatError(f"line {lineno}: negative value {count}")
        city_counts = tallies.setdefault(city, {})
        if emotion in city_counts:
            raise CensusFormatError(f"line {lineno}: duplicate row for {city}/{emotion}")
        city_counts[emotion] = count
    return [CityEmotionCounts.of(city, counts) for city, counts in tallies.items()]
