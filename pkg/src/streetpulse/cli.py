"""Command-line front end.

Exit codes: 0 on success, 1 when flags or inputs fail validation (nothing is
written), 2 when a command fails while running.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import census, emotion, facedetect, stats
from . import tensorcore as tc

log = logging.getLogger("streetpulse")

SEED_ENV = "STREETPULSE_SEED"
COMMANDS = ("train-emotion", "eval-emotion", "train-detector", "detect", "census", "stats", "report")


class UsageError(Exception):
    pass


@dataclass
class Command:
    name: str
    options: dict

    def __getattr__(self, key):
        try:
            return self.options[key]
        except KeyError:
            raise AttributeError(key) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _unit_float(text: str) -> float:
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {value}")
    return value


def _momentum(text: str) -> float:
    value = float(text)
    if not 0 <= value < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {value}")
    return value


def _scale(text: str) -> float:
    value = float(text)
    if not value > 1:
        raise argparse.ArgumentTypeError(f"must exceed 1, got {value}")
    return value


def _level(text: str) -> float:
    value = float(text)
    try:
        stats.z_value(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return value


def default_seed(fallback: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streetpulse", description="Street-footage emotion census.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train-emotion", help="train the emotion CNN on a FER-2013 CSV")
    p.add_argument("--csv", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="SPW1 weights file to write")
    p.add_argument("--log", type=Path, help="per-epoch loss/accuracy CSV to write")
    p.add_argument("--epochs", type=_positive_int, default=emotion.DEFAULT_EPOCHS)
    p.add_argument("--batch-size", type=_positive_int, default=emotion.DEFAULT_BATCH)
    p.add_argument("--lr", type=_positive_float, default=emotion.DEFAULT_LR)
    p.add_argument("--momentum", type=_momentum, default=emotion.DEFAULT_MOMENTUM)
    p.add_argument("--seed", type=int)
    p.add_argument("--limit", type=_positive_int, help="use only the first N Training rows")

    p = sub.add_parser("eval-emotion", help="accuracy and confusion matrix on one split")
    p.add_argument("--weights", required=True, type=Path)
    p.add_argument("--csv", required=True, type=Path)
    p.add_argument("--split", choices=emotion.SPLITS, default="PublicTest")

    p = sub.add_parser("train-detector", help="train the HOG face detector from 48x48 patches")
    p.add_argument("--positives", required=True, type=Path, help="directory of face patches")
    p.add_argument("--negatives", required=True, type=Path, help="directory of non-face patches")
    p.add_argument("--out", required=True, type=Path, help="HFD1 model file to write")
    p.add_argument("--epochs", type=_positive_int, default=50)
    p.add_argument("--lr", type=_positive_float, default=0.1)
    p.add_argument("--threshold", type=float, default=facedetect.DEFAULT_THRESHOLD)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("detect", help="detect faces in one PGM/PPM image")
    p.add_argument("--detector", required=True, type=Path)
    p.add_argument("--image", required=True, type=Path)
    p.add_argument("--out", type=Path, help="write detections here instead of stdout")
    _detector_flags(p)

    p = sub.add_parser("census", help="run the per-city census described by a manifest")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="census CSV to write")
    p.add_argument("--jobs", type=_positive_int, default=1)

    for name, help_text in (("stats", "proportions, intervals and homogeneity test"), ("report", "SVG chart of happiness intervals")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--in", dest="input", required=True, type=Path, help="census CSV")
        p.add_argument("--method", choices=stats.METHODS, default=stats.DEFAULT_METHOD)
        p.add_argument("--level", type=_level, default=stats.DEFAULT_LEVEL)
        p.add_argument("--out", type=Path, required=name == "report")
    return parser


def _detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", type=_scale, default=facedetect.DEFAULT_SCALE)
    p.add_argument("--stride", type=_positive_int, default=facedetect.DEFAULT_STRIDE)
    p.add_argument("--nms-iou", type=_unit_float, default=facedetect.DEFAULT_NMS_IOU)
    p.add_argument("--threshold", type=float, help="override the model's decision threshold")


_INPUTS = {
    "train-emotion": ("csv",),
    "eval-emotion": ("weights", "csv"),
    "train-detector": ("positives", "negatives"),
    "detect": ("detector", "image"),
    "census": ("manifest",),
    "stats": ("input",),
    "report": ("input",),
}


def parse_args(argv) -> Command:
    ns = build_parser().parse_args(list(argv))
    options = vars(ns)
    name = options.pop("command")
    if "seed" in options and options["seed"] is None:
        options["seed"] = default_seed(emotion.DEFAULT_SEED if name == "train-emotion" else 0)
    return Command(name, options)


def _check_inputs(cmd: Command) -> None:
    for key in _INPUTS[cmd.name]:
        path = cmd.options[key]
        if not path.exists():
            flag = "--in" if key == "input" else f"--{key}"
            raise UsageError(f"{cmd.name}: {flag} {path} does not exist")


def _write(path: Path, data: str | bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        tmp.write_text(data, encoding="utf-8")
    else:
        tmp.write_bytes(data)
    tmp.replace(path)


def _load_patches(directory: Path) -> list:
    return [census.read_frame(p) for p in census.frame_files(directory)]


def _run_train_emotion(cmd: Command) -> None:
    examples = [ex for ex in emotion.load_fer_csv(cmd.csv.read_text()) if ex.split == "Training"]
    if cmd.limit:
        examples = examples[: cmd.limit]
    specs, weights = emotion.build_model(cmd.seed)
    weights, history = emotion.train(
        specs, weights, examples, cmd.epochs, cmd.batch_size, cmd.lr, cmd.momentum, cmd.seed,
        on_epoch=lambda s, _w: print(f"epoch {s.epoch} loss {s.loss:.6f} accuracy {s.accuracy:.4f}", file=sys.stderr),
    )
    _write(cmd.out, tc.save_weights(specs, weights))
    if cmd.log:
        _write(cmd.log, "epoch,loss,accuracy\n" + "".join(f"{s.epoch},{s.loss!r},{s.accuracy!r}\n" for s in history))


def _run_eval_emotion(cmd: Command) -> None:
    specs, weights = tc.load_weights(cmd.weights.read_bytes())
    examples = [ex for ex in emotion.load_fer_csv(cmd.csv.read_text()) if ex.split == cmd.split]
    print(emotion.evaluate(specs, weights, examples).format())


def _run_train_detector(cmd: Command) -> None:
    model = facedetect.train_detector(
        _load_patches(cmd.positives), _load_patches(cmd.negatives), cmd.epochs, cmd.lr, cmd.seed, cmd.threshold
    )
    _write(cmd.out, model.to_bytes())


def _run_detect(cmd: Command) -> None:
    model = facedetect.LinearFaceModel.from_bytes(cmd.detector.read_bytes())
    image = census.read_frame(cmd.image)
    dets = facedetect.detect(image, model, cmd.stride, cmd.scale, cmd.nms_iou, cmd.threshold)
    text = f"# {len(dets)} detections: x y w h score\n" + "".join(f"{d.x} {d.y} {d.w} {d.h} {d.score:.6f}\n" for d in dets)
    if cmd.out:
        _write(cmd.out, text)
    else:
        sys.stdout.write(text)


def _run_census(cmd: Command) -> None:
    manifest = census.parse_manifest(cmd.manifest.read_text(), cmd.manifest.parent)
    _write(cmd.out, census.export_csv(census.run_census(manifest, cmd.jobs)))


def _run_stats(cmd: Command) -> None:
    results = census.import_csv(cmd.input.read_text())
    summary = stats.summarize(results, cmd.method, cmd.level)
    if cmd.out:
        _write(cmd.out, summary)
    else:
        sys.stdout.write(summary)


def _run_report(cmd: Command) -> None:
    results = census.import_csv(cmd.input.read_text())
    svg, summary = stats.render_report(results, cmd.method, cmd.level)
    _write(cmd.out, svg)
    sys.stdout.write(summary)


_RUNNERS = {
    "train-emotion": _run_train_emotion,
    "eval-emotion": _run_eval_emotion,
    "train-detector": _run_train_detector,
    "detect": _run_detect,
    "census": _run_census,
    "stats": _run_stats,
    "report": _run_report,
}


def run(cmd: Command) -> int:
    try:
        _check_inputs(cmd)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        _RUNNERS[cmd.name](cmd)
    except Exception as exc:  # noqa: BLE001 - every failure becomes exit status 2
        print(f"error: {cmd.name}: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cmd = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if cmd.options.pop("verbose", False) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(cmd)


if __name__ == "__main__":
    sys.exit(main())
