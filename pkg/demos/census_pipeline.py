"""Run the whole census through the command line on synthetic frames.

Run from the repository root:  python3 demos/census_pipeline.py

Two "cities" get a handful of frames. A cross pattern plays a happy face and
its negative a sad one (HOG ignores gradient sign, so the detector finds
both). A small CNN learns to tell them apart, then the CLI does the rest.
"""

from pathlib import Path

import numpy as np

from streetpulse import tensorcore as tc
from streetpulse.cli import main
from streetpulse.emotion import FerExample, evaluate, train
from streetpulse.facedetect import train_detector
from streetpulse.imageio import save_pgm

rng = np.random.default_rng(0)
out = Path(__file__).resolve().parent / "out" / "census"
out.mkdir(parents=True, exist_ok=True)


def cross():
    p = np.full((48, 48), 50, np.uint8)
    p[19:29, 6:42] = 210
    p[6:42, 19:29] = 210
    return p


def noise(h, w):
    return rng.integers(70, 150, (h, w)).astype(np.uint8)


happy, sad = cross(), 255 - cross()

# detector: the pattern against background and off-centre views of it
pos = [np.clip(happy.astype(int) + rng.integers(-6, 7, (48, 48)), 0, 255).astype(np.uint8) for _ in range(20)]
neg = [noise(48, 48) for _ in range(30)]
for dx, dy in [(16, 0), (-16, 0), (0, 16), (0, -16), (24, 24), (-24, -24), (32, 0), (0, 32)]:
    big = noise(144, 144)
    big[48:96, 48:96] = happy
    neg.append(big[48 + dy : 96 + dy, 48 + dx : 96 + dx].copy())
(out / "detector.hfd").write_bytes(train_detector(pos, neg).to_bytes())

# classifier: any layer stack with a 1x48x48 input and 7 outputs will do
L = tc.LayerSpec
specs = [L.conv2d(1, 4, 3), L("relu"), L("maxpool2"), L("flatten"), L.dense(4 * 23 * 23, 7), L("softmax")]
examples = []
for _ in range(12):
    jitter = rng.integers(-6, 7, (48, 48))
    examples.append(FerExample("Happy", np.clip(happy + jitter, 0, 255).astype(np.uint8)))
    examples.append(FerExample("Sad", np.clip(sad + jitter, 0, 255).astype(np.uint8)))
    examples.append(FerExample("Neutral", noise(48, 48)))
weights, _ = train(specs, tc.init_weights(specs, 0), examples, epochs=10, batch_size=6, lr=0.01, momentum=0.9, seed=0)
print("classifier accuracy", evaluate(specs, weights, examples).accuracy)
(out / "classifier.spw").write_bytes(tc.save_weights(specs, weights))

# frames: city A sees 3 happy and 1 sad face, city B 1 happy and 2 sad
plan = {"Alpha": [happy, happy, None, sad, happy], "Beta": [sad, None, happy, sad]}
for city, faces in plan.items():
    d = out / city.lower()
    d.mkdir(exist_ok=True)
    for i, face in enumerate(faces):
        frame = noise(96, 128)
        if face is not None:
            x, y = 8 * int(rng.integers(0, 11)), 8 * int(rng.integers(0, 7))
            frame[y : y + 48, x : x + 48] = face
        (d / f"frame{i:03d}.pgm").write_bytes(save_pgm(frame))

(out / "census.cfg").write_text(
    "# synthetic two-city census\n"
    "city.Alpha.dir = alpha\n"
    "city.Beta.dir = beta\n"
    "detector = detector.hfd\n"
    "classifier = classifier.spw\n"
    "max_faces = 300\n"
)

assert main(["census", "--manifest", str(out / "census.cfg"), "--out", str(out / "census.csv")]) == 0
print((out / "census.csv").read_text())

# the same CSV feeds the statistics and the chart
main(["stats", "--in", str(out / "census.csv")])
main(["report", "--in", str(out / "census.csv"), "--out", str(out / "happiness.svg")])
