"""Train the HOG face detector on a synthetic pattern and find it in a frame.

Run from the repository root:  python3 demos/planted_detector.py

No face data ships with the package, so a bright cross on a dark square
stands in for a face. The steps are the same as with real patches.
"""

import numpy as np

from streetpulse.facedetect import (
    Detection,
    accuracy,
    detect,
    hog_descriptor,
    image_pyramid,
    iou,
    nms,
    scan,
    train_detector,
)

rng = np.random.default_rng(0)


def cross():
    p = np.full((48, 48), 50, np.uint8)
    p[19:29, 6:42] = 210
    p[6:42, 19:29] = 210
    return p


def noise(h, w):
    return rng.integers(70, 150, (h, w)).astype(np.uint8)


# a 48x48 window becomes 5x5 blocks of 4 cells x 9 orientation bins
d = hog_descriptor(cross())
print(d.shape, d.reshape(25, 36).sum(axis=1).round(2)[:5])

# positives: the pattern with a little noise
pos = [np.clip(cross().astype(int) + rng.integers(-6, 7, (48, 48)), 0, 255).astype(np.uint8) for _ in range(20)]

# negatives: plain background, plus shifted views of the pattern so that the
# detector learns to fire only when the window is centred on it
neg = [noise(48, 48) for _ in range(30)]
for dx, dy in [(16, 0), (-16, 0), (0, 16), (0, -16), (24, 24), (-24, 24), (24, -24), (-24, -24), (32, 0), (0, 32), (-32, 0), (0, -32)]:
    big = noise(144, 144)
    big[48:96, 48:96] = cross()
    neg.append(big[48 + dy : 96 + dy, 48 + dx : 96 + dx].copy())

model = train_detector(pos, neg, epochs=50, lr=0.1, seed=0)
print("training accuracy", accuracy(model, pos, neg))

# plant the pattern into a 160x120 frame
frame = noise(120, 160)
frame[40:88, 56:104] = cross()

# the pyramid rescales the frame so larger faces fit the 48x48 window
for level, factor in image_pyramid(frame):
    print(level.shape, round(factor, 3))

raw = scan(frame, model)
print(len(raw), "raw window hits")
print(sorted(raw, key=lambda d: -d.score)[:3])

# NMS collapses overlapping hits into one box per object
kept = nms(raw, 0.3)
print(kept)
print("IoU with planted box", iou(kept[0], Detection(56, 40, 48, 48)))

# detect() is scan + NMS in one call
assert detect(frame, model) == kept

# a frame without the pattern gives nothing
print(detect(noise(120, 160), model))
