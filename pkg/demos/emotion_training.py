"""Build the emotion CNN, check its gradients and train it on a toy dataset.

Run from the repository root:  python3 demos/emotion_training.py
Training the full flat-intensity fixture takes a few minutes on one core.
"""

import time

import numpy as np

from streetpulse import tensorcore as tc
from streetpulse.emotion import (
    EMOTIONS,
    FerExample,
    architecture,
    build_model,
    evaluate,
    predict,
    train,
)

specs, weights = build_model(seed=42)

# shape after every layer for one 1x48x48 face
for layer, shape in zip(architecture(), tc.output_shape(specs, (1, 48, 48))):
    print(f"{layer.kind:<9} {shape}")

n_params = sum(p.size for params in weights for p in params)
print(n_params, "parameters")

# an untrained network still returns a proper distribution
face = np.random.default_rng(0).integers(0, 256, (48, 48)).astype(np.uint8)
dist = predict(specs, weights, face)
print(dist.label, round(float(dist.probs.sum()), 6))

# backprop against central differences on a small random input
report = tc.network_gradient_check(specs, weights, np.random.default_rng(1).random((1, 48, 48)), label=3)
print("max relative error", report.max_rel_error, "over", report.n_checked, "coordinates")

# Toy dataset: class k is a flat image of intensity 36k + 18. The copies are
# identical, so they only set how many updates happen per epoch.
classes = [FerExample(label, np.full((48, 48), 36 * k + 18, np.uint8)) for k, label in enumerate(EMOTIONS)]


def show(stats, w):
    acc = evaluate(specs, w, classes).accuracy
    print(f"epoch {stats.epoch:2d}  loss {stats.loss:.4f}  running acc {stats.accuracy:.3f}  eval acc {acc:.3f}")


start = time.perf_counter()
weights, history = train(specs, weights, classes * 32, epochs=20, batch_size=16, lr=0.005, momentum=0.9, seed=42, on_epoch=show)
print(f"{time.perf_counter() - start:.0f}s")

result = evaluate(specs, weights, classes)
print(result.format())

# weights go to disk in the SPW1 format
blob = tc.save_weights(specs, weights)
print(len(blob), "bytes", blob[:4])
