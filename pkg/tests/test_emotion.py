import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import flat_examples
from streetpulse import tensorcore as tc
from streetpulse.emotion import (
    EMOTIONS,
    EmotionDistribution,
    FerExample,
    FerFormatError,
    architecture,
    build_model,
    evaluate,
    load_fer_csv,
    mean_loss,
    predict,
    to_input,
    train,
)

HEADER = "emotion,pixels,Usage\n"


def row(code, pixels=None, split="Training"):
    pixels = pixels if pixels is not None else ["0"] * 2304
    return f"{code},{' '.join(pixels)},{split}\n"


@pytest.fixture(scope="module")
def model():
    return build_model(42)


def test_label_set():
    assert EMOTIONS == ("Anger", "Sad", "Neutral", "Disgust", "Surprise", "Fear", "Happy")


def test_load_happy_row():
    (ex,) = load_fer_csv(HEADER + row(3))
    assert ex.label == "Happy" and ex.split == "Training"
    assert ex.image.shape == (48, 48) and not ex.image.any()


def test_code_mapping_and_raster_order():
    pixels = [str(i % 256) for i in range(2304)]
    text = HEADER + "".join(row(c, pixels, "PublicTest") for c in range(7))
    examples = load_fer_csv(text)
    assert [e.label for e in examples] == ["Anger", "Disgust", "Fear", "Happy", "Sad", "Surprise", "Neutral"]
    assert examples[0].image[0, :3].tolist() == [0, 1, 2]
    assert examples[0].image[1, 0] == 48


@pytest.mark.parametrize(
    "text, message",
    [
        (row(3, ["0"] * 2303), "2304 pixels"),
        (row(7), "outside 0-6"),
        (row("x"), "malformed emotion"),
        (row(3, split="Validation"), "unknown split"),
        (row(3, ["0"] * 2303 + ["a"]), "malformed pixel"),
        (row(3, ["0"] * 2303 + ["256"]), "outside"),
        ("3,0\n", "3 fields"),
    ],
)
def test_load_errors(text, message):
    with pytest.raises(FerFormatError, match=message):
        load_fer_csv(HEADER + text)


def test_load_needs_header():
    with pytest.raises(FerFormatError):
        load_fer_csv(row(3))


def test_example_validation():
    with pytest.raises(ValueError):
        FerExample("Joy", np.zeros((48, 48), np.uint8))
    with pytest.raises(ValueError):
        FerExample("Happy", np.zeros((47, 48), np.uint8))


def test_intermediate_shapes():
    shapes = tc.output_shape(architecture(), (1, 48, 48))
    convs = [s for layer, s in zip(architecture(), shapes) if layer.kind in ("conv2d", "maxpool2", "flatten", "dense")]
    assert convs == [(32, 46, 46), (64, 44, 44), (64, 22, 22), (128, 20, 20), (128, 10, 10), (12800,), (256,), (7,)]


def test_build_is_deterministic():
    _, a = build_model(7)
    _, b = build_model(7)
    _, c = build_model(8)
    assert all(x.tobytes() == y.tobytes() for pa, pb in zip(a, b) for x, y in zip(pa, pb))
    assert a[0][0].tobytes() != c[0][0].tobytes()


def test_to_input_scaling():
    x = to_input([np.full((48, 48), 255, np.uint8)])
    assert x.shape == (1, 1, 48, 48) and x.dtype == np.float32 and np.all(x == 1)


@settings(max_examples=10, deadline=None)
@given(arrays(np.uint8, (48, 48)))
def test_predict_is_a_distribution(model, face):
    specs, weights = model
    d = predict(specs, weights, face)
    assert d.probs.shape == (7,)
    assert np.all(np.isfinite(d.probs)) and np.all(d.probs >= 0)
    assert abs(float(d.probs.sum()) - 1) < 1e-6
    again = predict(specs, weights, face)
    assert again.probs.tobytes() == d.probs.tobytes()


def test_predict_rejects_wrong_size(model):
    specs, weights = model
    with pytest.raises(ValueError):
        predict(specs, weights, np.zeros((48, 47), np.uint8))


def test_distribution_ties_follow_canonical_order():
    d = EmotionDistribution(np.full(7, 1 / 7))
    assert d.label == "Anger"
    assert d["Happy"] == pytest.approx(1 / 7)
    assert list(d.as_dict()) == list(EMOTIONS)


def stub_model(out):
    """Linear stand-in for the CNN whose output ignores the image."""
    specs = [tc.LayerSpec("flatten"), tc.LayerSpec.dense(48 * 48, 7), tc.LayerSpec("softmax")]
    w = np.zeros((7, 48 * 48), np.float32)
    b = np.asarray(out, np.float32)
    return specs, [(), (w, b), ()]


def test_evaluate_constant_classifier_fills_one_column():
    specs, weights = stub_model([0, 0, 0, 0, 5, 0, 0])
    examples = [FerExample(EMOTIONS[i % 7], np.full((48, 48), i, np.uint8)) for i in range(20)]
    res = evaluate(specs, weights, examples)
    assert res.confusion.sum() == 20
    assert np.count_nonzero(res.confusion.sum(axis=0)) == 1
    assert res.confusion[:, EMOTIONS.index("Surprise")].sum() == 20
    assert res.accuracy == pytest.approx(3 / 20)
    assert "accuracy 0.1500" in res.format()


def test_evaluate_perfect_classifier():
    # dense weights that read the (constant) pixel value and route it to its class
    examples = flat_examples()
    specs = [tc.LayerSpec("flatten"), tc.LayerSpec.dense(48 * 48, 7), tc.LayerSpec("softmax")]
    centres = np.array([(36 * k + 18) / 255 for k in range(7)])
    # logit_k = 2 c_k v - c_k^2 peaks at the centre nearest the pixel value v
    w = np.repeat((2 * centres)[:, None] / 2304, 2304, axis=1).astype(np.float32) * 100
    b = (-(centres**2) * 100).astype(np.float32)
    res = evaluate(specs, [(), (w, b), ()], examples * 3)
    assert res.accuracy == 1.0
    assert np.array_equal(res.confusion, np.diag(np.full(7, 3)))


def test_evaluate_empty():
    specs, weights = stub_model(np.zeros(7))
    with pytest.raises(ValueError):
        evaluate(specs, weights, [])


def subset_200():
    rng = np.random.default_rng(0)
    out = []
    for i in range(200):
        k = i % 7
        img = np.clip(36 * k + 18 + rng.integers(-12, 13, (48, 48)), 0, 255).astype(np.uint8)
        out.append(FerExample(EMOTIONS[k], img))
    return out


def test_loss_drops_after_one_epoch():
    specs, weights = build_model(42)
    examples = subset_200()
    before = mean_loss(specs, weights, examples)
    after_weights, history = train(specs, weights, examples, epochs=1)
    assert mean_loss(specs, after_weights, examples) < before
    assert len(history) == 1 and history[0].epoch == 1


def test_training_is_deterministic():
    examples = subset_200()[:24]
    runs = []
    for _ in range(2):
        specs, weights = build_model(3)
        weights, history = train(specs, weights, examples, epochs=2, batch_size=8, seed=11)
        runs.append((history, weights[-2][0].tobytes()))
    assert runs[0] == runs[1]


def test_train_uses_only_training_split():
    examples = [FerExample("Happy", np.zeros((48, 48), np.uint8), "PublicTest")]
    specs, weights = build_model(0)
    with pytest.raises(ValueError):
        train(specs, weights, examples, epochs=1)


def test_early_stop_callback():
    specs, weights = build_model(0)
    seen = []
    _, history = train(specs, weights, subset_200()[:8], epochs=5, batch_size=4, on_epoch=lambda s, w: seen.append(s.epoch) or s.epoch == 2)
    assert seen == [1, 2] and len(history) == 2


def test_flat_fixture_predicts_each_class(flat_model):
    specs, weights = flat_model["specs"], flat_model["weights"]
    for k, ex in enumerate(flat_examples()):
        assert predict(specs, weights, ex.image).label == EMOTIONS[k]
