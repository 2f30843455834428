import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import TABLE_I, cross_pattern, inverted_cross, noise, table_i_counts, table_i_csv
from streetpulse.census import (
    CensusFormatError,
    CityEmotionCounts,
    Pipeline,
    export_csv,
    frame_files,
    import_csv,
    iter_frames,
    merge_counts,
    parse_manifest,
    process_city,
)
from streetpulse.emotion import EMOTIONS
from streetpulse.imageio import save_pgm, save_ppm

count_maps = st.dictionaries(st.sampled_from(EMOTIONS), st.integers(0, 500))


def frame_with(pattern, x, y, seed):
    frame = noise(np.random.default_rng(seed), 96, 96)
    if pattern is not None:
        frame[y : y + 48, x : x + 48] = pattern
    return frame


@pytest.fixture(scope="module")
def pipeline(cross_detector, pattern_classifier):
    specs, weights = pattern_classifier
    return Pipeline(cross_detector, specs, weights)


@pytest.fixture(scope="module")
def mixed_frames():
    # Happy, nothing, Sad, Happy, Sad, nothing
    layout = [(cross_pattern(), 0, 0), (None, 0, 0), (inverted_cross(), 48, 24), (cross_pattern(), 16, 40), (inverted_cross(), 8, 8), (None, 0, 0)]
    return [frame_with(p, x, y, seed) for seed, (p, x, y) in enumerate(layout)]


def test_counts_normalized_to_all_emotions():
    c = CityEmotionCounts.of("Kiev", {"Happy": 2})
    assert list(c.counts) == list(EMOTIONS)
    assert c.counts["Sad"] == 0 and c.happy == 2 and c.faces_processed == 2


def test_counts_validation():
    with pytest.raises(ValueError):
        CityEmotionCounts("Kiev", {"Happy": 2}, 3)
    with pytest.raises(ValueError):
        CityEmotionCounts.of("Kiev", {"Joy": 1})
    with pytest.raises(ValueError):
        CityEmotionCounts.of("Kiev", {"Happy": -1})
    with pytest.raises(ValueError):
        CityEmotionCounts.of("")
    with pytest.raises(ValueError):
        CityEmotionCounts.of("Ki\nev")


def test_empty_frame_sequence(pipeline):
    r = process_city("Oslo", [], pipeline)
    assert r.faces_processed == 0 and not any(r.counts.values())


def test_frames_without_detections(pipeline):
    r = process_city("Oslo", [frame_with(None, 0, 0, s) for s in range(3)], pipeline)
    assert r == CityEmotionCounts.of("Oslo")


def test_planted_happy_frames(pipeline):
    frames = [frame_with(cross_pattern(), x, y, s) for s, (x, y) in enumerate([(0, 0), (48, 48), (24, 16)])]
    r = process_city("Fixture", frames, pipeline)
    assert r.counts == {e: (3 if e == "Happy" else 0) for e in EMOTIONS}
    assert r.faces_processed == 3


def test_mixed_frames(pipeline, mixed_frames):
    r = process_city("Fixture", mixed_frames, pipeline)
    assert (r.counts["Happy"], r.counts["Sad"], r.faces_processed) == (2, 2, 4)


def test_max_faces_keeps_first_in_order(pipeline, mixed_frames):
    r = process_city("Fixture", mixed_frames, pipeline, max_faces=3)
    assert (r.counts["Happy"], r.counts["Sad"], r.faces_processed) == (2, 1, 3)
    with pytest.raises(ValueError):
        process_city("Fixture", mixed_frames, pipeline, max_faces=0)


def test_jobs_do_not_change_counts(pipeline, mixed_frames):
    serial = process_city("Fixture", mixed_frames, pipeline)
    assert process_city("Fixture", mixed_frames, pipeline, jobs=3) == serial
    assert process_city("Fixture", mixed_frames, pipeline, max_faces=3, jobs=4) == process_city("Fixture", mixed_frames, pipeline, max_faces=3)


@pytest.mark.parametrize("cuts", [(1,), (2, 4), (1, 3, 5), (3,)])
def test_partition_then_merge(pipeline, mixed_frames, cuts):
    whole = process_city("Fixture", mixed_frames, pipeline)
    bounds = (0,) + cuts + (len(mixed_frames),)
    parts = [process_city("Fixture", mixed_frames[a:b], pipeline) for a, b in zip(bounds, bounds[1:])]
    merged = parts[0]
    for p in parts[1:]:
        merged = merge_counts(merged, p)
    assert merged == whole


def test_merge_example():
    a = CityEmotionCounts.of("Kiev", {"Happy": 2, "Fear": 1})
    b = CityEmotionCounts.of("Kiev", {"Happy": 3})
    assert merge_counts(a, b) == CityEmotionCounts.of("Kiev", {"Happy": 5, "Fear": 1})
    with pytest.raises(ValueError):
        merge_counts(a, CityEmotionCounts.of("Oslo"))


@given(count_maps, count_maps)
def test_merge_identity_and_commutativity(x, y):
    a, b = CityEmotionCounts.of("C", x), CityEmotionCounts.of("C", y)
    assert merge_counts(a, CityEmotionCounts.of("C")) == a
    assert merge_counts(a, b) == merge_counts(b, a)
    assert merge_counts(a, b).faces_processed == a.faces_processed + b.faces_processed


def test_export_table_i():
    text = export_csv(table_i_counts())
    lines = text.split("\n")
    assert lines[0] == "city,emotion,value"
    for row in ["Barcelona,Anger,2", "Barcelona,Disgust,0", "Barcelona,Surprise,90", "Barcelona,Fear,203", "Barcelona,Happy,5"]:
        assert row in lines
    for city in TABLE_I:
        assert f"{city},Sad,0" in lines and f"{city},Neutral,0" in lines
    assert len(lines) == 1 + 8 * 7 + 1 and lines[-1] == ""


def test_export_empty():
    assert export_csv([]) == "city,emotion,value\n"


def test_import_table_i_transcription():
    rows = import_csv(table_i_csv())
    assert [r.city for r in rows] == list(TABLE_I)
    assert [r.happy for r in rows] == [5, 7, 4, 2, 8, 0, 5, 3]
    assert all(r.faces_processed == 300 for r in rows)
    assert rows == table_i_counts()


@given(st.lists(st.tuples(st.text(st.characters(blacklist_categories=("Cs", "Cc", "Z")) | st.just(" "), min_size=1, max_size=12).filter(str.isprintable), count_maps), max_size=5, unique_by=lambda t: t[0]))
def test_csv_round_trip(rows):
    results = [CityEmotionCounts.of(city, counts) for city, counts in rows]
    text = export_csv(results)
    assert import_csv(text) == results
    assert export_csv(import_csv(text)) == text


@pytest.mark.parametrize(
    "body, message",
    [
        ("Paris,Joy,1\n", "unknown emotion"),
        ("Paris,Happy\n", "malformed"),
        ("Paris,Happy,x\n", "malformed"),
        ("Paris,Happy,-1\n", "negative"),
        ("Paris,Happy,1\nParis,Happy,2\n", "duplicate"),
    ],
)
def test_import_errors(body, message):
    with pytest.raises(CensusFormatError, match=message):
        import_csv("city,emotion,value\n" + body)


def test_import_bad_header():
    with pytest.raises(CensusFormatError):
        import_csv("town,emotion,value\n")
    with pytest.raises(CensusFormatError):
        import_csv("")


def test_manifest_parsing(tmp_path):
    text = "# census\ncity.New York.dir = frames/ny\ncity.Paris.dir=frames/paris\n\ndetector=det.hfd\nclassifier = cnn.spw\nmax_faces=10\nscale=1.5\n"
    m = parse_manifest(text, tmp_path)
    assert list(m.cities) == ["New York", "Paris"]
    assert m.cities["Paris"] == tmp_path / "frames/paris"
    assert (m.detector, m.max_faces, m.scale, m.stride) == (tmp_path / "det.hfd", 10, 1.5, 8)


@pytest.mark.parametrize(
    "text",
    [
        "detector=a\n",
        "classifier=b\n",
        "detector=a\nclassifier=b\nmax_faces=0\n",
        "detector=a\nclassifier=b\nmax_faces=ten\n",
        "detector=a\nclassifier=b\ncolour=red\n",
        "detector=a\nclassifier=b\njust a line\n",
        "detector=a\nclassifier=b\ncity.X.dir=x\ncity.X.dir=y\n",
        "detector=a\nclassifier=b\nscale=1\n",
    ],
)
def test_manifest_errors(text):
    with pytest.raises(CensusFormatError):
        parse_manifest(text)


def test_frame_files_order_and_reading(tmp_path, caplog):
    rgb = np.zeros((50, 50, 3), np.uint8)
    (tmp_path / "b.ppm").write_bytes(save_ppm(rgb))
    (tmp_path / "a.pgm").write_bytes(save_pgm(np.zeros((50, 50), np.uint8)))
    (tmp_path / "c.pgm").write_bytes(b"P5 1 1 255\n")
    (tmp_path / "notes.txt").write_text("ignored")
    paths = frame_files(tmp_path)
    assert [p.name for p in paths] == ["a.pgm", "b.ppm", "c.pgm"]
    with caplog.at_level(logging.WARNING):
        frames = list(iter_frames(paths))
    assert [f.shape for f in frames] == [(50, 50), (50, 50)]
    assert "c.pgm" in caplog.text
    with pytest.raises(FileNotFoundError):
        frame_files(tmp_path / "missing")
