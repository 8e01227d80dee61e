import numpy as np
import pytest

from tablascribe.dataset import META_COLUMNS, StrokeDataset, concat, read_csv, write_csv
from tablascribe.features import FEATURE_NAMES
from tablascribe.synth import (DEFAULT_SETS, corpus_dataset, shifted_sets, synth_corpus,
                               write_corpus)


def small(n=6, seed=0, tabla="a"):
    rng = np.random.default_rng(seed)
    labels = (["D", "RT", "RB", "B"] * n)[:n]
    return StrokeDataset(rng.normal(size=(n, 3)), labels, [tabla] * n, ["t"] * n, range(n),
                         [False] * n, feature_names=("x", "y", "z"))


def test_validation():
    with pytest.raises(ValueError, match="unknown labels"):
        StrokeDataset(np.zeros((1, 3)), ["Q"], ["a"], ["t"], [0], [False],
                      feature_names=("x", "y", "z"))
    with pytest.raises(ValueError, match="tabla_set"):
        StrokeDataset(np.zeros((1, 3)), ["D"], [""], ["t"], [0], [False],
                      feature_names=("x", "y", "z"))


def test_subset_and_append_track_parents():
    ds = small()
    grown = ds.append_rows(ds.X[[1, 2]], [1, 2])
    assert grown.synthetic.tolist() == [False] * 6 + [True, True]
    assert grown.parent[-2:].tolist() == [1, 2]
    sub = grown.subset([1, 6, 7])
    assert sub.parent.tolist() == [-1, 0, -1]
    assert sub.labels.tolist() == ["RT", "RT", "RB"]


def test_concat_offsets_parents():
    a = small().append_rows(np.zeros((1, 3)), [0])
    b = small(seed=1, tabla="b").append_rows(np.zeros((1, 3)), [2])
    c = concat([a, b])
    assert len(c) == 14
    assert c.parent[6] == 0 and c.parent[13] == 7 + 2
    with pytest.raises(ValueError):
        concat([a, a.select_features(["x", "y"])])


def test_csv_roundtrip(tmp_path):
    ds = small().append_rows(np.ones((1, 3)) / 3, [3])
    path = tmp_path / "d.csv"
    write_csv(ds, path)
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header[-len(META_COLUMNS):]) == META_COLUMNS
    back = read_csv(path)
    np.testing.assert_array_equal(back.X, ds.X)
    assert back.labels.tolist() == ds.labels.tolist()
    assert back.synthetic.tolist() == ds.synthetic.tolist()
    assert back.feature_names == ("x", "y", "z")


def test_synth_corpus_structure(tmp_path):
    tracks = synth_corpus(strokes_per_class=10, strokes_per_track=15, seed=2)
    assert {t.tabla_set for t in tracks} == {"set1", "set2", "set3"}
    for t in tracks:
        assert len(t.labels) <= 15
        gaps = np.diff(t.onsets)
        assert np.all((gaps >= 0.15) & (gaps <= 0.40))
        assert np.abs(t.clip.samples).max() <= 0.9 + 1e-12
    ds = corpus_dataset(tracks)
    assert ds.X.shape == (120, len(FEATURE_NAMES))
    assert all(v == 30 for v in ds.counts().values())
    again = corpus_dataset(synth_corpus(strokes_per_class=10, strokes_per_track=15, seed=2))
    np.testing.assert_array_equal(again.X, ds.X)
    path = write_corpus(tmp_path, tracks[:2])
    assert (tmp_path / f"{tracks[0].name}.wav").exists()
    assert path.endswith("manifest.json")


def test_shifted_sets_scale_treble_energy():
    shifted = shifted_sets(0.2, 1)
    assert shifted[0] == DEFAULT_SETS[0]
    assert shifted[1].treble_gain ** 2 == pytest.approx(0.2)
