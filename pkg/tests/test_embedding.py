import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ovsg import embedding as emb
from ovsg.embedding import EmbeddingProvider, EmbeddingSpace, EmbeddingTable, FeatureVec, feature_distance
from ovsg.errors import DimensionMismatchError, SpaceMismatchError, UnencodableTextError


def test_exact_lookup_returns_normalized_table_vector():
    table = EmbeddingTable(EmbeddingSpace("object", 2), {"cup": [3.0, 4.0]})
    p = EmbeddingProvider([table], stub=False)
    v = p.embed("object", "cup")
    assert v.space == "object"
    np.testing.assert_allclose(v.values, [0.6, 0.8])


def test_stub_is_deterministic(stub):
    a = stub.embed(emb.NAME, "Tom")
    b = stub.embed(emb.NAME, "Tom")
    assert np.array_equal(a.values, b.values)
    fresh = EmbeddingProvider(stub=True, stub_seed=42, stub_dim=64)
    assert np.array_equal(a.values, fresh.embed(emb.NAME, "Tom").values)


def test_stub_depends_on_seed():
    a = EmbeddingProvider(stub_seed=1).embed(emb.NAME, "tom")
    b = EmbeddingProvider(stub_seed=2).embed(emb.NAME, "tom")
    assert not np.array_equal(a.values, b.values)


def test_stub_seed_from_environment(monkeypatch):
    monkeypatch.setenv(emb.STUB_SEED_ENV, "9")
    assert EmbeddingProvider().stub_seed == 9
    monkeypatch.delenv(emb.STUB_SEED_ENV)
    assert EmbeddingProvider().stub_seed == 42


def test_nearest_entry_snap_above_floor(data_dir):
    # cos(mug, cup) = 0.8*1 + 0.6*0 = 0.8 >= 0.75
    p = EmbeddingProvider.from_files(
        {"object": data_dir / "object_table.json"}, {"object": data_dir / "object_lexicon.json"}, stub=False
    )
    assert np.array_equal(p.embed("object", "mug").values, p.embed("object", "cup").values)


def test_nearest_entry_below_floor_fails_without_stub(data_dir):
    p = EmbeddingProvider.from_files(
        {"object": data_dir / "object_table.json"},
        {"object": data_dir / "object_lexicon.json"},
        stub=False,
        floor=0.85,
    )
    with pytest.raises(UnencodableTextError, match="object"):
        p.embed("object", "mug")


def test_unknown_text_without_stub_names_space():
    p = EmbeddingProvider(stub=False)
    with pytest.raises(UnencodableTextError, match="abstract"):
        p.embed("abstract", "like")


def test_missing_table_file_names_space(tmp_path):
    with pytest.raises(FileNotFoundError, match="'name'"):
        EmbeddingProvider.from_files({"name": tmp_path / "nope.json"})


def test_table_dimension_is_checked():
    with pytest.raises(DimensionMismatchError):
        EmbeddingTable(EmbeddingSpace("object", 3), {"cup": [1.0, 0.0]})


def test_text_is_normalized_before_lookup(stub):
    assert np.array_equal(stub.embed("object", "Coffee  Cup").values, stub.embed("object", "coffee cup").values)


def test_empty_text_rejected(stub):
    with pytest.raises(ValueError):
        stub.embed("object", "   ")


@pytest.mark.parametrize(
    "a, b, expected",
    [([1, 0], [1, 0], 0.0), ([1, 0], [0, 1], 1.0), ([1, 0], [-1, 0], 2.0)],
)
def test_feature_distance_examples(a, b, expected):
    assert feature_distance(FeatureVec("object", a), FeatureVec("object", b)) == expected


def test_mixed_spaces_raise():
    with pytest.raises(SpaceMismatchError):
        feature_distance(FeatureVec("object", [1, 0]), FeatureVec("name", [1, 0]))


vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4).filter(
    lambda v: math.hypot(*v) > 1e-3
)


@given(vectors, vectors)
def test_feature_distance_symmetric_and_bounded(a, b):
    fa, fb = FeatureVec("object", a), FeatureVec("object", b)
    d = feature_distance(fa, fb)
    assert d == pytest.approx(feature_distance(fb, fa), abs=1e-12)
    assert 0.0 <= d <= 2.0
    assert abs(np.linalg.norm(fa.values) - 1.0) < 1e-6
    assert feature_distance(fa, fa) < 1e-9
