import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepnet.data import (
    Dataset,
    OutOfVocabularyWarning,
    SyntheticSpec,
    Vocabulary,
    fit_vocabulary,
    generate,
    generate_documents,
    generate_split,
    load_csv,
    read_corpus,
    train_test_split,
    transform_counts,
    write_corpus,
    write_csv,
)
from deepnet.errors import DataError, ParseError, SchemaError

from oracles import count_tokens

HAND_DOCS = ["1 5 5", "5 2"]


def test_load_csv_nan_rule(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,c,label\n1.5,NaN,,x\nnan,2,NAN,y\n  ,3e2,-1,x\n")
    ds = load_csv(p, "label")
    assert ds.features.tolist() == [[1.5, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 300.0, -1.0]]
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.class_names == ["x", "y"]
    assert ds.feature_names == ["a", "b", "c"]


def test_load_csv_label_encoding(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("label,v\nb,1\nm,2\nb,3\n")
    ds = load_csv(p, "label")
    assert ds.labels.tolist() == [0, 1, 0] and ds.class_names == ["b", "m"]
    fixed = load_csv(p, "label", class_names=["m", "b"])
    assert fixed.labels.tolist() == [1, 0, 1]
    with pytest.raises(DataError):
        load_csv(p, "label", class_names=["b"])


def test_load_csv_header_only(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,label\n")
    with pytest.raises(DataError):
        load_csv(p, "label")


def test_load_csv_missing_label_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        load_csv(p, "label")


def test_load_csv_unparseable_cell_reports_position(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n1,2,x\n3,oops,y\n")
    with pytest.raises(ParseError, match=r"row 3, column 'b'"):
        load_csv(p, "label")


def test_csv_round_trip(tmp_path):
    ds = generate(SyntheticSpec("incident_like", 30, seed=1))
    write_csv(ds, tmp_path / "x.csv")
    back = load_csv(tmp_path / "x.csv", "label", class_names=ds.class_names)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)


def test_vocabulary_hand_example():
    v = fit_vocabulary(HAND_DOCS)
    assert v.index == {"1": 0, "2": 1, "5": 2}


def test_vocabulary_includes_test_only_tokens():
    v = fit_vocabulary(["a b"], ["c"])
    assert "c" in v
    assert "c" not in fit_vocabulary(["a b"], ["c"], train_only=True)


def test_vocabulary_duplicates_add_nothing():
    assert len(fit_vocabulary(["x x x", "x"])) == 1


def test_vocabulary_empty():
    with pytest.raises(DataError):
        fit_vocabulary(["", "  "], [""])


def test_transform_counts_hand_example():
    v = fit_vocabulary(HAND_DOCS)
    assert transform_counts(v, HAND_DOCS).tolist() == [[1, 0, 2], [0, 1, 1]]


def test_transform_counts_empty_doc_and_repeats():
    v = Vocabulary(["a", "b"])
    assert transform_counts(v, ["", "b b b b"]).tolist() == [[0, 0], [0, 4]]


def test_transform_counts_warns_on_oov():
    with pytest.warns(OutOfVocabularyWarning, match="2 out-of-vocabulary"):
        out = transform_counts(Vocabulary(["a"]), ["a z z"])
    assert out.tolist() == [[1.0]]


def test_transform_matches_sklearn_count_vectorizer():
    sk = pytest.importorskip("sklearn.feature_extraction.text")
    docs, _, _ = generate_documents(SyntheticSpec("malware_like", 40, seed=3))
    cv = sk.CountVectorizer(tokenizer=str.split, token_pattern=None, lowercase=False)
    ref = cv.fit_transform(docs).toarray()
    v = fit_vocabulary(docs)
    assert v.tokens == list(cv.get_feature_names_out())
    assert np.array_equal(transform_counts(v, docs), ref)


token = st.sampled_from(["10", "22", "305", "4", "51"])
doc = st.lists(token, max_size=8).map(" ".join)


@given(st.lists(doc, min_size=1, max_size=6), st.randoms())
def test_counts_order_insensitive_and_match_oracle(docs, random):
    vocab = Vocabulary(["10", "22", "305", "4", "51"])
    counts = transform_counts(vocab, docs)
    assert np.array_equal(counts, count_tokens(vocab.tokens, docs))
    shuffled = []
    for d in docs:
        toks = d.split()
        random.shuffle(toks)
        shuffled.append(" ".join(toks))
    assert np.array_equal(counts, transform_counts(vocab, shuffled))
    assert counts.sum(axis=1).tolist() == [len(d.split()) for d in docs]


def test_corpus_round_trip(tmp_path):
    docs = ["1 2", "", "3"]
    write_corpus(docs, tmp_path / "c.txt")
    assert read_corpus(tmp_path / "c.txt") == docs


def test_generate_incident_shape():
    ds = generate(SyntheticSpec("incident_like", 1000, seed=7))
    assert ds.features.shape == (1000, 9)
    assert set(np.unique(ds.labels)) <= {0, 1}


@pytest.mark.parametrize("task,d,k", [("incident_like", 9, 2), ("fraud_like", 12, 3)])
def test_generate_dims(task, d, k):
    ds = generate(SyntheticSpec(task, 50, seed=2))
    assert ds.n_features == d and ds.num_classes == k


def test_generate_malware_vocab_and_docs():
    spec = SyntheticSpec("malware_like", 200, seed=4, vocab_size=100)
    docs, labels, universe = generate_documents(spec)
    assert len(docs) == 200 and len(universe) == 100
    lo, hi = spec.doc_length
    assert all(lo <= len(d.split()) <= hi for d in docs)
    ds = generate(spec)
    assert ds.n_features <= 100 and ds.num_classes == 2


@pytest.mark.parametrize("task", ["incident_like", "fraud_like", "malware_like"])
def test_generate_deterministic(task):
    a = generate(SyntheticSpec(task, 60, seed=9))
    b = generate(SyntheticSpec(task, 60, seed=9))
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
    c = generate(SyntheticSpec(task, 60, seed=10))
    assert not np.array_equal(a.features, c.features) or not np.array_equal(a.labels, c.labels)


@pytest.mark.parametrize("task", ["incident_like", "fraud_like", "malware_like"])
def test_generated_priors_within_three_sigma(task):
    spec = SyntheticSpec(task, 3000, seed=5)
    ds = generate(spec)
    n = ds.n_samples
    for c, p in enumerate(spec.class_priors):
        count = np.sum(ds.labels == c)
        assert abs(count - n * p) <= 3 * np.sqrt(n * p * (1 - p))


def test_incident_separation_at_least_four_sigma():
    # class means are INCIDENT_SEPARATION standardized units apart along one direction
    from deepnet.data import INCIDENT_SEPARATION

    spec = SyntheticSpec("incident_like", 20, seed=1)
    assert INCIDENT_SEPARATION / spec.noise >= 4


@pytest.mark.parametrize("kw", [dict(task="nope", n_samples=20), dict(task="fraud_like", n_samples=5),
                                dict(task="fraud_like", n_samples=20, class_priors=(0.5, 0.5, 0.5)),
                                dict(task="fraud_like", n_samples=20, noise=-1.0)])
def test_synthetic_spec_validation(kw):
    with pytest.raises(ValueError):
        SyntheticSpec(**kw)


def test_split_proportions():
    ds = Dataset(np.arange(100.0).reshape(100, 1), [0] * 60 + [1] * 40, ["a", "b"])
    tr, te = train_test_split(ds, 0.3, seed=1)
    assert (tr.n_samples, te.n_samples) == (70, 30)
    assert te.class_counts().tolist() == [18, 12]
    assert sorted(tr.features[:, 0].tolist() + te.features[:, 0].tolist()) == list(range(100))


@given(st.lists(st.integers(0, 2), min_size=10, max_size=80), st.floats(0.1, 0.9), st.integers(0, 1000))
def test_split_partition_and_stratification(labels, frac, seed):
    labels = np.array(labels)
    k = int(labels.max()) + 1
    ds = Dataset(np.arange(len(labels), dtype=float).reshape(-1, 1), labels, [str(i) for i in range(k)])
    try:
        tr, te = train_test_split(ds, frac, seed)
    except DataError:
        return
    ids = sorted(tr.features[:, 0].tolist() + te.features[:, 0].tolist())
    assert ids == list(range(len(labels)))
    for c in range(k):
        n_c = np.sum(labels == c)
        assert abs(np.sum(te.labels == c) - n_c * frac) <= 1


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.2, 1.5])
def test_split_fraction_range(frac):
    ds = generate(SyntheticSpec("incident_like", 20))
    with pytest.raises(ValueError):
        train_test_split(ds, frac)


def test_generate_split_shapes():
    tr, te = generate_split(SyntheticSpec("fraud_like", 100, seed=7))
    assert (tr.n_samples, te.n_samples) == (70, 30)


def test_dataset_rejects_nan():
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan]]), [0], ["a"])
