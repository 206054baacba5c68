import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from windowbench.features import (
    SparseVector,
    binary_matrix,
    count_matrix,
    encode_binary_bow,
    encode_count_bow,
    encode_tfidf,
    fit_idf,
    normalize,
    stack,
    tfidf_matrix,
)
from windowbench.text import Vocabulary, build_vocab

KPH = Vocabulary(("knee", "pain", "hip"), (1, 1, 1), 1, None)


def test_sparse_vector_invariants():
    v = SparseVector.from_dict(5, {3: 2.0, 1: 0.0, 0: 1.0})
    assert v.indices.tolist() == [0, 3] and v.to_dict() == {0: 1.0, 3: 2.0}
    with pytest.raises(ValueError):
        SparseVector(3, np.array([1, 0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        SparseVector(3, np.array([3]), np.array([1.0]))
    with pytest.raises(ValueError):
        stack([SparseVector.from_dense([1.0]), SparseVector.from_dense([1.0, 2.0])])


def test_bow_examples():
    assert encode_binary_bow(["knee", "pain", "knee"], KPH).to_dict() == {0: 1.0, 1: 1.0}
    assert encode_count_bow(["knee", "pain", "knee"], KPH).to_dict() == {0: 2.0, 1: 1.0}
    assert encode_binary_bow([], KPH).nnz == 0
    assert encode_count_bow(["elbow", "wrist"], KPH).nnz == 0


@given(st.lists(st.lists(st.sampled_from(["knee", "pain", "hip", "oov"]), max_size=15), min_size=1, max_size=8))
def test_binary_is_sign_of_count(docs):
    C = count_matrix(docs, KPH).toarray()
    B = binary_matrix(count_matrix(docs, KPH)).toarray()
    assert np.array_equal(B, np.sign(C)) and np.all(B <= C)


def _two_doc():
    docs = [["a", "b"], ["a"]]
    vocab = build_vocab(docs, min_df=1, reserved=())
    return docs, vocab, count_matrix(docs, vocab)


def test_idf_formula_cases():
    _, vocab, C = _two_doc()
    idf = fit_idf(C, vocab)
    assert idf.weights[vocab.index["a"]] == 1.0
    assert abs(idf.weights[vocab.index["b"]] - 1.405465) < 1e-6
    padded = sp.hstack([C, sp.csr_matrix((2, 1))]).tocsr()
    assert fit_idf(padded, 3).weights[2] == pytest.approx(math.log(3) + 1, abs=1e-15)
    with pytest.raises(ValueError):
        fit_idf(sp.csr_matrix((0, 3)), 3)


def test_tfidf_two_doc_fixture():
    _, vocab, C = _two_doc()
    idf = fit_idf(C, vocab)
    ia, ib = vocab.index["a"], vocab.index["b"]
    raw = tfidf_matrix(C, idf, "none").toarray()[0]
    l2 = tfidf_matrix(C, idf, "l2").toarray()[0]
    assert raw[ia] == 1.0 and abs(raw[ib] - 1.405465) < 1e-6
    # l2 pair derived from the raw pair: (1, ln 1.5 + 1) / hypot(1, ln 1.5 + 1)
    r = math.log(1.5) + 1
    assert l2[ia] == pytest.approx(1 / math.hypot(1, r), abs=1e-15)
    assert l2[ib] == pytest.approx(r / math.hypot(1, r), abs=1e-15)
    assert abs(l2[ia] - 0.579739) < 1e-6 and abs(l2[ib] - 0.814802) < 1e-6


def test_tfidf_empty_doc_and_norm_none_identity():
    _, vocab, C = _two_doc()
    idf = fit_idf(C, vocab)
    empty = SparseVector(len(vocab), np.zeros(0, np.int64), np.zeros(0))
    for norm in ("none", "l1", "l2"):
        assert encode_tfidf(empty, idf, norm).nnz == 0
    row = encode_count_bow(["a", "b", "b"], vocab)
    assert np.array_equal(encode_tfidf(row, idf, "none").to_dense(), row.to_dense() * idf.weights)
    with pytest.raises(ValueError):
        normalize(row, "l3")


def test_sparse_encodings_match_dense_reference():
    rng = np.random.default_rng(7)
    tokens = [f"t{i}" for i in range(40)]
    docs = [list(rng.choice(tokens, size=int(rng.integers(0, 30)))) for _ in range(25)]
    vocab = build_vocab(docs, min_df=1, max_size=None, reserved=())
    C = count_matrix(docs, vocab)
    dense = np.zeros((len(docs), len(vocab)))
    for i, d in enumerate(docs):
        for t in d:
            dense[i, vocab.index[t]] += 1
    assert np.array_equal(C.toarray(), dense)
    idf = fit_idf(C, vocab)
    df = (dense > 0).sum(0)
    want_idf = np.log((1 + len(docs)) / (1 + df)) + 1
    assert np.allclose(idf.weights, want_idf, rtol=0, atol=1e-15)
    raw = dense * want_idf
    for norm, scale in (("none", None), ("l1", np.abs(raw).sum(1)), ("l2", np.sqrt((raw**2).sum(1)))):
        want = raw if scale is None else raw / np.where(scale == 0, 1, scale)[:, None]
        got = tfidf_matrix(C, idf, norm).toarray()
        assert np.allclose(got, want, rtol=0, atol=1e-14)
        per_row = np.array([encode_tfidf(encode_count_bow(d, vocab), idf, norm).to_dense() for d in docs])
        assert np.allclose(per_row, want, rtol=0, atol=1e-14)
    l2 = tfidf_matrix(C, idf, "l2").toarray()
    norms = np.sqrt((l2**2).sum(1))
    assert np.allclose(norms[dense.sum(1) > 0], 1.0, atol=1e-12)


def test_count_vectors_nest_across_windows(tmp_path):
    from windowbench.dataset import prepare_dataset
    from windowbench.ehr import CohortCriteria, ObservationWindow, load_corpus
    from windowbench.synth import SynthConfig, generate

    generate(SynthConfig(n_patients=60, seed=3), tmp_path)
    ds = prepare_dataset(load_corpus(tmp_path), CohortCriteria(), seed=0)
    w3, w12 = ObservationWindow.parse("3"), ObservationWindow.parse("12")
    docs = [ds.document(e, w, "notes") for e in ds.examples for w in (w3, w12)]
    vocab = build_vocab(docs, min_df=1, max_size=None)
    C = count_matrix(docs, vocab).toarray()
    assert np.all(C[0::2] <= C[1::2])
