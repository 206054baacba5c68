import numpy as np
import pytest
import scipy.sparse as sp

from windowbench.imbalance import ImbalancePlan, class_weights, rebalance
from windowbench.linear import lr_full_objective

Y28 = np.array([1, 1] + [0] * 8)
X28 = np.arange(20, dtype=float).reshape(10, 2)


def test_two_eight_cases():
    over = rebalance(X28, Y28, ImbalancePlan("oversample", 1))
    under = rebalance(X28, Y28, ImbalancePlan("undersample", 1))
    assert (int(over.y.sum()), int((1 - over.y).sum())) == (8, 8)
    assert (int(under.y.sum()), int((1 - under.y).sum())) == (2, 2)
    w = class_weights(Y28)
    assert set(w[Y28 == 1]) == {2.5} and set(w[Y28 == 0]) == {0.625}


@pytest.mark.parametrize("strategy", ["oversample", "undersample"])
@pytest.mark.parametrize("seed", range(5))
def test_resampling_keeps_rows_paired(strategy, seed):
    rng = np.random.default_rng(seed)
    y = (rng.random(50) < 0.2).astype(int)
    y[:2] = (0, 1)
    X = rng.normal(size=(50, 3))
    out = rebalance(X, y, ImbalancePlan(strategy, seed))
    assert int(out.y.sum()) == int((1 - out.y).sum())
    assert np.array_equal(out.X, X[out.index]) and np.array_equal(out.y, y[out.index])
    again = rebalance(X, y, ImbalancePlan(strategy, seed))
    assert np.array_equal(out.index, again.index)


def test_sparse_and_list_inputs():
    Xs = sp.csr_matrix(X28)
    out = rebalance(Xs, Y28, ImbalancePlan("oversample", 0))
    assert np.array_equal(out.X.toarray(), X28[out.index])
    docs = [np.array([i]) for i in range(10)]
    out = rebalance(docs, Y28, ImbalancePlan("undersample", 0))
    assert [int(d[0]) for d in out.X] == out.index.tolist()


def test_class_weight_objective_equals_duplicated_dataset():
    X = np.array([[0.5, -1.0], [1.5, 0.2], [-0.3, 0.8], [2.0, 1.0]])
    y = np.array([1.0, 0.0, 0.0, 0.0])
    dup = np.array([0, 0, 0, 1, 2, 3])
    for theta in (np.array([0.3, -0.7, 0.1]), np.zeros(3), np.array([-2.0, 1.5, 0.4])):
        f_w = lr_full_objective(theta, X, y, class_weights(y))
        f_d = lr_full_objective(theta, X[dup], y[dup])
        assert abs(f_w - f_d) <= 1e-12


def test_errors():
    with pytest.raises(ValueError):
        ImbalancePlan("smote")
    with pytest.raises(ValueError):
        rebalance(X28, np.zeros(10), ImbalancePlan("oversample"))
    with pytest.raises(ValueError):
        class_weights(np.ones(4))
