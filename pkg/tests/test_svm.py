import numpy as np
import pytest

from breathauth.errors import ShapeMismatch, SingleClassInput
from breathauth.svm import LinearSvmModel, all_pairs, decision_values, svm_predict, svm_predict_batch, svm_train


def _toy(n_users=2, per=20, seed=0):
    rng = np.random.default_rng(seed)
    X = 0.05 * rng.normal(size=(n_users * per, 2, n_users))
    y = np.repeat(np.arange(n_users), per)
    for u in range(n_users):
        X[y == u, 0, u] += 1.0
    return X, y


def test_toy_separable():
    X, y = _toy()
    m = svm_train(X, y, epochs=10)
    assert np.mean(svm_predict_batch(m, X) == y) == 1.0


def test_classifier_count():
    assert len(all_pairs(10)) == 45
    X, y = _toy(5)
    m = svm_train(X, y, epochs=5)
    assert m.num_classifiers == 10
    assert np.mean(svm_predict_batch(m, X) == y) == 1.0


def test_scale_invariance_of_signs():
    X, y = _toy(3, seed=2)
    a = svm_train(X, y, C=1.0, epochs=5, seed=1)
    b = svm_train(2 * X, y, C=1.0, epochs=5, seed=1)
    # standardization removes the scale, so decisions agree
    assert np.array_equal(np.sign(decision_values(a, X)), np.sign(decision_values(b, 2 * X)))


def _voting_model(pair_winners, n):
    # one-dimensional inputs; each classifier outputs a fixed sign
    pairs = all_pairs(n)
    bias = np.array([1.0 if pair_winners(a, b) == a else -1.0 for a, b in pairs])
    return LinearSvmModel(pairs, np.zeros((len(pairs), 1)), bias, n, 1, 1)


def test_tie_goes_to_lowest_user():
    # users 1, 4 and 7 each win the same number of votes
    top = {1, 4, 7}
    def win(a, b):
        if a in top and b in top:
            return {(1, 4): 4, (1, 7): 1, (4, 7): 7}[(a, b)]
        return a if a in top else b if b in top else a
    m = _voting_model(win, 9)
    assert svm_predict(m, np.zeros((1, 1))) == 1


def test_all_votes_for_one_user():
    m = _voting_model(lambda a, b: 3 if 3 in (a, b) else a, 6)
    assert svm_predict(m, np.zeros((1, 1))) == 3


def test_shape_mismatch():
    X, y = _toy()
    m = svm_train(X, y, epochs=2)
    with pytest.raises(ShapeMismatch):
        svm_predict_batch(m, np.zeros((1, 3, 2)))


def test_single_class_rejected():
    with pytest.raises(SingleClassInput):
        svm_train(np.zeros((4, 2, 3)), np.zeros(4, dtype=int))


def test_deterministic():
    X, y = _toy(3)
    a = svm_train(X, y, epochs=3, seed=5)
    b = svm_train(X, y, epochs=3, seed=5)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
