import numpy as np
import pytest

from wac.estimator import (
    L1LogisticRegression,
    logistic_loss_grad,
    sigmoid,
    soft_threshold,
)


def finite_difference_grad(w, b, X, y, l1=0.0, h=1e-6):
    """Central-difference oracle for the smooth part of the loss."""
    d = len(w)
    grad_w = np.empty(d)
    for i in range(d):
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        lp, _, _ = logistic_loss_grad(wp, b, X, y, l1)
        lm, _, _ = logistic_loss_grad(wm, b, X, y, l1)
        grad_w[i] = (lp - lm) / (2 * h)
    lp, _, _ = logistic_loss_grad(w, b + h, X, y, l1)
    lm, _, _ = logistic_loss_grad(w, b - h, X, y, l1)
    return grad_w, (lp - lm) / (2 * h)


def separable_data(n=400, d=20, seed=42):
    """One informative dimension (+-1 plus jitter), the rest pure noise."""
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.ones(n // 2), np.zeros(n - n // 2)])
    X = rng.normal(size=(n, d))
    X[:, 0] = np.where(y == 1, 1.0, -1.0) + 0.1 * rng.normal(size=n)
    return X, y


class TestSigmoidAndProx:
    def test_sigmoid_midpoint_and_stability(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5
        extremes = sigmoid(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(extremes))
        assert extremes[0] == 0.0 and extremes[1] == 1.0

    def test_soft_threshold(self):
        v = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
        np.testing.assert_allclose(soft_threshold(v, 1.0), [-2.0, 0.0, 0.0, 0.0, 2.0])


class TestLossAndGradient:
    def test_loss_at_zero_is_ln2(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 6))
        y = (rng.random(50) < 0.5).astype(float)
        loss, _, _ = logistic_loss_grad(np.zeros(6), 0.0, X, y, 0.0)
        assert loss == pytest.approx(np.log(2), abs=1e-12)

    def test_l1_term_adds_exactly(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 4))
        y = (rng.random(30) < 0.5).astype(float)
        w = rng.normal(size=4)
        smooth, _, _ = logistic_loss_grad(w, 0.3, X, y, 0.0)
        penalized, _, _ = logistic_loss_grad(w, 0.3, X, y, 0.05)
        assert penalized == pytest.approx(smooth + 0.05 * np.abs(w).sum(), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(80, 10))
        y = (rng.random(80) < 0.5).astype(float)
        w = rng.normal(scale=0.5, size=10)
        b = 0.2
        _, gw, gb = logistic_loss_grad(w, b, X, y, 0.0)
        fw, fb = finite_difference_grad(w, b, X, y)
        rel = np.linalg.norm(np.append(gw - fw, gb - fb)) / np.linalg.norm(np.append(gw, gb))
        assert rel < 1e-5

    def test_shape_mismatch_raises(self):
        X = np.zeros((4, 3))
        y = np.zeros(4)
        with pytest.raises(ValueError, match="weights"):
            logistic_loss_grad(np.zeros(2), 0.0, X, y, 0.0)
        with pytest.raises(ValueError, match="inconsistent"):
            logistic_loss_grad(np.zeros(3), 0.0, X, np.zeros(5), 0.0)

    def test_non_binary_labels_raise(self):
        with pytest.raises(ValueError, match="0/1"):
            logistic_loss_grad(np.zeros(2), 0.0, np.zeros((2, 2)), np.array([0.0, 2.0]), 0.0)


class TestFit:
    def test_zero_epoch_budget_returns_zero_model(self):
        X, y = separable_data()
        est = L1LogisticRegression(max_epochs=0).fit(X, y)
        np.testing.assert_array_equal(est.coef_, np.zeros(X.shape[1]))
        assert est.intercept_ == 0.0
        np.testing.assert_allclose(est.predict_proba(X)[:, 1], 0.5)

    def test_separable_data_high_accuracy(self):
        X, y = separable_data()
        est = L1LogisticRegression(l1=1e-4, max_epochs=500).fit(X, y)
        assert est.score(X, y) >= 0.99

    def test_strong_l1_zeroes_noise_dims(self):
        X, y = separable_data()
        est = L1LogisticRegression(l1=0.1, max_epochs=500).fit(X, y)
        assert np.all(np.abs(est.coef_[1:]) < 1e-3)
        assert est.coef_[0] > 0.1

    def test_loss_history_non_increasing(self):
        X, y = separable_data(seed=5)
        est = L1LogisticRegression(l1=0.01, max_epochs=200).fit(X, y)
        diffs = np.diff(est.loss_history_)
        assert np.all(diffs <= est.tol)

    def test_sparsity_monotone_in_l1(self):
        X, y = separable_data(n=200, d=15, seed=9)
        zeros = []
        for lam in (1e-4, 1e-2, 0.2):
            est = L1LogisticRegression(l1=lam, max_epochs=400).fit(X, y)
            zeros.append(int(np.sum(est.coef_ == 0.0)))
        assert zeros[0] <= zeros[1] <= zeros[2]

    def test_fit_is_deterministic(self):
        X, y = separable_data(seed=3)
        a = L1LogisticRegression(l1=0.01).fit(X, y)
        b = L1LogisticRegression(l1=0.01).fit(X, y)
        np.testing.assert_array_equal(a.coef_, b.coef_)
        assert a.intercept_ == b.intercept_

    def test_predict_before_fit_raises(self):
        with pytest.raises(ValueError, match="not fitted"):
            L1LogisticRegression().predict(np.zeros((1, 2)))

    def test_invalid_params_raise(self):
        X, y = separable_data(n=20, d=3)
        with pytest.raises(ValueError, match="nonnegative"):
            L1LogisticRegression(l1=-1.0).fit(X, y)
        with pytest.raises(ValueError, match="tol"):
            L1LogisticRegression(tol=0.0).fit(X, y)


class TestEstimatorApi:
    def test_get_params_reconstructs_equivalent_estimator(self):
        est = L1LogisticRegression(l1=0.5, max_epochs=7, tol=1e-4)
        clone = L1LogisticRegression(**est.get_params())
        assert clone.get_params() == est.get_params()

    def test_set_params_chains_and_validates(self):
        est = L1LogisticRegression().set_params(l1=0.2).set_params(max_epochs=3)
        assert est.l1 == 0.2 and est.max_epochs == 3
        with pytest.raises(ValueError, match="invalid parameter"):
            est.set_params(learning_rate=1.0)

    def test_predict_proba_columns_sum_to_one(self):
        X, y = separable_data(n=50, d=4, seed=8)
        est = L1LogisticRegression(max_epochs=50).fit(X, y)
        proba = est.predict_proba(X)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        assert proba.shape == (50, 2)
