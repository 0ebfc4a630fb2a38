"""L1-regularized binary logistic regression, trained in-house.

Full-batch proximal gradient descent: gradient step on the mean
cross-entropy, soft-thresholding for the L1 term (bias unpenalized),
backtracking line search against the quadratic majorizer. Deterministic:
no randomness anywhere in the optimizer.

The estimator follows sklearn conventions (params in __init__, fitted
attributes with trailing underscore, get_params/set_params) so it composes
with sklearn tooling without importing it.
"""

from __future__ import annotations

import numpy as np

from .validation import check_binary_labels, check_fitted, check_matrix

PROB_CLAMP = 1e-12


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Proximal operator of t*||.||_1."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def logistic_loss_grad(weights, bias, X, y, l1: float):
    """Objective and gradient of its smooth part.

    loss = mean cross-entropy + l1 * ||weights||_1 (bias unpenalized),
    with probabilities clamped to [1e-12, 1-1e-12] so the loss stays
    finite. The returned gradients cover only the smooth part.

    Returns (loss, grad_weights, grad_bias).
    """
    X = check_matrix(X)
    n, d = X.shape
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (d,):
        raise ValueError(f"weights have shape {weights.shape}, expected ({d},)")
    y = check_binary_labels(y, n)

    z = X @ weights + bias
    p = sigmoid(z)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ce = -np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    loss = ce + l1 * np.abs(weights).sum()

    resid = (p - y) / n
    return loss, X.T @ resid, float(resid.sum())


def _smooth_loss(weights, bias, X, y) -> float:
    z = X @ weights + bias
    pc = np.clip(sigmoid(z), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))


class L1LogisticRegression:
    """Binary logistic regression with L1 penalty on the weights.

    Parameters
    ----------
    l1 : nonnegative penalty strength (lambda).
    max_epochs : full-batch iteration budget; 0 returns the zero model.
    tol : stop when the objective decrease over an epoch falls below this.
    step_init : initial line-search step size.
    step_shrink : backtracking factor in (0, 1).
    max_backtracks : line-search attempts per epoch before giving up.

    Attributes after fit: coef_, intercept_, loss_history_, n_epochs_,
    converged_.
    """

    def __init__(
        self,
        l1: float = 1e-4,
        max_epochs: int = 500,
        tol: float = 1e-8,
        step_init: float = 1.0,
        step_shrink: float = 0.5,
        max_backtracks: int = 60,
    ):
        self.l1 = l1
        self.max_epochs = max_epochs
        self.tol = tol
        self.step_init = step_init
        self.step_shrink = step_shrink
        self.max_backtracks = max_backtracks
        self.coef_ = None
        self.intercept_ = None
        self.loss_history_ = None
        self.n_epochs_ = None
        self.converged_ = None

    # -- sklearn-style plumbing -------------------------------------------

    def get_params(self, deep: bool = True) -> dict:
        return {
            "l1": self.l1,
            "max_epochs": self.max_epochs,
            "tol": self.tol,
            "step_init": self.step_init,
            "step_shrink": self.step_shrink,
            "max_backtracks": self.max_backtracks,
        }

    def set_params(self, **params):
        valid = self.get_params()
        for k, v in params.items():
            if k not in valid:
                raise ValueError(f"invalid parameter {k!r} for L1LogisticRegression")
            setattr(self, k, v)
        return self

    # -- fitting ------------------------------------------------------------

    def fit(self, X, y):
        X = check_matrix(X)
        n, d = X.shape
        y = check_binary_labels(y, n)
        if self.l1 < 0:
            raise ValueError(f"l1 must be nonnegative, got {self.l1}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")

        w = np.zeros(d)
        b = 0.0
        loss, gw, gb = logistic_loss_grad(w, b, X, y, self.l1)
        history = [loss]
        step = self.step_init
        converged = False
        epoch = 0

        for epoch in range(1, self.max_epochs + 1):
            f_w = loss - self.l1 * np.abs(w).sum()
            accepted = False
            step = min(step * 2.0, 1e6)  # probe a larger step each epoch
            for _ in range(self.max_backtracks):
                w_new = soft_threshold(w - step * gw, step * self.l1)
                b_new = b - step * gb
                dw = w_new - w
                db = b_new - b
                f_new = _smooth_loss(w_new, b_new, X, y)
                # majorizer test for the proximal step
                bound = f_w + gw @ dw + gb * db + (dw @ dw + db * db) / (2.0 * step)
                if f_new <= bound + 1e-12:
                    accepted = True
                    break
                step *= self.step_shrink
            if not accepted:
                raise FloatingPointError(
                    "line search failed: objective not decreasing at minimal step"
                )
            w, b = w_new, b_new
            new_loss = f_new + self.l1 * np.abs(w).sum()
            if not np.isfinite(new_loss):
                raise FloatingPointError("non-finite loss during training")
            decrease = loss - new_loss
            loss = new_loss
            history.append(loss)
            if decrease < self.tol:
                converged = True
                break
            _, gw, gb = logistic_loss_grad(w, b, X, y, self.l1)

        self.coef_ = w
        self.intercept_ = b
        self.loss_history_ = history
        self.n_epochs_ = epoch
        self.converged_ = converged
        return self

    # -- inference ------------------------------------------------------------

    def decision_function(self, X) -> np.ndarray:
        check_fitted(self, "coef_")
        X = check_matrix(X)
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        p1 = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.0).astype(np.int64)

    def score(self, X, y) -> float:
        y = check_binary_labels(y)
        return float(np.mean(self.predict(X) == y))
