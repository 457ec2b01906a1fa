"""Online-supervised backlog classifier trained on delayed estimator labels."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .neural import GRUNetwork, ShapeError, cross_entropy, make_optimizer


class TrafficPredictor(BaseEstimator):
    """GRU classifier over backlog values ``0..max_backlog``.

    Each ``partial_fit`` call stores one (window, label) pair in a ring buffer
    and takes one optimizer step on a random minibatch drawn from it.
    """

    def __init__(self, max_backlog=600, window=20, n_features=9, hidden=(128, 128), dense=128,
                 lr=1e-4, batch_size=32, buffer_size=10000, optimizer="adam", seed=None):
        self.max_backlog = max_backlog
        self.window = window
        self.n_features = n_features
        self.hidden = hidden
        self.dense = dense
        self.lr = lr
        self.batch_size = batch_size
        self.buffer_size = buffer_size
        self.optimizer = optimizer
        self.seed = seed

    def initialize(self):
        seeds = np.random.SeedSequence(self.seed).spawn(2)
        self.net_ = GRUNetwork(self.n_features, self.max_backlog + 1, "softmax",
                               tuple(self.hidden), self.dense, seed=seeds[0])
        self.opt_ = make_optimizer(self.optimizer, self.net_.params.size, self.lr)
        self.rng_ = np.random.default_rng(seeds[1])
        self.windows_ = np.zeros((self.buffer_size, self.window, self.n_features))
        self.labels_ = np.zeros(self.buffer_size, dtype=np.int64)
        self.inserted_ = 0
        self.updates_ = 0
        return self

    @property
    def is_initialized(self):
        return hasattr(self, "net_")

    @property
    def buffered(self):
        return min(self.inserted_, self.buffer_size)

    def _check_windows(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3 or X.shape[1:] != (self.window, self.n_features):
            raise ShapeError(f"expected windows of shape ({self.window}, {self.n_features}), "
                             f"got {X.shape}")
        return X

    def _check_labels(self, y):
        y = np.asarray(y)
        if np.any(y != np.rint(y)) or np.any(y < 0) or np.any(y > self.max_backlog):
            raise ValueError(f"labels must be integers in [0, {self.max_backlog}]")
        return y.astype(np.int64)

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        return self.net_.forward(self._check_windows(X))

    def predict(self, X):
        # np.argmax returns the first maximum, i.e. the smallest backlog on ties
        return np.argmax(self.predict_proba(X), axis=1)

    def loss_and_grad(self, X, y):
        """Mean cross-entropy of a batch and its parameter gradient."""
        probs = self.predict_proba(X)
        loss, d_logits = cross_entropy(probs, self._check_labels(y))
        self.net_.backward(grad_logits=d_logits)
        return loss, self.net_.grad.copy()

    def store(self, window, label):
        label = int(self._check_labels([label])[0])
        i = self.inserted_ % self.buffer_size
        self.windows_[i] = self._check_windows(window)[0]
        self.labels_[i] = label
        self.inserted_ += 1

    def update(self):
        """One optimizer step on a minibatch from the buffer; None until it is full enough."""
        n = self.buffered
        if n < self.batch_size:
            return None
        idx = self.rng_.integers(0, n, size=self.batch_size)
        loss, grad = self.loss_and_grad(self.windows_[idx], self.labels_[idx])
        self.opt_.step(self.net_.params, grad)
        self.updates_ += 1
        return loss

    def partial_fit(self, window, label):
        if not self.is_initialized:
            self.initialize()
        self.store(window, label)
        return self.update()

    def fit(self, X, y, n_updates=None):
        """Fill the buffer from ``(X, y)`` then run ``n_updates`` minibatch steps."""
        self.initialize()
        X = self._check_windows(X)
        y = self._check_labels(y)
        if len(X) != len(y):
            raise ValueError("X and y lengths differ")
        for window, label in zip(X, y):
            self.store(window, label)
        for _ in range(len(X) if n_updates is None else n_updates):
            self.update()
        return self

    def save(self, path):
        self.net_.save(path, seed=self.seed, extra={"updates": self.updates_})

    def load_weights(self, path):
        if not self.is_initialized:
            self.initialize()
        loaded = GRUNetwork.load(path)
        if loaded.spec != self.net_.spec:
            raise ValueError("predictor checkpoint does not match the configuration")
        self.net_.params[...] = loaded.params
        return self
