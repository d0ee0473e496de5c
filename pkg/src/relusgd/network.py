"""Two-layer ReLU network with a fixed second layer, hinge loss and subgradient.

The network computes ``f(x) = v^T relu(W x)`` where ``W`` (k x d) is the only
trainable object and ``v`` (length k) is fixed at construction. Datasets hold
features scaled into the unit ball and labels in {-1, +1}.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

NORM_SLACK = 1e-12
SEPARATOR_SLACK = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def default_second_layer(k: int) -> np.ndarray:
    """First ``k // 2`` entries +1, the rest -1."""
    if k < 2:
        raise ValueError(f"need k >= 2 hidden units, got {k}")
    h = k // 2
    return np.concatenate([np.ones(h), -np.ones(k - h)])


@dataclass(frozen=True, eq=False)
class Network:
    first_layer: np.ndarray
    second_layer: np.ndarray

    def __post_init__(self):
        W = _frozen(self.first_layer)
        v = _frozen(self.second_layer)
        if W.ndim != 2:
            raise ValueError("first_layer must be a k x d matrix")
        if v.ndim != 1 or v.shape[0] != W.shape[0]:
            raise ValueError(f"second_layer must have length {W.shape[0]}")
        if v.shape[0] < 2:
            raise ValueError("need k >= 2 hidden units")
        if np.any(v == 0) or not (np.any(v > 0) and np.any(v < 0)):
            raise ValueError("second_layer needs non-zero entries of both signs")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(v))):
            raise ValueError("network weights must be finite")
        object.__setattr__(self, "first_layer", W)
        object.__setattr__(self, "second_layer", v)

    @property
    def W(self) -> np.ndarray:
        return self.first_layer

    @property
    def v(self) -> np.ndarray:
        return self.second_layer

    @property
    def k(self) -> int:
        return self.first_layer.shape[0]

    @property
    def d(self) -> int:
        return self.first_layer.shape[1]

    @property
    def v_min(self) -> float:
        return float(np.min(np.abs(self.second_layer)))

    @property
    def positive_units(self) -> np.ndarray:
        return np.flatnonzero(self.second_layer > 0)

    @property
    def negative_units(self) -> np.ndarray:
        return np.flatnonzero(self.second_layer < 0)

    def with_first_layer(self, W) -> "Network":
        return Network(W, self.second_layer)

    @classmethod
    def zeros(cls, k: int, d: int, v=None) -> "Network":
        v = default_second_layer(k) if v is None else v
        return cls(np.zeros((k, d)), v)


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: int

    def __post_init__(self):
        x = _frozen(self.x)
        if x.ndim != 1:
            raise ValueError("x must be a vector")
        if np.linalg.norm(x) > 1 + NORM_SLACK:
            raise ValueError(f"sample norm {np.linalg.norm(x)} exceeds 1")
        if self.y not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.y!r}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", int(self.y))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features ``X`` (n x d) in the unit ball, labels ``y`` in {-1, +1}.

    ``separator`` is an optional witness with ``y_i <w*, x_i> >= 1`` for all i.
    """

    X: np.ndarray
    y: np.ndarray
    separator: Optional[np.ndarray] = None

    def __post_init__(self):
        X = _frozen(self.X)
        y = _frozen(self.y)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be n x d and y of length n")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if X.shape[0] and np.max(np.linalg.norm(X, axis=1)) > 1 + NORM_SLACK:
            raise ValueError("all samples must lie in the unit ball")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.separator is not None:
            w = _frozen(self.separator)
            if w.shape != (X.shape[1],):
                raise ValueError(f"separator must have length {X.shape[1]}")
            if X.shape[0] and np.min(y * (X @ w)) < 1 - SEPARATOR_SLACK:
                raise ValueError("separator does not attain margin 1 on every sample")
            object.__setattr__(self, "separator", w)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.X[i], int(self.y[i]))

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(self.n))

    @classmethod
    def from_samples(cls, samples, separator=None) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("no samples")
        return cls(np.stack([s.x for s in samples]),
                   np.array([s.y for s in samples], dtype=np.float64), separator)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], self.separator)


def with_bias(data: Dataset) -> Dataset:
    """Append a constant-1 coordinate, then rescale back into the unit ball.

    The separator (if any) gets a zero bias weight and is scaled up by the same
    factor, so margins are preserved.
    """
    Xb = np.hstack([data.X, np.ones((data.n, 1))])
    c = np.max(np.linalg.norm(Xb, axis=1))
    sep = None
    if data.separator is not None:
        sep = np.append(data.separator, 0.0) * c
    return Dataset(Xb / c, data.y, sep)


def _check_dim(net: Network, x: np.ndarray):
    if x.shape[-1] != net.d:
        raise ValueError(f"input has dimension {x.shape[-1]}, network expects {net.d}")


def forward(net: Network, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    _check_dim(net, x)
    return float(net.v @ np.maximum(net.W @ x, 0.0))


def scores(net: Network, X) -> np.ndarray:
    """Vectorised :func:`forward` over the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    _check_dim(net, X)
    return np.maximum(X @ net.W.T, 0.0) @ net.v


def predict(net: Network, x) -> int:
    # sgn(0) = +1
    return 1 if forward(net, x) >= 0 else -1


def hinge(z: float) -> float:
    return max(0.0, 1.0 - z)


def margins(net: Network, data: Dataset) -> np.ndarray:
    return data.y * scores(net, data.X)


def empirical_loss(net: Network, data: Dataset) -> float:
    if data.n == 0:
        raise ValueError("empty dataset")
    return float(np.mean(np.maximum(0.0, 1.0 - margins(net, data))))


def classification_error(net: Network, X, y) -> float:
    """Misclassification rate of ``sgn(f)`` on raw arrays (no unit-ball check)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] == 0:
        raise ValueError("empty dataset")
    pred = np.where(scores(net, X) >= 0, 1.0, -1.0)
    return float(np.mean(pred != y))


def training_error(net: Network, data: Dataset) -> float:
    return classification_error(net, data.X, data.y)


def subgradient(net: Network, s: Sample) -> np.ndarray:
    """Hinge-loss subgradient with respect to ``W`` at one sample.

    ``-1{1 - y v^T relu(Wx) > 0} * y * diag(1{Wx >= 0}) v x^T``; the activity
    indicator counts a pre-activation of exactly 0 as active.
    """
    _check_dim(net, s.x)
    z = net.W @ s.x
    if 1.0 - s.y * (net.v @ np.maximum(z, 0.0)) <= 0:
        return np.zeros_like(net.W)
    coeff = s.y * net.v * (z >= 0)
    return -np.outer(coeff, s.x)


def leaky_forward(net: Network, x, alpha: float) -> float:
    if not 0 < alpha < 1:
        raise ValueError(f"leaky factor must lie in (0, 1), got {alpha}")
    x = np.asarray(x, dtype=np.float64)
    _check_dim(net, x)
    z = net.W @ x
    return float(net.v @ np.where(z >= 0, z, alpha * z))


def leaky_scores(net: Network, X, alpha: float) -> np.ndarray:
    if not 0 < alpha < 1:
        raise ValueError(f"leaky factor must lie in (0, 1), got {alpha}")
    Z = np.asarray(X, dtype=np.float64) @ net.W.T
    return np.where(Z >= 0, Z, alpha * Z) @ net.v


def leaky_empirical_loss(net: Network, data: Dataset, alpha: float) -> float:
    if data.n == 0:
        raise ValueError("empty dataset")
    return float(np.mean(np.maximum(0.0, 1.0 - data.y * leaky_scores(net, data.X, alpha))))
