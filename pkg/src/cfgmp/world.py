"""Analytic data worlds: weighted point clouds with closed-form posteriors.

A world is a finite, weighted, labelled point cloud.  Each label defines a
conditional data distribution (the points carrying that label, weights
renormalised within the label) and the whole cloud defines the
unconditional one.  Because the data distributions are finite sums, the
posterior over the data given a noisy state ``x`` at time ``t`` is a
softmax, and the ideal flow-matching velocity, the smoothed squared
distance and the homotopy potential are all exact.

All functions accept a single state of shape ``(d,)`` or a batch of shape
``(..., d)``; ``t`` may be a scalar or an array broadcastable to the batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import WorldError

DEFAULT_T_MIN = 1e-4

_POOLED = None


@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    """Immutable weighted point cloud with one condition label per point.

    Parameters
    ----------
    points : array_like, shape (n, d)
    labels : sequence of str, length n
    weights : array_like, shape (n,), optional
        Positive mass per point, uniform when omitted.  Normalised
        globally for the pooled set and within each label for the
        conditional sets.
    """

    points: np.ndarray
    labels: tuple
    weights: np.ndarray = None
    _subsets: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] == 0 or points.shape[1] == 0:
            raise WorldError(f"points must be a non-empty (n, d) array, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise WorldError("points must be finite")
        n = points.shape[0]

        labels = tuple(str(lab) for lab in self.labels)
        if len(labels) != n:
            raise WorldError(f"got {len(labels)} labels for {n} points")

        if self.weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.array(self.weights, dtype=float).reshape(-1)
            if weights.shape != (n,):
                raise WorldError(f"got {weights.shape[0]} weights for {n} points")
            if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
                raise WorldError("weights must be finite and strictly positive")
            weights = weights / weights.sum()

        points.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)

        subsets = {_POOLED: (points, weights, np.log(weights))}
        label_arr = np.array(labels)
        for lab in dict.fromkeys(labels):
            idx = np.flatnonzero(label_arr == lab)
            sub_p = points[idx]
            sub_w = weights[idx] / weights[idx].sum()
            sub_p.flags.writeable = False
            sub_w.flags.writeable = False
            subsets[lab] = (sub_p, sub_w, np.log(sub_w))
        object.__setattr__(self, "_subsets", subsets)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def label_names(self) -> tuple:
        return tuple(k for k in self._subsets if k is not _POOLED)

    def subset(self, label):
        """Return ``(points, weights)`` for ``label`` (``None`` = pooled set)."""
        points, weights, _ = self._lookup(label)
        return points, weights

    def centroid(self, label=None) -> np.ndarray:
        points, weights = self.subset(label)
        return weights @ points

    def _lookup(self, label):
        try:
            return self._subsets[label]
        except KeyError:
            raise WorldError(
                f"unknown label {label!r}; known labels: {list(self.label_names)}"
            ) from None

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
            "labels": list(self.labels),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LabeledPointCloud":
        """Build a cloud from ``{"dimension", "points", "weights"?, "labels"}``."""
        try:
            dim = int(doc["dimension"])
            points = doc["points"]
            labels = doc["labels"]
        except (KeyError, TypeError, ValueError) as exc:
            raise WorldError(f"malformed cloud document: {exc}") from None
        points = np.array(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != dim:
            raise WorldError(
                f"points have shape {points.shape}, expected (n, {dim}) from 'dimension'"
            )
        return cls(points=points, labels=labels, weights=doc.get("weights"))

    @classmethod
    def load(cls, path) -> "LabeledPointCloud":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# built-in generators


def two_clusters(n_per_cluster=32, separation=4.0, spread=0.5, dimension=2, seed=0):
    """Two isotropic Gaussian blobs centred at -/+ separation/2 on axis 0.

    Points of the left blob carry label ``"A"``, the right blob ``"B"``.
    """
    if n_per_cluster < 1 or dimension < 1:
        raise WorldError("two-clusters needs n_per_cluster >= 1 and dimension >= 1")
    rng = np.random.default_rng(seed)
    center = np.zeros(dimension)
    center[0] = separation / 2.0
    a = -center + spread * rng.standard_normal((n_per_cluster, dimension))
    b = center + spread * rng.standard_normal((n_per_cluster, dimension))
    return LabeledPointCloud(
        points=np.vstack([a, b]), labels=["A"] * n_per_cluster + ["B"] * n_per_cluster
    )


def two_moons(n_per_moon=32, noise=0.05, scale=2.0, seed=0):
    """Interleaving half circles in 2-D; upper moon ``"A"``, lower moon ``"B"``."""
    if n_per_moon < 1:
        raise WorldError("two-moons needs n_per_moon >= 1")
    rng = np.random.default_rng(seed)
    theta = np.linspace(0.0, np.pi, n_per_moon)
    upper = np.column_stack([np.cos(theta), np.sin(theta)])
    lower = np.column_stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)])
    pts = np.vstack([upper, lower]) - np.array([0.5, 0.25])
    pts = scale * pts + noise * rng.standard_normal(pts.shape)
    return LabeledPointCloud(points=pts, labels=["A"] * n_per_moon + ["B"] * n_per_moon)


def ring(n_points=64, radius=2.0, noise=0.05, seed=0):
    """Noisy circle in 2-D; upper half ``"A"``, lower half ``"B"``."""
    if n_points < 2:
        raise WorldError("ring needs n_points >= 2")
    rng = np.random.default_rng(seed)
    theta = 2.0 * np.pi * (np.arange(n_points) + 0.5) / n_points
    pts = radius * np.column_stack([np.cos(theta), np.sin(theta)])
    pts = pts + noise * rng.standard_normal(pts.shape)
    labels = np.where(np.sin(theta) >= 0.0, "A", "B")
    return LabeledPointCloud(points=pts, labels=labels.tolist())


GENERATORS = {
    "two-clusters": two_clusters,
    "two-moons": two_moons,
    "ring": ring,
}


def make_world(generator: str, **params) -> LabeledPointCloud:
    try:
        fn = GENERATORS[generator]
    except KeyError:
        raise WorldError(
            f"unknown generator {generator!r}; choose from {sorted(GENERATORS)}"
        ) from None
    return fn(**params)


# ---------------------------------------------------------------------------
# time handling


def clamp_time(t, t_min=DEFAULT_T_MIN):
    """Clip ``t`` into ``[t_min, 1 - t_min]``."""
    return np.clip(np.asarray(t, dtype=float), t_min, 1.0 - t_min)


def _velocity_time(t, t_min):
    # the velocity is regular at t = 0; only 1/(1-t) needs the guard
    return np.clip(np.asarray(t, dtype=float), 0.0, 1.0 - t_min)


def _check_state(cloud, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != cloud.dimension:
        raise WorldError(
            f"state has trailing dimension {x.shape[-1] if x.ndim else 0}, "
            f"cloud has dimension {cloud.dimension}"
        )
    if np.isnan(x).any():
        raise WorldError("state contains NaN")
    return x


def _sq_dists(x, points, scale):
    # ||x - scale * p_j||^2 for every point, shape (..., n)
    diff = x[..., None, :] - np.asarray(scale)[..., None, None] * points
    return np.sum(diff * diff, axis=-1)


# ---------------------------------------------------------------------------
# posteriors and ideal fields


def _posterior_logits(cloud, label, x, t):
    points, _, log_w = cloud._lookup(label)
    sigma = 1.0 - t
    return log_w - _sq_dists(x, points, t) / (2.0 * sigma * sigma)[..., None]


def posterior_weights(cloud, label, x, t, t_min=DEFAULT_T_MIN):
    """Posterior probabilities over the label's points given ``x`` at ``t``.

    ``softmax_j(log w_j - ||x - t x_j||^2 / (2 (1-t)^2))``, evaluated in
    log space so that small ``1 - t`` cannot underflow every term.
    """
    x = _check_state(cloud, x)
    t = _velocity_time(t, t_min)
    return softmax(_posterior_logits(cloud, label, x, t), axis=-1)


def posterior_mean(cloud, label, x, t, t_min=DEFAULT_T_MIN):
    """Posterior expectation of the clean data point given ``x`` at ``t``."""
    points, _ = cloud.subset(label)
    alpha = posterior_weights(cloud, label, x, t, t_min)
    return np.sum(alpha[..., :, None] * points, axis=-2)


def ideal_velocity(cloud, label, x, t, t_min=DEFAULT_T_MIN):
    """Loss-minimising velocity ``(E[x_1 | x, t] - x) / (1 - t)``.

    ``t`` is clipped to at most ``1 - t_min``.
    """
    x = _check_state(cloud, x)
    t = _velocity_time(t, t_min)
    mean = posterior_mean(cloud, label, x, t, t_min)
    return (mean - x) / (1.0 - t)[..., None]


def smoothed_sq_distance(cloud, label, x, sigma):
    """LogSumExp-smoothed squared distance from ``x`` to the label's points.

    ``-2 sigma^2 log sum_j w_j exp(-||x_j - x||^2 / (2 sigma^2))``; lies
    between the smallest and largest squared distance and tends to the
    smallest one as ``sigma -> 0``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise WorldError(f"smoothing parameter must be positive, got {sigma}")
    x = _check_state(cloud, x)
    points, _, log_w = cloud._lookup(label)
    return _smoothed(points, log_w, x, 1.0, sigma)


def _smoothed(points, log_w, x, scale, sigma):
    s2 = 2.0 * sigma * sigma
    logits = log_w - _sq_dists(x, points, scale) / s2[..., None]
    return -s2 * logsumexp(logits, axis=-1)


def potential_f(cloud, label, x, t, t_min=DEFAULT_T_MIN):
    """Homotopy objective: smoothed distance to the ``t``-scaled cloud minus ``(1-t)||x||^2``.

    ``t`` is clamped to ``[t_min, 1 - t_min]``.
    """
    x = _check_state(cloud, x)
    t = clamp_time(t, t_min)
    points, _, log_w = cloud._lookup(label)
    return _smoothed(points, log_w, x, t, 1.0 - t) - (1.0 - t) * np.sum(x * x, axis=-1)


def potential_gradient(cloud, label, x, t, t_min=DEFAULT_T_MIN):
    """Gradient of :func:`potential_f`, equal to ``-2 t (1-t)`` times the ideal velocity."""
    x = _check_state(cloud, x)
    t = clamp_time(t, t_min)
    return (-2.0 * t * (1.0 - t))[..., None] * ideal_velocity(cloud, label, x, t, t_min)


def load_world(path) -> LabeledPointCloud:
    return LabeledPointCloud.load(Path(path))
