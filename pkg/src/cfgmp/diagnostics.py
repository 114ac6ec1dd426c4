"""Guidance-error diagnostics, gap statistics and sample-quality metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DiagnosticError, WorldError


@dataclass(frozen=True)
class GuidanceDiagnostic:
    """Error of a CFG extrapolation split into model error and scale error.

    ``total`` is ``||v_cfg(w) - v_ideal||^2``; ``model_error`` is the same
    quantity at ``w_star``; ``scale_error`` is ``(w_star - w)^2 gap_sq``.
    ``residual`` is ``total - (model_error + scale_error)`` divided by
    ``max(total, tiny)``.
    """

    w: float
    w_star: float
    gap_sq: float
    model_error: float
    scale_error: float
    total: float
    residual: float


def _vectors(*vs):
    arrs = [np.asarray(v, dtype=float) for v in vs]
    if len({a.shape for a in arrs}) != 1:
        raise DiagnosticError(f"vectors must share a shape, got {[a.shape for a in arrs]}")
    return arrs


def optimal_w(v_cond, v_uncond, v_ideal):
    """Guidance scale minimising ``||v_uncond + w (v_cond - v_uncond) - v_ideal||``."""
    c, u, ideal = _vectors(v_cond, v_uncond, v_ideal)
    gap = c - u
    denom = float(np.dot(gap.ravel(), gap.ravel()))
    if denom == 0.0:
        raise DiagnosticError("prediction gap is zero; the optimal guidance scale is undefined")
    return float(np.dot(gap.ravel(), (ideal - u).ravel())) / denom


def decomposition_check(v_cond, v_uncond, v_ideal, w):
    c, u, ideal = _vectors(v_cond, v_uncond, v_ideal)
    w_star = optimal_w(c, u, ideal)
    gap = c - u
    gap_sq = float(np.sum(gap * gap))
    total = float(np.sum((u + w * gap - ideal) ** 2))
    model = float(np.sum((u + w_star * gap - ideal) ** 2))
    scale = (w_star - w) ** 2 * gap_sq
    residual = (total - (model + scale)) / max(total, np.finfo(float).tiny)
    return GuidanceDiagnostic(w, w_star, gap_sq, model, scale, total, residual)


def relative_change_r(gap_at_z0, gap_at_zk):
    """``(gap_k - gap_0) / gap_0``; negative when the projection shrank the gap."""
    if not gap_at_z0 > 0:
        raise DiagnosticError(f"baseline gap must be positive, got {gap_at_z0}")
    return (gap_at_zk - gap_at_z0) / gap_at_z0


# ---------------------------------------------------------------------------
# sample quality


def energy_distance(x, y, x_weights=None, y_weights=None):
    """Weighted energy distance ``2 E|X-Y| - E|X-X'| - E|Y-Y'|`` (V-statistic form)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != y.shape[1]:
        raise WorldError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    wx = np.full(len(x), 1.0 / len(x)) if x_weights is None else np.asarray(x_weights, float)
    wy = np.full(len(y), 1.0 / len(y)) if y_weights is None else np.asarray(y_weights, float)
    wx = wx / wx.sum()
    wy = wy / wy.sum()
    cross = wx @ cdist(x, y) @ wy
    within_x = wx @ cdist(x, x) @ wx
    within_y = wy @ cdist(y, y) @ wy
    return max(2.0 * cross - within_x - within_y, 0.0)


@dataclass(frozen=True)
class SampleQuality:
    energy_distance: float
    mean_min_distance: float


def sample_quality(samples, target, label=None):
    """Energy distance and mean nearest-point distance from samples to a cloud subset."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    points, weights = target.subset(label)
    if samples.shape[1] != points.shape[1]:
        raise WorldError(
            f"samples have dimension {samples.shape[1]}, target has {points.shape[1]}"
        )
    ed = energy_distance(samples, points, None, weights)
    mmd = float(np.mean(np.min(cdist(samples, points), axis=1)))
    return SampleQuality(ed, mmd)


# ---------------------------------------------------------------------------
# gap profiles


@dataclass
class GapProfile:
    """Per-sampling-step gap statistics across chains.

    ``state_mean``/``state_max``: gap at the sampling state ``x_i``.
    ``final_mean``/``final_max``: gap at the last projection iterate.
    ``r_mean``: mean relative change per step over chains with a usable
    baseline (NaN where no chain projected).  ``r_all`` is the mean over
    every (chain, step) pair; ``r_count`` how many pairs entered it.
    """

    times: np.ndarray
    state_mean: np.ndarray
    state_max: np.ndarray
    final_mean: np.ndarray
    final_max: np.ndarray
    r_mean: np.ndarray
    r_count: np.ndarray
    divergences: np.ndarray
    r_all: float
    r_total: int

    def to_json(self):
        def clean(a):
            return [float(v) if np.isfinite(v) else None for v in np.asarray(a, float)]
        return {
            "times": clean(self.times),
            "state_gap_mean": clean(self.state_mean),
            "state_gap_max": clean(self.state_max),
            "final_gap_mean": clean(self.final_mean),
            "final_gap_max": clean(self.final_max),
            "r_mean": clean(self.r_mean),
            "r_count": [int(v) for v in self.r_count],
            "divergences": [int(v) for v in self.divergences],
            "r_overall": float(self.r_all) if np.isfinite(self.r_all) else None,
            "r_pairs": int(self.r_total),
        }


def _nan_stat(fn, a, axis):
    out = np.full(np.delete(a.shape, axis), np.nan)
    ok = np.any(np.isfinite(a), axis=axis)
    if ok.any():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            full = fn(np.where(np.isfinite(a), a, np.nan), axis=axis)
        out[ok] = full[ok]
    return out


def chain_r(gaps):
    """r per step from a gap trace of shape (N, K+1); NaN where undefined."""
    g0, gk = gaps[:, 0], gaps[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (gk - g0) / g0
    return np.where((g0 > 0) & np.isfinite(gk), r, np.nan)


def gap_profile(records):
    """Aggregate gap norms and r statistics across chains per sampling step."""
    if not records:
        raise DiagnosticError("no records to aggregate")
    if any(r.state_gaps is None for r in records):
        raise DiagnosticError("records carry no gap traces")
    state = np.stack([r.state_gaps for r in records])
    divergences = np.sum(np.stack([r.diverged for r in records]), axis=0)
    N = state.shape[1]
    if records[0].gaps is None or records[0].gaps.shape[1] < 2:
        nan = np.full(N, np.nan)
        return GapProfile(records[0].times, state.mean(0), state.max(0), nan, nan.copy(),
                          nan.copy(), np.zeros(N, int), divergences, np.nan, 0)
    final = np.stack([r.gaps[:, -1] for r in records])
    rs = np.stack([chain_r(r.gaps) for r in records])
    count = np.sum(np.isfinite(rs), axis=0)
    r_all = float(np.nanmean(rs)) if count.sum() else np.nan
    return GapProfile(
        records[0].times,
        state.mean(0),
        state.max(0),
        _nan_stat(np.nanmean, final, 0),
        _nan_stat(np.nanmax, final, 0),
        _nan_stat(np.nanmean, rs, 0),
        count,
        divergences,
        r_all,
        int(count.sum()),
    )


# ---------------------------------------------------------------------------
# flow-matching loss


def flow_matching_draws(cloud, label, n, seed=0, t_min=1e-4):
    """Draw ``(t, x_t, target)`` for the conditional flow-matching loss.

    ``t ~ U[t_min, 1 - t_min]``, ``x_0 ~ N(0, I)``, ``x_1`` from the
    label's weighted points, ``x_t = (1 - t) x_0 + t x_1`` and
    ``target = x_1 - x_0``.
    """
    rng = np.random.default_rng(seed)
    points, weights = cloud.subset(label)
    t = rng.uniform(t_min, 1.0 - t_min, n)
    x0 = rng.standard_normal((n, cloud.dimension))
    x1 = points[rng.choice(len(points), size=n, p=weights)]
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    return t, xt, x1 - x0


def flow_matching_losses(field, label, draws, chunk=20000):
    """Per-draw squared error ``||field(t, x_t, label) - target||^2``."""
    t, xt, target = draws
    out = np.empty(len(t))
    for s in range(0, len(t), chunk):
        sl = slice(s, s + chunk)
        diff = field(t[sl], xt[sl], label) - target[sl]
        out[sl] = np.sum(diff * diff, axis=-1)
    return out
