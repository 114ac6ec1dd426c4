"""Approximate projection onto the zero-prediction-gap manifold.

The projection is a fixed-point iteration of an incremental two-leg
operator: a step against the unconditional field followed by a step
along the conditional field, evaluated at the shifted point.  Variants:

``G``
    unconditional leg first, each leg of length ``dt / 2``.
``H``
    conditional leg first.
``G-lambda``
    ``G`` with leg length ``lam * dt``; ``lam = 0.5`` is ``G``.
``G-prime``
    ``G`` for guidance-distilled models: the unconditional leg uses the
    distilled field at scale 0 and the second leg uses it at scale ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anderson import AASpec, AAState, aa_step
from .errors import DivergenceError, OperatorError
from .fields import distilled_velocity, prediction_gap

VARIANTS = ("G", "H", "G-prime", "G-lambda")


@dataclass(frozen=True)
class OperatorSpec:
    variant: str = "G"
    lam: float = 0.5
    dt: float = 0.0
    # guidance scale for G-prime; None means the sampler's scale (1 standalone)
    w: float = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise OperatorError(f"unknown operator variant {self.variant!r}; choose from {VARIANTS}")
        if not 0.0 < self.lam < 1.0:
            raise OperatorError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.dt >= 0.0:
            raise OperatorError(f"step size must be nonnegative, got {self.dt}")


def apply_operator(spec: OperatorSpec, cond, uncond, x, t, label):
    x = np.asarray(x, dtype=float)
    if spec.variant == "H":
        h = 0.5 * spec.dt
        shifted = x + h * cond(t, x, label)
        return shifted - h * uncond(t, shifted, None)
    if spec.variant == "G-prime":
        h = 0.5 * spec.dt
        shifted = x - h * distilled_velocity(cond, uncond, t, x, label, 0.0)
        return shifted + h * distilled_velocity(cond, uncond, t, shifted, label,
                                                       1.0 if spec.w is None else spec.w)
    lam = 0.5 if spec.variant == "G" else spec.lam
    h = lam * spec.dt
    shifted = x - h * uncond(t, x, None)
    return shifted + h * cond(t, shifted, label)


@dataclass
class ProjectionResult:
    """Outcome of :func:`project` for a batch of rows.

    ``residuals[k]`` is ``||z_{k+1} - z_k||`` and ``gaps[k]`` the prediction
    gap at ``z_k`` (``k = 0 .. K``), each of shape ``(B,)``.
    ``diverged_at`` holds the 1-based iteration that went non-finite, or -1.
    """

    x: np.ndarray
    residuals: np.ndarray
    gaps: np.ndarray
    diverged: np.ndarray
    diverged_at: np.ndarray = field(default=None)


def project(spec, cond, uncond, x0, t, label, K, accel: AASpec = None,
            on_divergence="flag", trace=True):
    """Run ``K`` projection iterations from ``x0`` at time ``t``.

    Plain fixed-point iteration when ``accel`` is None, AA(m, beta)
    otherwise.  A row whose operator output or mixed iterate is
    non-finite stops at its last finite iterate and is flagged; with
    ``on_divergence="raise"`` a :class:`DivergenceError` is raised
    instead.  ``trace=False`` skips the per-iteration residual and gap
    bookkeeping except the gaps at ``z_0`` and ``z_K``.
    """
    if int(K) != K or K < 0:
        raise OperatorError(f"iteration count must be a nonnegative integer, got {K}")
    if on_divergence not in ("flag", "raise"):
        raise OperatorError(f"on_divergence must be 'flag' or 'raise', got {on_divergence!r}")
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    z = x0[None] if single else x0.copy()
    B = z.shape[0]

    def gap(zz):
        return prediction_gap(cond, uncond, t, zz, label)

    residuals = np.full((K, B), np.nan)
    gaps = np.full((K + 1, B), np.nan)
    diverged = np.zeros(B, dtype=bool)
    diverged_at = np.full(B, -1)

    if K > 0:
        gaps[0] = gap(z)

    def guarded(zz):
        with np.errstate(over="ignore", invalid="ignore"):
            g = apply_operator(spec, cond, uncond, zz, t, label)
        bad = ~np.all(np.isfinite(g), axis=-1)
        guarded.bad = bad
        return np.where((bad | diverged)[:, None], zz, g)

    state = AAState.start(z) if accel is not None else None
    for k in range(K):
        with np.errstate(over="ignore", invalid="ignore"):
            if state is None:
                new = guarded(z)
            else:
                new = aa_step(state, accel, guarded)
        newly = (guarded.bad | ~np.all(np.isfinite(new), axis=-1)) & ~diverged
        if newly.any():
            if on_divergence == "raise":
                raise DivergenceError(iteration=k + 1, rows=np.flatnonzero(newly))
            diverged_at[newly] = k + 1
            diverged |= newly
        new = np.where(diverged[:, None], z, new)
        if state is not None:
            state.z = new
        if trace or k == K - 1:
            with np.errstate(invalid="ignore"):
                step = new - z
            residuals[k] = np.sqrt(np.sum(step * step, axis=-1))
            gaps[k + 1] = gap(new)
        z = new

    if single:
        return ProjectionResult(z[0], residuals[:, 0], gaps[:, 0], diverged[0], diverged_at[0])
    return ProjectionResult(z, residuals, gaps, diverged, diverged_at)
