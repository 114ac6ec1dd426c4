"""Evaluable velocity fields and classifier-free guidance combinators.

Every field is an immutable callable ``field(t, x, label)`` returning an
array shaped like ``x``.  ``label=None`` asks for the unconditional field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FieldError
from .world import DEFAULT_T_MIN, LabeledPointCloud, ideal_velocity


class VelocityField:
    """Base class for fields; subclasses implement ``__call__``."""

    kind = "abstract"
    dimension: int

    def __call__(self, t, x, label=None):  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class IdealField(VelocityField):
    """Exact ideal velocity of a point-cloud world."""

    cloud: LabeledPointCloud
    t_min: float = DEFAULT_T_MIN
    kind = "analytic-ideal"

    @property
    def dimension(self):
        return self.cloud.dimension

    def __call__(self, t, x, label=None):
        return ideal_velocity(self.cloud, label, x, t, self.t_min)


@dataclass(frozen=True, eq=False)
class PerturbedField(VelocityField):
    """Base field plus a seeded sinusoidal bias emulating model error.

    Output coordinate ``c`` receives
    ``epsilon * amplitude[c] * sin(<frequency[c], x> + phase[c])`` with
    frequencies ~ N(0, I), phases ~ U(0, 2 pi) and amplitudes ~ U(-1, 1)
    drawn from ``seed``.  The bias is bounded by ``epsilon`` per coordinate
    and independent of ``t`` and the label.
    """

    base: VelocityField
    epsilon: float
    seed: int = 0
    frequency: np.ndarray = field(init=False, repr=False, compare=False)
    phase: np.ndarray = field(init=False, repr=False, compare=False)
    amplitude: np.ndarray = field(init=False, repr=False, compare=False)
    kind = "perturbed"

    def __post_init__(self):
        if not np.isfinite(self.epsilon):
            raise FieldError("perturbation amplitude must be finite")
        d = self.base.dimension
        rng = np.random.default_rng(self.seed)
        object.__setattr__(self, "frequency", rng.standard_normal((d, d)))
        object.__setattr__(self, "phase", rng.uniform(0.0, 2.0 * np.pi, d))
        object.__setattr__(self, "amplitude", rng.uniform(-1.0, 1.0, d))

    @property
    def dimension(self):
        return self.base.dimension

    def bias(self, x):
        x = np.asarray(x, dtype=float)
        arg = np.sum(x[..., None, :] * self.frequency, axis=-1) + self.phase
        return self.epsilon * self.amplitude * np.sin(arg)

    def __call__(self, t, x, label=None):
        base = self.base(t, x, label)
        if self.epsilon == 0.0:
            return base
        return base + self.bias(x)


def extrapolate(uncond_value, cond_value, w):
    """CFG combination ``u + w (c - u)``; ``w == 1`` returns ``c`` untouched."""
    if w == 1:
        return cond_value
    return uncond_value + w * (cond_value - uncond_value)


@dataclass(frozen=True, eq=False)
class CFGField(VelocityField):
    """Guidance-extrapolated field built from a conditional/unconditional pair."""

    cond: VelocityField
    uncond: VelocityField
    w: float
    kind = "cfg-extrapolated"

    @property
    def dimension(self):
        return self.cond.dimension

    def __call__(self, t, x, label=None):
        return cfg_velocity(self.cond, self.uncond, self.w, t, x, label)


@dataclass(frozen=True, eq=False)
class DistilledField(VelocityField):
    """Single field taking the guidance scale as an extra input.

    Realised exactly as the CFG combination of its two bases, so that
    ``w = 0`` is the unconditional field and ``w = 1`` the conditional one.
    """

    cond: VelocityField
    uncond: VelocityField
    kind = "distilled"

    @property
    def dimension(self):
        return self.cond.dimension

    def __call__(self, t, x, label=None, w=1.0):
        return distilled_velocity(self.cond, self.uncond, t, x, label, w)


def _check_input(handle, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != handle.dimension:
        raise FieldError(
            f"state has trailing dimension {x.shape[-1] if x.ndim else 0}, "
            f"field expects {handle.dimension}"
        )
    if not np.all(np.isfinite(x)):
        raise FieldError("state contains non-finite values")
    return x


def eval_field(handle, t, x, label=None):
    """Validate ``x`` and evaluate ``handle`` at ``(t, x, label)``."""
    x = _check_input(handle, x)
    return handle(t, x, label)


def cfg_velocity(cond, uncond, w, t, x, label):
    """``uncond(t, x) + w * (cond(t, x, label) - uncond(t, x))``."""
    return extrapolate(uncond(t, x, None), cond(t, x, label), w)


def distilled_velocity(cond, uncond, t, x, label, w):
    if w == 0:
        return uncond(t, x, None)
    return cfg_velocity(cond, uncond, w, t, x, label)


def prediction_gap(cond, uncond, t, x, label):
    """Euclidean norm of ``cond(t, x, label) - uncond(t, x)``."""
    diff = cond(t, x, label) - uncond(t, x, None)
    return np.sqrt(np.sum(diff * diff, axis=-1))
