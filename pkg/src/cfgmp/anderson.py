"""Windowed Anderson acceleration AA(m, beta) for fixed-point maps.

The mixer works on a batch of independent problems at once: iterates have
shape ``(B, d)`` and each row gets its own mixing weights.  A single
vector of shape ``(d,)`` is treated as ``B = 1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, OperatorError


@dataclass(frozen=True)
class AASpec:
    """Anderson parameters.

    Parameters
    ----------
    m : int
        Window depth; ``m = 0`` is damped Picard iteration.
    beta : float
        Damping in ``(0, 1]``.
    reg : float
        Tikhonov weight, relative to the squared Frobenius norm of the
        residual-difference matrix.
    raw_first_step : bool
        When true the first update is the bare operator output,
        ``z_1 = g(z_0)``, whatever ``beta`` is.  Otherwise the first update
        uses the same damped formula as every later one,
        ``z_1 = z_0 + beta f_0``.
    """

    m: int = 1
    beta: float = 1.0
    reg: float = 1e-10
    raw_first_step: bool = False

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise OperatorError(f"AA window must be a nonnegative integer, got {self.m}")
        if not 0.0 < self.beta <= 1.0:
            raise OperatorError(f"AA damping must lie in (0, 1], got {self.beta}")
        if not self.reg >= 0.0:
            raise OperatorError(f"AA regularisation must be nonnegative, got {self.reg}")


def solve_weights_batch(residuals, reg=1e-10):
    """Affine mixing weights for a batch of residual windows.

    Parameters
    ----------
    residuals : ndarray, shape (B, L, d)
        Residual history per row, oldest first.
    reg : float
        Tikhonov weight relative to ``||dF||_F^2``.  Zero switches to a
        direct least-squares solve (minimum-norm on rank deficiency).

    Returns
    -------
    alpha : ndarray, shape (B, L)
        Minimisers of ``||sum_i alpha_i f_i||`` subject to
        ``sum_i alpha_i = 1``, via the difference form
        ``min_gamma ||f_last - dF gamma||``.
    """
    F = np.asarray(residuals, dtype=float)
    if F.ndim != 3:
        raise OperatorError(f"residual windows must have shape (B, L, d), got {F.shape}")
    B, L, _ = F.shape
    if L == 0:
        raise OperatorError("need at least one residual")
    if L == 1:
        return np.ones((B, 1))

    dF = F[:, 1:] - F[:, :-1]
    f_last = F[:, -1]
    if reg == 0.0:
        # unregularised: solve the least-squares problem directly (SVD),
        # which avoids squaring the conditioning of dF
        gamma = np.stack([np.linalg.lstsq(D.T, f, rcond=None)[0] for D, f in zip(dF, f_last)])
    else:
        gram = np.sum(dF[:, :, None, :] * dF[:, None, :, :], axis=-1)
        rhs = np.sum(dF * f_last[:, None, :], axis=-1)
        scale = np.trace(gram, axis1=1, axis2=2)
        # an all-zero dF gives gamma = 0, i.e. all weight on the newest residual
        shift = reg * scale + (scale == 0.0)
        gram = gram + shift[:, None, None] * np.eye(L - 1)
        try:
            gamma = np.linalg.solve(gram, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            gamma = np.stack(
                [np.linalg.lstsq(g, r, rcond=None)[0] for g, r in zip(gram, rhs)]
            )

    alpha = np.empty((B, L))
    alpha[:, 0] = gamma[:, 0]
    alpha[:, 1:-1] = np.diff(gamma, axis=1)
    alpha[:, -1] = 1.0 - np.sum(alpha[:, :-1], axis=1)
    return alpha


def solve_weights(residuals, reg=1e-10):
    """Mixing weights for one window given as a list of equal-length vectors."""
    vecs = [np.atleast_1d(np.asarray(r, dtype=float)) for r in residuals]
    if not vecs:
        raise OperatorError("need at least one residual")
    dims = {v.shape for v in vecs}
    if len(dims) != 1 or vecs[0].ndim != 1:
        raise OperatorError(f"residuals must be vectors of one common dimension, got {dims}")
    return solve_weights_batch(np.stack(vecs)[None], reg)[0]


@dataclass
class AAState:
    """Rolling history for :func:`aa_step`.

    ``z`` is the current iterate (not yet in the history).  ``iterates``,
    ``outputs`` and ``residuals`` hold the last ``min(k, m+1)`` entries of
    ``z_i``, ``g(z_i)`` and ``f_i = g(z_i) - z_i``, oldest first.
    """

    z: np.ndarray
    iterates: deque = field(default_factory=deque)
    outputs: deque = field(default_factory=deque)
    residuals: deque = field(default_factory=deque)
    k: int = 0
    last_weights: np.ndarray = None

    @classmethod
    def start(cls, z0):
        return cls(z=np.array(z0, dtype=float))


def aa_step(state: AAState, spec: AASpec, operator):
    """Advance ``state`` by one AA(m, beta) update and return the new iterate.

    ``z_{k+1} = sum_i alpha_i (z_i + beta f_i)`` over the window, with the
    weights from :func:`solve_weights_batch`.  For ``beta = 1`` the update
    is formed as ``sum_i alpha_i g(z_i)``, which is the same quantity
    without the cancellation in ``z + (g(z) - z)``.
    """
    z = state.z
    single = z.ndim == 1
    zb = z[None] if single else z
    g = np.asarray(operator(z), dtype=float)
    gb = g[None] if single else g
    if not np.all(np.isfinite(gb)):
        bad = np.flatnonzero(~np.all(np.isfinite(gb), axis=-1))
        raise DivergenceError(iteration=state.k + 1, rows=bad)
    fb = gb - zb

    window = spec.m + 1
    for buf, item in ((state.iterates, zb), (state.outputs, gb), (state.residuals, fb)):
        buf.append(item)
        while len(buf) > window:
            buf.popleft()

    if state.k == 0 and spec.raw_first_step:
        new = gb
        alpha = np.ones((zb.shape[0], 1))
    else:
        alpha = solve_weights_batch(np.stack(state.residuals, axis=1), spec.reg)
        if spec.beta == 1.0:
            new = _mix(alpha, state.outputs)
        else:
            new = _mix(alpha, state.iterates) + spec.beta * _mix(alpha, state.residuals)

    state.k += 1
    state.last_weights = alpha[0] if single else alpha
    state.z = new[0] if single else new
    return state.z


def _mix(alpha, history):
    stack = np.stack(history, axis=1)
    return np.sum(alpha[:, :, None] * stack, axis=1)
