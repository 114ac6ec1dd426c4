"""Euler CFG sampling with optional manifold projection (CFG-MP / CFG-MP+).

Chains are simulated in fixed-size blocks of rows.  Block boundaries
depend only on the configuration, so the numbers produced for a chain do
not depend on how blocks are scheduled across worker threads.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .anderson import AASpec
from .errors import ConfigError, DivergenceError
from .fields import extrapolate
from .projection import OperatorSpec, project
from .world import DEFAULT_T_MIN

METHODS = ("cfg", "cfg-mp", "cfg-mp-plus")
RECORD_MODES = ("final-only", "full-trajectory")


@dataclass(frozen=True)
class SamplerConfig:
    method: str = "cfg-mp-plus"
    steps: int = 32
    w: float = 1.5
    K: int = 2
    operator: OperatorSpec = field(default_factory=OperatorSpec)
    aa: AASpec = field(default_factory=AASpec)
    t_min: float = DEFAULT_T_MIN
    seed: int = 0
    chains: int = 64
    record: str = "final-only"
    # what to do when the projection time t_{i+1} reaches 1
    final_projection: str = "skip"
    on_divergence: str = "flag"
    block_size: int = 64
    workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown sampler {self.method!r}; choose from {METHODS}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"steps: must be an integer >= 1, got {self.steps}")
        if int(self.K) != self.K or self.K < 0:
            raise ConfigError(f"K: must be an integer >= 0, got {self.K}")
        if self.method == "cfg" and self.K > 0:
            raise ConfigError("K: method 'cfg' has no projection phase; set K = 0")
        if not np.isfinite(self.w):
            raise ConfigError(f"w: must be finite, got {self.w}")
        if not 0.0 < self.t_min < 0.5:
            raise ConfigError(f"t_min: must lie in (0, 0.5), got {self.t_min}")
        if self.chains < 1:
            raise ConfigError(f"chains: must be >= 1, got {self.chains}")
        if self.record not in RECORD_MODES:
            raise ConfigError(f"record: choose from {RECORD_MODES}, got {self.record!r}")
        if self.final_projection not in ("skip", "clamp"):
            raise ConfigError(
                f"final_projection: choose 'skip' or 'clamp', got {self.final_projection!r}"
            )
        if self.on_divergence not in ("flag", "raise"):
            raise ConfigError(f"on_divergence: choose 'flag' or 'raise', got {self.on_divergence!r}")
        if self.block_size < 1 or self.workers < 1:
            raise ConfigError("block_size and workers must be >= 1")

    def times(self) -> np.ndarray:
        """Grid ``t_i = i / N`` for ``i = 0 .. N``, each from integers."""
        return np.arange(self.steps + 1) / self.steps

    def projected(self) -> bool:
        return self.method != "cfg" and self.K > 0

    def projection_steps(self) -> np.ndarray:
        """Boolean per sampling step: does it run a projection phase?"""
        mask = np.full(self.steps, self.projected())
        if self.final_projection == "skip":
            mask[-1] = False
        return mask


@dataclass
class TrajectoryRecord:
    """Everything recorded for one chain.

    Per-step arrays have leading length N.  ``gaps[i]`` is the projection
    gap trace at step i (``K + 1`` values, NaN when the step did not
    project) and ``residuals[i]`` the ``K`` iterate-change norms.  The
    state, velocity and residual arrays are None in final-only mode.
    """

    chain: int
    noise: np.ndarray
    final: np.ndarray
    times: np.ndarray
    state_gaps: np.ndarray
    diverged: np.ndarray
    diverged_at: np.ndarray
    gaps: np.ndarray = None
    states: np.ndarray = None
    velocities: np.ndarray = None
    half_states: np.ndarray = None
    residuals: np.ndarray = None

    @property
    def diverged_any(self) -> bool:
        return bool(np.any(self.diverged))


def chain_noise(seed, chain, dimension):
    """Standard normal start for ``chain``, from a stream keyed on (seed, chain)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(chain),))
    return np.random.default_rng(ss).standard_normal(dimension)


def initial_noise(config, dimension, count=None):
    n = config.chains if count is None else count
    return np.stack([chain_noise(config.seed, c, dimension) for c in range(n)])


def _run_block(config, cond, uncond, label, noise, chain_offset):
    N, K = config.steps, config.K
    full = config.record == "full-trajectory"
    B, d = noise.shape
    dt = 1.0 / N
    grid = config.times()
    op = config.operator
    op = dataclasses.replace(op, dt=dt, w=config.w if op.w is None else op.w)
    accel = config.aa if config.method == "cfg-mp-plus" else None
    do_project = config.projection_steps()

    state_gaps = np.empty((N, B))
    gaps = np.full((N, K + 1, B), np.nan) if config.projected() else None
    residuals = np.full((N, K, B), np.nan) if (full and config.projected()) else None
    diverged = np.zeros((N, B), dtype=bool)
    diverged_at = np.full((N, B), -1)
    if full:
        states = np.empty((N + 1, B, d))
        velocities = np.empty((N, B, d))
        halves = np.empty((N, B, d))
        states[0] = noise

    x = noise.copy()
    for i in range(N):
        t, t_next = grid[i], grid[i + 1]
        c = cond(t, x, label)
        u = uncond(t, x, None)
        diff = c - u
        state_gaps[i] = np.sqrt(np.sum(diff * diff, axis=-1))
        v = extrapolate(u, c, config.w)
        half = x + dt * v
        if do_project[i]:
            try:
                res = project(op, cond, uncond, half, t_next, label, K, accel=accel,
                              on_divergence=config.on_divergence, trace=full)
            except DivergenceError as exc:
                exc.step = i
                exc.rows = tuple(chain_offset + r for r in exc.rows)
                exc.args = (f"sampling step {i}: {exc}",)
                raise
            x = res.x
            gaps[i] = res.gaps
            diverged[i] = res.diverged
            diverged_at[i] = res.diverged_at
            if residuals is not None:
                residuals[i] = res.residuals
        else:
            x = half
        if full:
            velocities[i] = v
            halves[i] = half
            states[i + 1] = x

    records = []
    for b in range(B):
        rec = TrajectoryRecord(
            chain=chain_offset + b,
            noise=noise[b].copy(),
            final=x[b].copy(),
            times=grid[:-1].copy(),
            state_gaps=state_gaps[:, b].copy(),
            diverged=diverged[:, b].copy(),
            diverged_at=diverged_at[:, b].copy(),
            gaps=None if gaps is None else gaps[:, :, b].copy(),
        )
        if full:
            rec.states = states[:, b].copy()
            rec.velocities = velocities[:, b].copy()
            rec.half_states = halves[:, b].copy()
            if residuals is not None:
                rec.residuals = residuals[:, :, b].copy()
        records.append(rec)
    return records


def sample(config: SamplerConfig, cond, uncond, label, noise=None):
    """Run every chain and return one :class:`TrajectoryRecord` per chain.

    ``noise`` (shape ``(C, d)``) overrides the seeded starting points.
    """
    if noise is None:
        noise = initial_noise(config, cond.dimension)
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if noise.shape[1] != cond.dimension:
        raise ConfigError(
            f"noise has dimension {noise.shape[1]}, fields expect {cond.dimension}"
        )
    bs = config.block_size
    starts = list(range(0, noise.shape[0], bs))

    def run(s):
        return _run_block(config, cond, uncond, label, noise[s:s + bs], s)

    if config.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            blocks = list(pool.map(run, starts))
    else:
        blocks = [run(s) for s in starts]
    return [rec for block in blocks for rec in block]


@dataclass
class BatchResult:
    samples: np.ndarray
    records: list
    divergences: int
    profile: object = None


def generate_batch(config: SamplerConfig, cond, uncond, label, count=None):
    """Sample ``count`` chains (default ``config.chains``) and summarise them."""
    from .diagnostics import gap_profile

    n = config.chains if count is None else count
    if n < 1:
        raise ConfigError(f"count: must be >= 1, got {n}")
    records = sample(config, cond, uncond, label, initial_noise(config, cond.dimension, n))
    samples = np.stack([r.final for r in records])
    divergences = int(sum(int(np.sum(r.diverged)) for r in records))
    return BatchResult(samples, records, divergences, gap_profile(records))
