"""Exception types raised across the package."""


class CfgMpError(Exception):
    """Base class for every error raised by cfgmp."""


class WorldError(CfgMpError, ValueError):
    """Invalid point cloud, unknown label or mismatched dimension."""


class FieldError(CfgMpError, ValueError):
    """Invalid velocity-field input (non-finite state, bad spec)."""


class OperatorError(CfgMpError, ValueError):
    """Invalid projection-operator or Anderson parameters."""


class ConfigError(CfgMpError, ValueError):
    """Run configuration failed validation or is self-contradictory."""


class DiagnosticError(CfgMpError, ValueError):
    """A diagnostic quantity is undefined for the given inputs."""


class DivergenceError(CfgMpError, RuntimeError):
    """A fixed-point iterate became non-finite.

    Attributes
    ----------
    iteration : int
        1-based projection iteration whose output was non-finite.
    step : int or None
        Sampling step index, filled in by the sampler.
    rows : tuple of int
        Batch rows (chains within the block) that diverged.
    """

    def __init__(self, iteration, rows=(), step=None):
        self.iteration = iteration
        self.rows = tuple(int(r) for r in rows)
        self.step = step
        where = f"sampling step {step}, " if step is not None else ""
        super().__init__(
            f"non-finite iterate at {where}projection iteration {iteration} "
            f"(rows {list(self.rows)})"
        )
