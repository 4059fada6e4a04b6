"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A single invalid parameter (non-SPD matrix, bad shape, unknown name)."""


class ConfigError(ValueError):
    """Invalid experiment configuration; carries the full list of problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


class StepRejected(RuntimeError):
    """A sampler update produced a non-finite value; nothing was applied."""

    def __init__(self, iteration, detail):
        self.iteration = iteration
        self.detail = detail
        super().__init__(f"step rejected at iteration {iteration}: {detail}")


class GridError(RuntimeError):
    """A grid evolution could not start or had to abort (CFL, mass drift, NaN)."""
