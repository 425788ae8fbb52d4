"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration value."""


class DegenerateFluxError(ValueError):
    """The flux has a zero wave-speed bound, so no CFL step exists."""


class HaloError(KeyError):
    """A stencil value needed to evaluate the flux divergence is missing."""


class ParameterDomainError(ValueError):
    """A parameter lies outside the sampled parameter domain."""


class StoreError(KeyError):
    """A requested snapshot is not in the store."""


class HyperReductionError(RuntimeError):
    """The reduced mesh is empty, so the residual cannot be minimized."""


class UndefinedReferenceError(ValueError):
    """The reference solution has zero norm, so a relative error is undefined."""
