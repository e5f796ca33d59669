"""Exception types shared across the solver suite.

The CLI maps these onto process exit codes (config 2, numerics 3, I/O 4).
"""


class ConfigError(ValueError):
    """Invalid run configuration or command-line input."""


class NumericalError(RuntimeError):
    """A solver detected blow-up, instability, or refused an unstable setup."""


class PositivityError(NumericalError):
    """An integrator could not keep the state positive after repeated step halving."""


class AdmissibilityError(ValueError):
    """A control specification violates an analytic admissibility condition."""
