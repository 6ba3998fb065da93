"""Exception types raised across the package."""


class BeamforgeError(Exception):
    """Base class for all package errors."""


class ShapeError(BeamforgeError, ValueError):
    """Incompatible jet spaces, vector lengths or grid geometries."""


class DegenerateMomentumError(BeamforgeError, ValueError):
    """Wave Hamiltonian queried at p = 0."""


class CapabilityError(BeamforgeError, ValueError):
    """Requested order or kind is not supported."""


class StiffnessError(BeamforgeError, RuntimeError):
    """The adaptive integrator could not take a step."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class IntegrityError(BeamforgeError, RuntimeError):
    """A beam invariant failed during propagation."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class SamplingError(BeamforgeError, ValueError):
    """Field requested at a time that was not stored."""


class DomainError(BeamforgeError, ValueError):
    """Argument outside its mathematical domain."""


class ResolutionError(BeamforgeError, ValueError):
    """Grid or quadrature too coarse for the requested evaluation."""


class ConditioningError(BeamforgeError, ValueError):
    """Mode roots too close for a stable Vandermonde solve."""


class InsufficientDataError(BeamforgeError, ValueError):
    """Too few points for a rate fit."""


class ConfigError(BeamforgeError, ValueError):
    """Invalid sweep configuration. ``problems`` lists every failure."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
