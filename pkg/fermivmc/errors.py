"""
Exception hierarchy shared by the engine and the command line.
"""


class VmcError(Exception):
    """
    Base class for every error raised by fermivmc.
    """


class ConfigError(VmcError):
    pass


class GeometryError(VmcError):
    pass


class BasisError(VmcError):
    pass


class ScfError(VmcError):
    pass


class ScfConvergenceError(ScfError):
    """
    Raised when a converged SCF solution is required but the run stopped at the iteration cap.
    The unconverged solution is kept for diagnostics.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class ChargeAssignmentError(VmcError):
    pass


class SamplerError(VmcError):
    pass


class AllSamplesFlaggedError(VmcError):
    """
    Every walker in a batch produced a non-finite local energy.
    """


class EstimatorError(VmcError):
    pass


class CheckpointError(VmcError):
    pass


# exit codes used by vmc.py
NUMERICAL_FAILURES = (ScfConvergenceError, AllSamplesFlaggedError, SamplerError, EstimatorError)
