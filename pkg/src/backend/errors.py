"""Exception hierarchy shared by the simulator backend."""


class SimulatorError(Exception):
    """Base class for every error raised by the simulator."""


class GraphError(SimulatorError, ValueError):
    pass


class KernelError(SimulatorError, ValueError):
    pass


class KernelDomainError(KernelError):
    pass


class FuncSpaceError(SimulatorError, ValueError):
    pass


class KernelMismatchError(FuncSpaceError):
    pass


class ExtrapolationError(FuncSpaceError):
    pass


class GridMismatchError(FuncSpaceError):
    pass


class LearnerError(SimulatorError, ValueError):
    pass


class RepresentationMismatchError(LearnerError):
    pass


class DimensionMismatchError(LearnerError):
    pass


class StreamError(SimulatorError, ValueError):
    pass


class DiagnosticsError(SimulatorError, ValueError):
    pass


class DegenerateDictionaryError(DiagnosticsError):
    pass


class StabilityError(SimulatorError, ValueError):
    pass


class RunnerError(SimulatorError):
    pass


class ConfigValidationError(SimulatorError):
    """
    Raised when an experiment configuration violates one or more invariants.

    Args:
        issues (list): every ConfigIssue found in a single validation pass
    """

    def __init__(self, issues):
        self.issues = list(issues)
        listing = "; ".join(f"{issue.field}: {issue.message}" for issue in self.issues)
        super().__init__(f"{len(self.issues)} configuration issue(s): {listing}")

    def to_dict(self):
        return {
            "success": False,
            "error": "invalid configuration",
            "issues": [issue.to_dict() for issue in self.issues],
        }
