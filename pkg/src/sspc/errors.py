"""Exception hierarchy shared by every module of the package."""


class SSPCError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(SSPCError, ValueError):
    """Inputs do not satisfy a function's preconditions (usually dimensions)."""


class EvaluationError(SSPCError):
    """A problem callback produced a non-finite value."""

    def __init__(self, block, message=None):
        self.block = block
        super().__init__(message or f"non-finite values in block '{block}'")


class SingularMatrixError(SSPCError):
    """A factorization met a pivot that is too small relative to the largest."""

    def __init__(self, index, pivot, largest):
        self.index = index
        self.pivot = pivot
        self.largest = largest
        super().__init__(
            f"near-singular pivot at index {index}: |{pivot:.3e}| vs largest {largest:.3e}"
        )


class DegeneratePivotError(SingularMatrixError):
    """A diagonal entry of the regularized complementarity block is too small."""


class SolverFailure(SSPCError):
    """Base for predictor/corrector failures; carries the partial step report."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class PredictorFailure(SolverFailure):
    pass


class CorrectorFailure(SolverFailure):
    pass


class NonConvergenceError(SolverFailure):
    def __init__(self, message, residual, report=None):
        self.residual = residual
        super().__init__(message, report)


class KinematicSingularityError(SSPCError, ValueError):
    """The pitch angle is at the gimbal-lock singularity of the 3-2-1 sequence."""


class DareNonConvergence(SSPCError):
    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Riccati iteration did not converge in {iterations} iterations "
            f"(last residual {residual:.3e})"
        )


class InfeasibleQP(SSPCError):
    pass


class DegenerateQP(SSPCError):
    pass


class NonDifferentiablePointError(SSPCError):
    pass


class InconclusiveProbe(SSPCError):
    pass


class SimulationAborted(SSPCError):
    """Closed-loop run stopped early; ``trace`` holds the records so far."""

    def __init__(self, step, trace, cause):
        self.step = step
        self.trace = trace
        self.cause = cause
        super().__init__(f"simulation aborted at step {step}: {cause}")
