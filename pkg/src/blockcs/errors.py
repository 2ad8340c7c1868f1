"""Exception and warning types shared across the package."""


class BlockCSError(Exception):
    """Base class for package-specific errors."""


class ContractViolation(BlockCSError, ValueError):
    """An argument violates a documented precondition."""


class NoFeasibleBlockError(BlockCSError):
    """Every dictionary block was infeasible for some signal."""

    def __init__(self, signal: int, message: str | None = None):
        self.signal = signal
        super().__init__(message or f"no feasible block for signal {signal}")


class EmptyBlockError(BlockCSError):
    """An operation that needs assigned signals got an empty block."""


class RankDeficientBlockError(BlockCSError):
    """A dictionary block lost numerical column rank."""


class IllConditionedSystemError(BlockCSError):
    """A per-signal least-squares system is too ill-conditioned to trust."""

    def __init__(self, signal: int, cond: float):
        self.signal = signal
        self.cond = cond
        super().__init__(f"coefficient system for signal {signal} has condition number {cond:.3e}")


class DivergenceError(BlockCSError):
    """An iterative solver is moving away from feasibility."""


class InitializationFailure(BlockCSError):
    """The learner could not produce a feasible starting state."""


class RankDeficiencyWarning(UserWarning):
    """A least-squares design matrix had less than full column rank."""

    def __init__(self, message: str, rank: int | None = None):
        self.rank = rank
        super().__init__(message)


class InfeasibleBlockWarning(UserWarning):
    """A block was skipped for a signal because its Gram matrix is singular."""


class MissingCoverageWarning(UserWarning):
    """An observation pattern misses an entire row or column."""
