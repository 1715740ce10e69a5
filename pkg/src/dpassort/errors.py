"""Exception hierarchy shared by every module."""


class DPAssortError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(DPAssortError, ValueError):
    pass


class ParseError(DPAssortError, ValueError):
    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class RejectedEdgeError(DPAssortError, ValueError):
    def __init__(self, pair, line_number: int | None = None):
        where = f" (line {line_number})" if line_number is not None else ""
        super().__init__(f"self-loop {pair[0]}-{pair[1]} rejected{where}")
        self.pair = pair
        self.line_number = line_number


class UndefinedStatisticError(DPAssortError, ArithmeticError):
    pass


class DegenerateChannelError(DPAssortError, ValueError):
    """Randomized response with p = 1/2 carries no signal and cannot be debiased."""


class UnsupportedOrderError(DPAssortError, ValueError):
    pass


class InfeasibleBudgetError(DPAssortError, ValueError):
    pass


class InfeasiblePopulationError(InfeasibleBudgetError):
    """Too few users for the shuffle amplification bound to apply."""


class TestModeError(DPAssortError, RuntimeError):
    """Noiseless parameters requested outside test mode."""

    __test__ = False
