"""Exception types shared across the package."""


class RcvbError(Exception):
    """Base class for errors raised by this package."""


class OutOfBudgetMemory(RcvbError):
    """An allocation would push tracked memory past the armed ceiling.

    Recoverable: the tracker state is unchanged when this is raised.
    """

    def __init__(self, requested: int, live_bytes: int, ceiling: int, batch_size=None):
        self.requested = requested
        self.live_bytes = live_bytes
        self.ceiling = ceiling
        self.batch_size = batch_size
        msg = (f"allocation of {requested} bytes would exceed ceiling "
               f"{ceiling} (live={live_bytes})")
        if batch_size is not None:
            msg += f" at batch size {batch_size}"
        super().__init__(msg)


class ModelDoesNotFit(RcvbError):
    """Even a batch of one sample does not fit in the memory budget."""


class TimeBudgetTooSmall(RcvbError):
    """One epoch alone exceeds the training-time budget."""

    def __init__(self, epoch_seconds: float, budget_seconds: float):
        self.epoch_seconds = epoch_seconds
        self.budget_seconds = budget_seconds
        super().__init__(f"one epoch takes {epoch_seconds:.6g}s but the time "
                         f"budget is {budget_seconds:.6g}s")


class NoFeasibleCandidate(RcvbError):
    """Every candidate was skipped or failed; nothing to rank."""


class ConfigError(RcvbError):
    """Invalid experiment configuration; message names the offending field."""

    def __init__(self, field: str, problem: str):
        self.field = field
        self.problem = problem
        super().__init__(f"{field}: {problem}")


class DatasetFormatError(RcvbError):
    """A dataset file does not conform to the binary layout."""
