"""Exception hierarchy shared across the package."""


class W2SError(Exception):
    """Base class for all errors raised by w2slab."""


class ConfigError(W2SError, ValueError):
    """Invalid configuration or arguments (CLI exit status 2)."""


class ShapeError(W2SError, ValueError):
    pass


class NumericError(W2SError, ArithmeticError):
    pass


class ContractError(W2SError, ValueError):
    """A caller broke an operation's precondition."""


class ParseError(W2SError):
    """Malformed dataset file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int | None = None, path: str | None = None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class CheckpointError(W2SError):
    pass


class TrainingAborted(W2SError):
    """Training hit a non-finite loss or gradient (CLI exit status 3)."""

    def __init__(self, message: str, checkpoint_path: str | None = None):
        self.checkpoint_path = checkpoint_path
        super().__init__(message)
