"""Exceptions raised by fhtw-lite.

The CLI maps these onto exit codes (see :mod:`fhtw_lite.app`).
"""


class FhtwError(Exception):
    """Base class of every error raised on purpose by this package."""


class RejectedInputError(FhtwError, ValueError):
    """An argument violates a documented precondition (shape, range, finiteness)."""


class DegenerateModelError(FhtwError, ArithmeticError):
    """A fitted model cannot produce the requested quantity (zero mass, zero variance)."""


class DegenerateEdgeError(DegenerateModelError):
    """An edge moment matrix or sketch factor carries no usable spectrum.

    Attributes:
        edge: The offending (child, parent) node pair, when known.
    """
    def __init__(self, message: str, edge: tuple | None = None):
        super().__init__(message if edge is None else f"{message} (edge {edge[0]} -> {edge[1]})")
        self.edge = edge
