"""Exception hierarchy shared by every module."""


class ClutterPropError(Exception):
    """Base class for all package errors."""


class ParseError(ClutterPropError, ValueError):
    pass


class AntipodalPoints(ClutterPropError, ValueError):
    pass


class DegenerateLink(ClutterPropError, ValueError):
    pass


class OutOfBounds(ClutterPropError, ValueError):
    pass


class NoData(ClutterPropError, ValueError):
    pass


class KindError(ClutterPropError, TypeError):
    pass


class GeometryMismatch(ClutterPropError, ValueError):
    pass


class GeometryDisjoint(ClutterPropError, ValueError):
    pass


class FactorTooLarge(ClutterPropError, ValueError):
    pass


class UnmappedCode(ClutterPropError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep the message readable
        return str(self.args[0]) if self.args else ""


class EmptyClass(ClutterPropError, ValueError):
    pass


class ProfileMismatch(ClutterPropError, ValueError):
    pass


class EmptyInput(ClutterPropError, ValueError):
    pass


class RecordError(ClutterPropError):
    """A measurement record could not be predicted.

    Wraps the underlying error and names the offending record.
    """

    def __init__(self, index, dataset_id, cause, line=None):
        self.index = index
        self.dataset_id = dataset_id
        self.cause = cause
        self.line = line
        where = f"record {index} (dataset {dataset_id!r}"
        if line is not None:
            where += f", line {line}"
        super().__init__(f"{where}): {type(cause).__name__}: {cause}")
