"""Exception hierarchy shared by every module.

Each error carries a short machine-friendly ``code`` (the class name) so the
CLI can print single-line diagnostics.
"""


class IcsIdsError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# ingest
class MissingSection(IcsIdsError, ValueError):
    pass


class ArityMismatch(IcsIdsError, ValueError):
    def __init__(self, line: int, expected: int, got: int):
        self.line, self.expected, self.got = line, expected, got
        super().__init__(f"line {line}: expected {expected} values, got {got}")


class UnparseableNumeric(IcsIdsError, ValueError):
    def __init__(self, line: int, column: int, value: str):
        self.line, self.column, self.value = line, column, value
        super().__init__(f"line {line}, column {column}: cannot parse {value!r} as a finite number")


class UnsupportedAttribute(IcsIdsError, ValueError):
    pass


class MissingValue(IcsIdsError, ValueError):
    pass


class MissingLabelColumn(IcsIdsError, KeyError):
    pass


class NonBinaryLabel(IcsIdsError, ValueError):
    pass


class EmptyTable(IcsIdsError, ValueError):
    pass


# dataset
class EmptyDataset(IcsIdsError, ValueError):
    pass


class DimensionMismatch(IcsIdsError, ValueError):
    pass


class SingleClassDataset(IcsIdsError, ValueError):
    pass


# simulator
class InvalidF(IcsIdsError, ValueError):
    pass


class OverlappingEpisodes(IcsIdsError, ValueError):
    pass


# neural
class NonFiniteActivation(IcsIdsError, FloatingPointError):
    pass


class NonFiniteLoss(IcsIdsError, FloatingPointError):
    pass


class InvalidWeights(IcsIdsError, ValueError):
    pass


class StaleCache(IcsIdsError, RuntimeError):
    pass


class ShapeMismatch(IcsIdsError, ValueError):
    pass


class UnsupportedVersion(IcsIdsError, ValueError):
    pass


# trees / ensemble / metrics
class EmptyNode(IcsIdsError, ValueError):
    pass


class WidthMismatch(IcsIdsError, ValueError):
    pass


class LengthMismatch(IcsIdsError, ValueError):
    pass


class EmptyMatrix(IcsIdsError, ValueError):
    pass


class ConfigParse(IcsIdsError, ValueError):
    pass
