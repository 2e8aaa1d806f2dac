"""Exception hierarchy shared across the package."""


class MoeDtiError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(MoeDtiError):
    """A caller broke an operation's precondition."""


class DimensionError(MoeDtiError, ValueError):
    def __init__(self, op: str, left, right) -> None:
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{op}: incompatible shapes {self.left} and {self.right}")


class NumericOverflowError(MoeDtiError, FloatingPointError):
    """An op produced inf or nan."""


class ConfigError(MoeDtiError, ValueError):
    pass


class DataFormatError(MoeDtiError, ValueError):
    """Malformed input file; carries the 1-based line number when known."""

    def __init__(self, message: str, path=None, line: int | None = None) -> None:
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class MissingEntityError(MoeDtiError, KeyError):
    def __init__(self, kind: str, missing) -> None:
        self.kind = kind
        self.missing = list(missing)
        super().__init__(f"{len(self.missing)} {kind} id(s) not in entity vocabulary: {self.missing[:10]}")

    def __str__(self) -> str:
        return self.args[0]


class ColdEntityError(MoeDtiError, KeyError):
    """No extrinsic embedding row for an entity."""

    def __str__(self) -> str:
        return self.args[0] if self.args else "cold entity"


class MissingIntrinsicError(MoeDtiError):
    """SMILES or sequence unavailable or unparseable for an entity."""


class PseudoLabelError(MoeDtiError):
    pass
