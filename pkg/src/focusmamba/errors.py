"""Exception types shared across the package."""


class FocusMambaError(Exception):
    """Base class for all library errors."""


class OutOfBoundsError(FocusMambaError):
    """Event coordinate falls outside the sensor geometry or time window."""

    def __init__(self, index, message):
        super().__init__(f"event {index}: {message}")
        self.index = index


class BadPolarityError(FocusMambaError):
    """Event polarity is not -1 or +1."""

    def __init__(self, index, value):
        super().__init__(f"event {index}: polarity {value} not in {{-1, +1}}")
        self.index = index
        self.value = value


class ShapeMismatchError(FocusMambaError):
    """Tensor/grid/mask shapes disagree with what the operation requires."""


class IndexMismatchError(FocusMambaError):
    """Two gathered sequences were produced from different masks."""


class OddLengthError(FocusMambaError):
    """Sequence of interleaved tokens has odd length."""


class IndexOutOfRangeError(FocusMambaError):
    """Scatter index exceeds the target grid."""


class ParseError(FocusMambaError):
    """Malformed input file; carries the offending line or byte offset."""

    def __init__(self, message, line=None, offset=None):
        loc = ""
        if line is not None:
            loc = f" (line {line})"
        elif offset is not None:
            loc = f" (offset {offset})"
        super().__init__(message + loc)
        self.line = line
        self.offset = offset
