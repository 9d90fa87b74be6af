"""Exception hierarchy shared by every module of the toolkit."""


class PemiuError(ValueError):
    """Base class for all toolkit errors."""


class ZeroVector(PemiuError):
    pass


class DimensionMismatch(PemiuError):
    pass


class IndivisibleBlockSize(PemiuError):
    pass


class InvalidDisplacement(PemiuError):
    pass


class PartitionMismatch(PemiuError):
    pass


class EmptyScoreList(PemiuError):
    pass


class UnknownRecord(PemiuError, KeyError):
    def __init__(self, record_id):
        super().__init__(f"unknown record id: {record_id!r}")
        self.record_id = record_id

    def __str__(self):
        return self.args[0]


class LabelContradiction(PemiuError):
    pass


class MissingOriginal(PemiuError):
    pass


class ChannelGap(PemiuError):
    pass


class SingleClass(PemiuError):
    pass


class TooFewExamples(PemiuError):
    pass


class InvalidSpec(PemiuError):
    pass


class DuplicateRecordId(PemiuError):
    pass


class MalformedFile(PemiuError):
    """Raised when a dataset or pairing file cannot be parsed.

    ``offset`` is the byte offset of the field that could not be read
    (binary files) or ``None`` when the location is a line number.
    """

    def __init__(self, message, offset=None, line=None):
        where = ""
        if offset is not None:
            where = f" at byte offset {offset}"
        elif line is not None:
            where = f" at line {line}"
        super().__init__(message + where)
        self.offset = offset
        self.line = line
