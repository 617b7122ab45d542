"""Exception hierarchy shared by every stage."""


class LexiforgeError(Exception):
    """Base class; the CLI maps it to the data-error exit code."""


class LexiconError(LexiforgeError):
    def __init__(self, kind, message, row=None):
        self.kind = kind
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"{kind}{where}: {message}")


class AnnotationParseError(LexiforgeError):
    def __init__(self, kind, position, message=""):
        self.kind = kind
        self.position = position
        super().__init__(f"{kind} at position {position}" + (f": {message}" if message else ""))


class EncodingError(LexiforgeError):
    pass


class EmbeddingFormatError(LexiforgeError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class SplitError(LexiforgeError):
    pass


class TrainingError(LexiforgeError):
    pass


class StateFileError(LexiforgeError):
    pass


class ConfigError(LexiforgeError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
