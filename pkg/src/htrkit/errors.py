"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """Invalid configuration or precondition on a construction call."""


class InputError(ValueError):
    """Malformed runtime input (bad image, mismatched lists, ...)."""


class EncodingError(ValueError):
    """Text cannot be encoded against the given vocabulary."""


class ParseError(ValueError):
    """A structured text file is malformed; message carries the line number."""


class ScoringError(ValueError):
    """A language-model query is outside the model's closed token set."""


class TooLargeError(ValueError):
    """A brute-force oracle refused an instance above its size guard."""
