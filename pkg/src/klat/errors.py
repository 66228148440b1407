"""Exception types shared across the toolkit."""


class KlatError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(KlatError):
    """Missing or inconsistent configuration (checkpoints, vocab files, paths)."""


class ParseError(KlatError):
    """Malformed corpus record; carries the offending location when known."""


class VocabularyError(KlatError):
    """Label outside the label vocabulary."""


class TransportError(KlatError):
    """Network-level failure talking to a remote backend. Retriable."""


class MissingPageError(KlatError):
    """The requested encyclopedia page does not exist. Not retriable."""


class DegenerateInputError(KlatError):
    """Input that makes an operation ill-defined (e.g. fully masked sequence)."""
