"""Exception types shared across the library."""


class InvalidArgument(ValueError):
    """An operation was called with arguments violating its preconditions."""


class UndefinedMetric(ValueError):
    """A metric is mathematically undefined for the given inputs (e.g. constant ground truth)."""


class DataError(Exception):
    """A manifest, corpus, or log failed validation on load."""
