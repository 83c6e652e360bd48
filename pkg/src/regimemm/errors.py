"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """A configuration file could not be parsed.

    Carries the offending line number and key so callers can point the
    user at the exact spot.
    """

    def __init__(self, message: str, *, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = "(" + ", ".join(where) + ") " if where else ""
        super().__init__(prefix + message)


class UnsupportedConfigError(ValueError):
    """A structurally valid model falls outside what an operation supports."""


class NumericsError(RuntimeError):
    """A numerical routine failed (non-convergence, bound violation, underflow)."""
