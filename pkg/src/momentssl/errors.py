"""Error taxonomy shared across modules; the CLI maps these to exit codes."""


class ConfigError(ValueError):
    """Invalid configuration: unknown names, out-of-range settings."""


class DataError(ValueError):
    """Bad or degenerate input data."""


class VerificationError(AssertionError):
    """A built-in numerical self-check failed (gradcheck, oracle mismatch)."""
