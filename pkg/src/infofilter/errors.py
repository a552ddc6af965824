"""Exception types shared across the package.

The CLI maps these onto stable exit codes (see ``infofilter.cli``).
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed or inconsistent."""


class ResourceError(MemoryError):
    """A requested computation would exceed the configured memory budget."""


class DepthExceededError(LookupError):
    """A posterior state lies deeper than the solved threshold table covers.

    Re-solve with a larger usable depth and retry.
    """

    def __init__(self, level: int, usable_depth: int):
        self.level = level
        self.usable_depth = usable_depth
        super().__init__(
            f"state at level {level} is deeper than the usable depth {usable_depth}; "
            "re-solve with a larger M_use"
        )


class DegenerateSampleError(ValueError):
    """Sample moments do not admit a Beta fit."""


class TraceParseError(ValueError):
    """A trace file row could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
