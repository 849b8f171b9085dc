"""Exception types shared across the package."""


class SSPError(Exception):
    """Base class for all detector errors."""


class ConfigError(SSPError, ValueError):
    """A parameter set violates one or more constraints.

    Attributes:
        problems: every violated constraint, one human-readable line each.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class TraceError(SSPError, ValueError):
    """Malformed or out-of-order trace input."""


class SnapshotError(SSPError, ValueError):
    """A snapshot could not be decoded or is incompatible."""


class CandidateOverflow(SSPError, RuntimeError):
    """The candidate-tuple buffer hit its hard cap during reconstruction."""

    def __init__(self, level, count, cap):
        self.level = level
        self.count = count
        self.cap = cap
        super().__init__(
            f"candidate buffer overflow at level {level}: "
            f"{count} tuples exceeds cap {cap}"
        )
