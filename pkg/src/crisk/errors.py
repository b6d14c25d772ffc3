"""Exception hierarchy shared by all crisk modules."""


class CriskError(Exception):
    """Base class for every error raised by crisk."""


class DimensionError(CriskError, ValueError):
    """Vector or mask sizes do not match the underlying space."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ValidationError(CriskError, ValueError):
    """Invalid input data; ``field`` names the offending entry."""

    def __init__(self, message, field=None, index=None):
        super().__init__(message)
        self.field = field
        self.index = index


class ParameterError(CriskError, ValueError):
    """A numeric parameter is outside its admissible range."""


class PartitionError(CriskError, ValueError):
    pass


class OverlapError(PartitionError):
    """Two parts of a proposed partition of unity intersect."""


class CoverError(PartitionError):
    """The parts of a proposed partition of unity do not join to 1."""


class EmptySetError(CriskError, ValueError):
    pass


class EnumerationCapError(CriskError, RuntimeError):
    pass


class ConvergenceError(CriskError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, block=None, residual=None):
        super().__init__(message)
        self.block = block
        self.residual = residual


class InfeasibleError(CriskError, RuntimeError):
    """A block has an empty feasible set (e.g. a penalty that is +inf everywhere)."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class UnknownNameError(CriskError, KeyError):
    def __init__(self, kind, name, available):
        self.kind = kind
        self.name = name
        self.available = sorted(available)
        super().__init__(f"unknown {kind} {name!r}; available: {', '.join(self.available) or '(none)'}")

    def __str__(self):
        return self.args[0]
