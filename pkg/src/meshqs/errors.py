"""Exception hierarchy. ``category`` is what the CLI prints on stderr."""


class MeshqsError(Exception):
    category = "runtime"


class ConfigurationError(MeshqsError):
    category = "configuration"


class PreconditionError(MeshqsError, ValueError):
    category = "precondition"


class TrainingDivergedError(MeshqsError):
    category = "divergence"


class UnsupportedModeError(MeshqsError):
    category = "unsupported_mode"
