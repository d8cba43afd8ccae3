"""Exception hierarchy shared by every rpgfuzz module."""


class RpgFuzzError(Exception):
    """Base class for all errors raised by rpgfuzz."""


class SpecError(RpgFuzzError):
    """The OpenAPI document could not be turned into a ServiceSpec."""


class ParseError(SpecError):
    pass


class UnresolvedRefError(SpecError):
    pass


class UnsupportedVersionError(SpecError):
    pass


class UnsupportedMethodError(RpgFuzzError):
    pass


class GraphError(RpgFuzzError):
    """Base class for property-graph errors."""


class EmptySpecError(GraphError):
    pass


class UnknownNodeError(GraphError):
    pass


class UnknownSchemaError(UnknownNodeError):
    pass


class InvalidMutationError(GraphError):
    pass


class UnboundRequiredPathParamError(RpgFuzzError):
    def __init__(self, operation_id: str, param: str):
        super().__init__(f"{operation_id}: no value source for required path parameter {param!r}")
        self.operation_id = operation_id
        self.param = param


class SequenceAbortedError(RpgFuzzError):
    """Raised after too many consecutive transport failures inside one sequence."""

    def __init__(self, message: str, observations=None):
        super().__init__(message)
        self.observations = list(observations or [])


class ConfigError(RpgFuzzError):
    pass
