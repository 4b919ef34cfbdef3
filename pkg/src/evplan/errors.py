"""Exception hierarchy shared by every evplan module."""


class EvplanError(Exception):
    """Base class for all library errors."""


class InputError(EvplanError):
    """Problems with user-supplied data (bad files, invalid parameters)."""


class ParseError(InputError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(InputError):
    def __init__(self, message, invariant=None):
        self.invariant = invariant
        super().__init__(message)


class VersionMismatch(InputError):
    pass


class NetworkError(ValidationError):
    """Structural problems with the road network."""


class DisconnectedOD(NetworkError):
    pass


class NoChargingOption(NetworkError):
    pass


class DuplicateLink(NetworkError):
    pass


class InvalidLink(NetworkError):
    pass


class DimensionMismatch(EvplanError):
    pass


class NegativeFlow(EvplanError):
    pass


class StationClosed(EvplanError):
    pass


class InfeasibleMode(EvplanError):
    """EV demand exists for an O-D pair but none of its charging stations is open."""


class NotConverged(EvplanError):
    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class TooLarge(EvplanError):
    pass


class ZeroLoad(EvplanError):
    pass


class ZeroDemand(EvplanError):
    pass


class NoFeasibleDesign(EvplanError):
    pass


class BudgetViolation(EvplanError):
    pass
