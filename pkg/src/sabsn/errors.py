"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted key path of the offending entry."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class SaturationError(Exception):
    """A requested frequency fell outside the actuation bounds.

    The clamped frequency has already been applied when this is raised.
    """

    def __init__(self, component_id: str, attempted: float, clamped: float):
        self.component_id = component_id
        self.attempted = attempted
        self.clamped = clamped
        self.kind = "saturated_high" if attempted > clamped else "saturated_low"
        super().__init__(f"{component_id}: frequency {attempted!r} clamped to {clamped!r}")


class FormulaError(KeyError):
    pass


class PlanningError(RuntimeError):
    pass


class LogSchemaError(ValueError):
    pass
