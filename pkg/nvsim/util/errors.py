from enum import IntEnum


class NVSimError(Exception):
    pass


class ValidationError(NVSimError):
    def __init__(self, message, field=None, position=None):
        super().__init__(message)
        self.message = message
        self.field = field
        self.position = position


class ModelError(NVSimError):
    pass


class StabilityError(NVSimError):
    def __init__(self, message, recommended_dt):
        super().__init__(message)
        self.recommended_dt = recommended_dt


class SequenceParseError(ValidationError):
    def __init__(self, message, line, column):
        super().__init__(message, field="sequence", position=f"{line}:{column}")
        self.line = line
        self.column = column

    def __str__(self):
        return f"line {self.line}, column {self.column}: {self.message}"


class FitError(NVSimError):
    pass


class ConfigError(ValidationError):
    pass


class UnitError(ValidationError):
    pass


class ReplayError(NVSimError):
    pass


class OutputError(NVSimError):
    pass


class ExitCodes(IntEnum):
    OK = 0
    VALIDATION = 1
    RUNTIME = 2


ErrorCodes = {
    1: "Unknown error",
    2: "Unknown experiment",
    3: "Unknown parameter",
    4: "Parameter out of range",
    5: "Syntax error",
    6: "Unit not supported",
    7: "Integrator unstable",
    8: "Model inconsistent",
    9: "Fit did not converge",
    10: "Output not writable",
    11: "Replay mismatch",
}
