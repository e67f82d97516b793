import logging
from enum import Enum

_LOGGER = logging.getLogger(__name__)


class ExperimentType(Enum):
    ODMR = "odmr"
    EXCITATION_LINE = "excitation-line"
    RABI = "rabi"
    ECHO = "echo"
    BELL_TOMOGRAPHY = "bell-tomography"
    ZENO = "zeno"
    READOUT = "readout"
    G2 = "g2"
    EIT = "eit"
    POLARITON_STORAGE = "polariton-storage"
    SATURATION = "saturation"
    JUMPS = "jumps"
    RABI_DAMPING = "rabi-damping"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


class ParameterType(Enum):
    INT = "int"
    FLOAT = "float"
    STRING = "string"
    BOOL = "bool"
    FREQUENCY = "frequency"
    TIME = "time"
    FIELD = "field"
    RATE = "rate"
    VECTOR = "vector"
    RANGE = "range"
    LIST = "list"
    CHOICE = "choice"


class Species(Enum):
    N14 = "N14"
    C13 = "C13"


class SelectionRule(Enum):
    ESR = "esr"
    NMR = "nmr"
    ALL = "all"


class Lineshape(Enum):
    LORENTZIAN = "lorentzian"
    GAUSSIAN = "gaussian"


class PulseKind(Enum):
    MW_PULSE = "mw_pulse"
    RF_PULSE = "rf_pulse"
    DELAY = "delay"
    LASER_READOUT = "laser_readout"
    LASER_INIT = "laser_init"


class Frame(Enum):
    ROTATING = "rotating"
    LAB = "lab"


class BellState(Enum):
    PHI_PLUS = "phi-plus"
    PHI_MINUS = "phi-minus"
    PSI_PLUS = "psi-plus"
    PSI_MINUS = "psi-minus"


class FitModel(Enum):
    POISSON = "poisson"
    GAUSSIAN = "gaussian"


class Presentation(Enum):
    FLUORESCENCE = "fluorescence"
    ABSORPTION = "absorption"


class SpinState(Enum):
    BRIGHT = 0
    DARK = 1


class RateLevel(Enum):
    """Index of each level in the seven-level optical rate model."""
    G0 = 0
    G_PLUS = 1
    G_MINUS = 2
    E0 = 3
    E_PLUS = 4
    E_MINUS = 5
    SINGLET = 6


class RatePreset(Enum):
    ROOM_TEMPERATURE = "room"
    LOW_TEMPERATURE = "low"


class EmitterPreset(Enum):
    NV = "nv"
    NE8 = "ne8"


class HyperfineNucleus(Enum):
    NONE = "none"
    N14 = "N14"
    C13 = "C13"
