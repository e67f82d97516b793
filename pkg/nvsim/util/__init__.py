import json
import logging
import re
from enum import Enum
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from nvsim.util.errors import *
from nvsim.util.protocol import *

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeTrace:
    """Sampled time series; ``values`` maps a column name to its samples."""
    times: np.ndarray
    values: Dict[str, np.ndarray]
    seed: Optional[int] = None
    bin: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1:
            raise ValidationError("trace times must be one-dimensional", field="times")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValidationError("trace times must be increasing", field="times")
        values = {}
        for name, column in self.values.items():
            column = np.asarray(column)
            if column.shape[0] != times.size:
                raise ValidationError(f"column {name} has {column.shape[0]} samples for {times.size} times",
                                      field=name)
            if name.startswith("counts") and np.any(column < 0):
                raise ValidationError("counts must be non-negative", field=name)
            values[name] = column
        object.__setattr__(self, "values", values)

    def __getitem__(self, name):
        return self.values[name]

    def columns(self):
        names = ["time_s"] + list(self.values)
        data = [self.times] + [np.real(v) for v in self.values.values()]
        return names, np.column_stack(data) if data else np.empty((0, 0))


@dataclass(frozen=True)
class Spectrum:
    """Signal over a strictly increasing frequency (or delay) axis."""
    axis: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    axis_name: str = "freq_mhz"
    value_name: str = "signal"

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "values", values)
        if axis.shape != values.shape:
            raise ValidationError("spectrum axis and values differ in length", field="axis")
        if axis.size > 1 and np.any(np.diff(axis) <= 0):
            raise ValidationError("spectrum axis must be strictly increasing", field="axis")
        if not np.all(np.isfinite(values)):
            raise ValidationError("spectrum values must be finite", field="values")

    @property
    def step(self):
        return float(self.axis[1] - self.axis[0]) if self.axis.size > 1 else 0.0

    def columns(self):
        return [self.axis_name, self.value_name], np.column_stack([self.axis, self.values])


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    frequencies: np.ndarray
    acquisition_bin: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        freqs = np.asarray(self.frequencies, dtype=np.int64)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "frequencies", freqs)
        if edges.size != freqs.size + 1:
            raise ValidationError("histogram needs one more edge than bins", field="bin_edges")
        if np.any(freqs < 0):
            raise ValidationError("histogram frequencies must be non-negative", field="frequencies")

    @property
    def total(self):
        return int(self.frequencies.sum())

    @property
    def counts(self):
        """Left bin edge of each (unit-width) count bin."""
        return self.bin_edges[:-1]

    def columns(self):
        return ["counts", "frequency"], np.column_stack([self.counts, self.frequencies])


class Table:
    """Named columns of equal length, for results that are neither traces nor spectra."""

    def __init__(self, names, rows, metadata=None):
        self.names = list(names)
        self.rows = np.atleast_2d(np.asarray(rows, dtype=float))
        self.metadata = dict(metadata or {})
        if self.rows.size and self.rows.shape[1] != len(self.names):
            raise ValidationError(f"table has {self.rows.shape[1]} columns for {len(self.names)} names",
                                  field="names")

    def __getitem__(self, name):
        return self.rows[:, self.names.index(name)]

    def columns(self):
        return self.names, self.rows


class ParamSpec(NamedTuple):
    ptype: ParameterType
    default: object = None
    help: str = ""
    choices: Optional[type] = None


class Experiment():
    """A runnable experiment request: a type plus resolved parameters.

    Subclasses declare ``schema`` (parameter name -> ParamSpec) and an
    ``anchor`` naming the figure or section the run reproduces.
    """

    anchor = ""
    schema: Dict[str, ParamSpec] = {}

    def __init__(self, experiment_type: ExperimentType, parameters=None, path=None):
        self.experiment_type = experiment_type
        self.parameters = Util.resolveParameters(self.schema, parameters or {}, path or experiment_type.value)

    @property
    def name(self):
        return self.experiment_type.value

    def check(self):
        """Validate physical parameter ranges without running; raises ValidationError."""

    def execute(self, seed=None):
        raise NotImplementedError

    def serializeToXML(self, seed=None):
        xmlstr = '<experiment name="{0}"'.format(self.name)
        if seed is not None:
            xmlstr += ' seed="{0}"'.format(seed)
        xmlstr += ">"
        for key, val in self.parameters.items():
            if val is None:
                continue
            xmlstr += '<param name="{0}">{1}</param>'.format(key, Util.formatValue(val))
        xmlstr += "</experiment>"
        return xmlstr


class ExperimentResult:
    """Outcome of an experiment; ``series`` is written as CSV, ``scalars`` as JSON."""

    def __init__(self, name, series=None, scalars=None, metadata=None):
        self.name = name
        self.series = series
        self.scalars = dict(scalars or {})
        self.metadata = dict(metadata or {})

    def __str__(self):
        return "Result of " + self.name + " with " + str(len(self.scalars)) + " scalars"


class Diagnostic:
    def __init__(self, message, code, field=None, position=None):
        self.message = message
        self.code = code
        self.field = field
        self.position = position

    def __str__(self):
        where = ""
        if self.field is not None:
            where += self.field
        if self.position is not None:
            where += " @ " + str(self.position)
        prefix = "[" + ErrorCodes.get(self.code, ErrorCodes[1]) + "] "
        return prefix + (where + ": " if where else "") + self.message

    @classmethod
    def fromException(cls, exc):
        if isinstance(exc, SequenceParseError):
            return cls(exc.message, 5, exc.field, exc.position)
        if isinstance(exc, ConfigError):
            return cls(exc.message, 2 if exc.field == "experiment" else 3, exc.field, exc.position)
        if isinstance(exc, UnitError):
            return cls(exc.message, 6, exc.field, exc.position)
        if isinstance(exc, ValidationError):
            return cls(exc.message, 4, exc.field, exc.position)
        if isinstance(exc, StabilityError):
            return cls(str(exc), 7)
        if isinstance(exc, FitError):
            return cls(str(exc), 9)
        if isinstance(exc, ModelError):
            return cls(str(exc), 8)
        if isinstance(exc, OutputError):
            return cls(str(exc), 10)
        if isinstance(exc, ReplayError):
            return cls(str(exc), 11)
        return cls(str(exc), 1)


_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zµ/0-9]*)\s*$")


class Util():
    FREQUENCY_UNITS = {"Hz": 1e-6, "kHz": 1e-3, "MHz": 1.0, "GHz": 1e3}
    TIME_UNITS = {"ns": 1.0, "us": 1e3, "µs": 1e3, "ms": 1e6, "s": 1e9}
    FIELD_UNITS = {"mT": 1.0, "T": 1e3, "G": 0.1}

    @classmethod
    def mhzToRadPerSec(self, mhz):
        return 2.0 * np.pi * 1e6 * np.asarray(mhz, dtype=float)

    @classmethod
    def radPerSecToMhz(self, w):
        return np.asarray(w, dtype=float) / (2.0 * np.pi * 1e6)

    @classmethod
    def nsToSeconds(self, ns):
        return np.asarray(ns, dtype=float) * 1e-9

    @classmethod
    def secondsToNs(self, s):
        return np.asarray(s, dtype=float) * 1e9

    @classmethod
    def parseQuantity(self, text, units, default_unit=None, field=None):
        """Parse ``"2.88GHz"`` style text into the canonical unit of ``units``."""
        match = _QUANTITY.match(str(text))
        if match is None:
            raise ValidationError(f"cannot read a number from '{text}'", field=field)
        number, unit = float(match.group(1)), match.group(2)
        if unit == "":
            if default_unit is None:
                raise UnitError(f"'{text}' needs a unit ({', '.join(units)})", field=field)
            unit = default_unit
        if unit not in units:
            raise UnitError(f"unknown unit '{unit}', expected one of {', '.join(units)}", field=field)
        return number * units[unit]

    @classmethod
    def parseFrequency(self, text, field=None):
        return self.parseQuantity(text, self.FREQUENCY_UNITS, "MHz", field)

    @classmethod
    def parseTime(self, text, field=None):
        return self.parseQuantity(text, self.TIME_UNITS, "ns", field)

    @classmethod
    def parseField(self, text, field=None):
        """``"0,0,1mT"`` -> 3-vector in mT; the unit may follow the last component."""
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 3:
            raise ValidationError(f"field '{text}' needs three components", field=field)
        unit = re.sub(r"^[-+0-9.eE]*", "", parts[-1]) or "mT"
        values = []
        for p in parts:
            if re.search(r"[A-Za-z]$", p) is None:
                p = p + unit
            values.append(self.parseQuantity(p, self.FIELD_UNITS, "mT", field))
        return np.array(values)

    @classmethod
    def parseRate(self, text, field=None):
        """Rate in 1/s; ``"5kW/cm2"`` is converted to an optical pump rate."""
        match = _QUANTITY.match(str(text))
        if match is None:
            raise ValidationError(f"cannot read a rate from '{text}'", field=field)
        number, unit = float(match.group(1)), match.group(2)
        if unit in ("", "/s", "Hz"):
            return number
        if unit == "kW/cm2":
            from nvsim.nv_model import pump_rate_from_intensity
            return pump_rate_from_intensity(number)
        raise UnitError(f"unknown rate unit '{unit}', expected /s or kW/cm2", field=field)

    @classmethod
    def parseBool(self, text, field=None):
        value = str(text).strip().lower()
        if value in ("1", "true", "yes", "on"):
            return True
        if value in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"'{text}' is not a boolean", field=field)

    @classmethod
    def parseRange(self, text, field=None):
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 3:
            raise ValidationError(f"range '{text}' needs start,stop,points", field=field)
        try:
            return float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ValidationError(f"cannot read range '{text}'", field=field)

    @classmethod
    def convertParameter(self, spec: ParamSpec, value, field=None):
        """Convert a raw value (usually config or flag text) to the type ``spec`` declares."""
        ptype = spec.ptype
        if ptype == ParameterType.CHOICE:
            try:
                return spec.choices(value)
            except ValueError:
                if isinstance(value, str) and value.upper() in spec.choices.__members__:
                    return spec.choices[value.upper()]
                valid = ", ".join(self.formatValue(c) for c in spec.choices)
                raise ValidationError(f"'{value}' is not one of {valid}", field=field)
        if not isinstance(value, str):
            if ptype in (ParameterType.FIELD, ParameterType.VECTOR, ParameterType.LIST):
                return np.asarray(value, dtype=float)
            if ptype == ParameterType.RANGE:
                return tuple(value)
            if ptype == ParameterType.INT:
                return int(value)
            if ptype in (ParameterType.FLOAT, ParameterType.FREQUENCY, ParameterType.TIME, ParameterType.RATE):
                return float(value)
            return value
        try:
            if ptype == ParameterType.INT:
                return int(value)
            if ptype == ParameterType.FLOAT:
                return float(value)
        except ValueError:
            raise ValidationError(f"'{value}' is not a {ptype.value}", field=field)
        if ptype == ParameterType.BOOL:
            return self.parseBool(value, field)
        if ptype == ParameterType.FREQUENCY:
            return self.parseFrequency(value, field)
        if ptype == ParameterType.TIME:
            return self.parseTime(value, field)
        if ptype == ParameterType.FIELD:
            return self.parseField(value, field)
        if ptype == ParameterType.RATE:
            return self.parseRate(value, field)
        if ptype == ParameterType.RANGE:
            return self.parseRange(value, field)
        if ptype in (ParameterType.VECTOR, ParameterType.LIST):
            try:
                return np.array([float(p) for p in value.split(",") if p.strip()])
            except ValueError:
                raise ValidationError(f"cannot read a list of numbers from '{value}'", field=field)
        return value

    @classmethod
    def resolveParameters(self, schema, values, path):
        """Defaults overlaid with ``values``; unknown names are rejected with their path."""
        unknown = [k for k in values if k not in schema]
        if unknown:
            raise ConfigError(f"unknown parameter '{unknown[0]}'; valid: {', '.join(schema)}",
                              field=unknown[0], position=f"{path}/param[@name='{unknown[0]}']")
        resolved = {}
        for name, spec in schema.items():
            raw = values.get(name, spec.default)
            resolved[name] = None if raw is None else self.convertParameter(spec, raw, name)
        return resolved

    @classmethod
    def formatValue(self, value):
        if isinstance(value, Enum):
            return value.value if isinstance(value.value, str) else value.name.lower()
        if isinstance(value, (list, tuple, np.ndarray)):
            return ",".join(self.formatValue(v) for v in value)
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        return str(value)

    @classmethod
    def formatCSV(self, names, rows, metadata):
        lines = []
        for key, val in metadata.items():
            lines.append("# {0}: {1}".format(key, self.formatValue(val)))
        lines.append(",".join(names))
        for row in np.atleast_2d(rows):
            lines.append(",".join("{0:.12g}".format(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def formatJSON(self, payload):
        return json.dumps(self.jsonable(payload), indent=2, sort_keys=True) + "\n"

    @classmethod
    def jsonable(self, value):
        if isinstance(value, dict):
            return {str(k): self.jsonable(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [self.jsonable(v) for v in value]
        if isinstance(value, np.ndarray):
            if np.iscomplexobj(value):
                return {"real": self.jsonable(value.real.tolist()), "imag": self.jsonable(value.imag.tolist())}
            return self.jsonable(value.tolist())
        if isinstance(value, Enum):
            return value.value
        if isinstance(value, (bool, np.bool_)):
            return bool(value)
        if isinstance(value, (int, np.integer)):
            return int(value)
        if isinstance(value, (float, np.floating)):
            return float("{0:.12g}".format(float(value)))
        if isinstance(value, complex):
            return {"real": value.real, "imag": value.imag}
        return value

    @classmethod
    def dominantFrequency(self, times, signal, min_freq=0.0, pad=16):
        """Strongest non-DC Fourier component of ``signal``, in 1/(time unit).

        Uses zero padding and parabolic interpolation on the magnitude peak.
        """
        freqs, mag = self.amplitudeSpectrum(times, signal, pad)
        valid = freqs > min_freq
        if not np.any(valid):
            return 0.0
        idx = np.flatnonzero(valid)[np.argmax(mag[valid])]
        if 0 < idx < len(mag) - 1:
            a, b, c = mag[idx - 1], mag[idx], mag[idx + 1]
            denom = a - 2 * b + c
            shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
            return float(freqs[idx] + shift * (freqs[1] - freqs[0]))
        return float(freqs[idx])

    @classmethod
    def amplitudeSpectrum(self, times, signal, pad=16):
        times = np.asarray(times, dtype=float)
        signal = np.asarray(signal, dtype=float)
        dt = times[1] - times[0]
        centered = (signal - signal.mean()) * np.hanning(signal.size)
        n = pad * signal.size
        mag = np.abs(np.fft.rfft(centered, n=n))
        freqs = np.fft.rfftfreq(n, d=dt)
        return freqs, mag


def requirePositive(parameters, *names, strict=True):
    """Raise ValidationError naming the first parameter that is not > 0 (>= 0 unless ``strict``)."""
    for name in names:
        value = parameters.get(name)
        if value is None:
            continue
        if (strict and not value > 0) or (not strict and value < 0):
            bound = "> 0" if strict else ">= 0"
            raise ValidationError(f"{name} must be {bound}, got {value}", field=name)
