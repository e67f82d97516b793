"""Pulse programs for the electron-nuclear spin system.

A small line-oriented DSL describes microwave / RF pulses, waits and laser
events::

    # sequence: rabi-pi
    init laser dur=3us
    pulse mw f=2880MHz rabi=140MHz phase=0 dur=3.571ns
    wait 1.5us
    readout laser dur=300ns

The simulator works in the interaction picture of the static Hamiltonian
(``Frame.ROTATING``). A pulse of angle theta and phase phi applies
exp(-i theta/2 (cos phi sx + sin phi sy)) to its addressed two-level subspace.
``Frame.LAB`` integrates the same pulses with the full cosine drive and is
meant for checking the rotating-wave treatment.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from nvsim.nv_model import (LevelBasis, NucleusSpec, SpinHamiltonianParams, _eigensystem, electron_operators,
                            ground_hamiltonian, nuclear_operators, spin_matrices)
from nvsim.odmr import frequency_axis
from nvsim.qops import DensityMatrix, Operator, fidelity, propagator
from nvsim.util import TimeTrace, Util
from nvsim.util.errors import ModelError, SequenceParseError, ValidationError
from nvsim.util.protocol import BellState, Frame, PulseKind

_LOGGER = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
ADDRESSING_BANDWIDTH = 3.0
DSL_FREQUENCY_UNITS = {"MHz": 1.0, "GHz": 1e3}
DSL_TIME_UNITS = {"ns": 1.0, "us": 1e3, "µs": 1e3, "ms": 1e6}


# --------------------------------------------------------------------------
# Program representation

@dataclass(frozen=True)
class PulseEvent:
    """One program step. Durations are ns, frequencies and Rabi rates MHz."""
    kind: PulseKind
    duration: float
    frequency: Optional[float] = None
    rabi: Optional[float] = None
    phase: float = 0.0
    target_transition: Optional[Tuple[str, str]] = None
    angle: Optional[float] = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValidationError(f"duration must be > 0, got {self.duration}", field="dur")
        if self.is_pulse:
            if self.rabi is None or self.rabi < 0:
                raise ValidationError("rabi must be ≥ 0", field="rabi")
            if self.frequency is None and self.target_transition is None:
                raise ValidationError("pulse needs f= or on=", field="f")
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)

    @property
    def is_pulse(self) -> bool:
        return self.kind in (PulseKind.MW_PULSE, PulseKind.RF_PULSE)

    @property
    def channel(self) -> str:
        return "mw" if self.kind == PulseKind.MW_PULSE else "rf"

    def serialize(self) -> str:
        if self.kind == PulseKind.DELAY:
            return f"wait {_num(self.duration)}ns"
        if self.kind == PulseKind.LASER_INIT:
            return f"init laser dur={_num(self.duration)}ns"
        if self.kind == PulseKind.LASER_READOUT:
            return f"readout laser dur={_num(self.duration)}ns"
        parts = [f"pulse {self.channel}"]
        if self.frequency is not None:
            parts.append(f"f={_num(self.frequency)}MHz")
        if self.target_transition is not None:
            parts.append(f"on={self.target_transition[0]}-{self.target_transition[1]}")
        if self.angle is not None:
            parts.append(f"angle={format_angle(self.angle)}")
        else:
            parts.append(f"rabi={_num(self.rabi)}MHz")
        parts.append(f"phase={format_angle(self.phase)}")
        parts.append(f"dur={_num(self.duration)}ns")
        return " ".join(parts)

    def inverted(self) -> "PulseEvent":
        if not self.is_pulse:
            return self
        return replace(self, phase=self.phase + np.pi)


def _num(x: float) -> str:
    return repr(float(x))


def format_angle(value: float) -> str:
    if value == 0:
        return "0"
    frac = Fraction(value / np.pi).limit_denominator(8)
    if abs(float(frac) * np.pi - value) < 1e-12:
        num, den = frac.numerator, frac.denominator
        head = "pi" if num == 1 else f"{num}pi"
        return head if den == 1 else f"{head}/{den}"
    return _num(value)


@dataclass(frozen=True)
class PulseSequence:
    events: Tuple[PulseEvent, ...]
    name: str = "sequence"

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        if not events:
            raise ValidationError("pulse sequence is empty", field="events")
        readouts = [k for k, e in enumerate(events) if e.kind == PulseKind.LASER_READOUT]
        if len(readouts) > 1 or (readouts and readouts[0] != len(events) - 1):
            raise ValidationError("at most one laser readout is allowed and it must be last", field="readout")

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        return PulseSequence(self.events + other.events, f"{self.name}+{other.name}")

    @property
    def total_duration(self) -> float:
        return float(sum(e.duration for e in self.events))

    @property
    def readout(self) -> Optional[PulseEvent]:
        last = self.events[-1]
        return last if last.kind == PulseKind.LASER_READOUT else None

    def inverted(self) -> "PulseSequence":
        """Reverse order with every pulse phase shifted by pi (undoes a resonant program)."""
        body = [e for e in self.events if e.kind != PulseKind.LASER_READOUT]
        return PulseSequence(tuple(e.inverted() for e in reversed(body)), f"{self.name}-inverted")

    def with_readout(self, duration: float = 300.0) -> "PulseSequence":
        body = tuple(e for e in self.events if e.kind != PulseKind.LASER_READOUT)
        return PulseSequence(body + (PulseEvent(PulseKind.LASER_READOUT, duration),), self.name)


def invert_sequence(seq: PulseSequence) -> PulseSequence:
    return seq.inverted()


def format_sequence(seq: PulseSequence) -> str:
    return "\n".join([f"# sequence: {seq.name}"] + [e.serialize() for e in seq.events]) + "\n"


# --------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(r"\S+")
_NUMBER_UNIT = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)([A-Za-zµ]*)$")
_ANGLE = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)?)\*?(pi)?(?:/(\d+(?:\.\d*)?))?$")
_NAME = re.compile(r"^#\s*sequence\s*:\s*(\S.*?)\s*$")


def parse_angle(text: str) -> float:
    """Numbers (radians) or pi expressions such as ``pi/2``, ``3pi/2``, ``0.5pi``."""
    match = _ANGLE.match(text.strip())
    if match is None or (match.group(1) in ("", "+", "-") and match.group(2) is None):
        raise ValueError(f"cannot read angle '{text}'")
    coeff = match.group(1)
    value = float(coeff) if coeff not in ("", "+", "-") else (-1.0 if coeff == "-" else 1.0)
    if match.group(2):
        value *= np.pi
    if match.group(3):
        value /= float(match.group(3))
    return value


def _quantity(text: str, units: Dict[str, float], line: int, col: int, what: str) -> float:
    match = _NUMBER_UNIT.match(text)
    if match is None:
        raise SequenceParseError(f"cannot read {what} '{text}'", line, col)
    unit = match.group(2)
    if unit == "":
        raise SequenceParseError(f"{what} '{text}' needs a unit ({'|'.join(units)})", line, col)
    if unit not in units:
        raise SequenceParseError(f"unknown unit '{unit}' for {what}; expected {'|'.join(units)}", line, col)
    return float(match.group(1)) * units[unit]


def _positive_duration(text: str, line: int, col: int) -> float:
    value = _quantity(text, DSL_TIME_UNITS, line, col, "duration")
    if value <= 0:
        raise SequenceParseError("duration must be > 0", line, col)
    return value


def parse_sequence(text: str, name: Optional[str] = None) -> PulseSequence:
    events: List[PulseEvent] = []
    seq_name = name
    readout_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            match = _NAME.match(stripped)
            if match and seq_name is None:
                seq_name = match.group(1)
            continue
        code = raw.split("#", 1)[0]
        tokens = [(m.group(0), m.start() + 1) for m in _TOKEN.finditer(code)]
        keyword, kcol = tokens[0]
        if readout_line is not None:
            raise SequenceParseError("laser readout must be the last event", lineno, kcol)
        if keyword == "pulse":
            events.append(_parse_pulse(tokens, lineno))
        elif keyword == "wait":
            if len(tokens) < 2:
                raise SequenceParseError("wait needs a duration", lineno, kcol + len(keyword))
            value = "".join(t for t, _ in tokens[1:])
            events.append(PulseEvent(PulseKind.DELAY, _positive_duration(value, lineno, tokens[1][1])))
        elif keyword in ("init", "readout"):
            kind = PulseKind.LASER_INIT if keyword == "init" else PulseKind.LASER_READOUT
            if len(tokens) != 3 or tokens[1][0] != "laser" or not tokens[2][0].startswith("dur="):
                col = tokens[1][1] if len(tokens) > 1 else kcol
                raise SequenceParseError(f"expected '{keyword} laser dur=<time>'", lineno, col)
            dur_text, dcol = tokens[2]
            events.append(PulseEvent(kind, _positive_duration(dur_text[4:], lineno, dcol + 4)))
            if kind == PulseKind.LASER_READOUT:
                readout_line = lineno
        else:
            raise SequenceParseError(f"unknown statement '{keyword}'", lineno, kcol)
    if not events:
        raise SequenceParseError("pulse sequence is empty", 1, 1)
    return PulseSequence(tuple(events), seq_name or "sequence")


def _parse_pulse(tokens, lineno: int) -> PulseEvent:
    if len(tokens) < 2 or tokens[1][0] not in ("mw", "rf"):
        col = tokens[1][1] if len(tokens) > 1 else tokens[0][1]
        raise SequenceParseError("pulse channel must be 'mw' or 'rf'", lineno, col)
    kind = PulseKind.MW_PULSE if tokens[1][0] == "mw" else PulseKind.RF_PULSE
    values: Dict[str, Tuple[object, int]] = {}
    for token, col in tokens[2:]:
        if "=" not in token:
            raise SequenceParseError(f"expected key=value, got '{token}'", lineno, col)
        key, text = token.split("=", 1)
        vcol = col + len(key) + 1
        if key in values:
            raise SequenceParseError(f"duplicate key '{key}'", lineno, col)
        if key == "f":
            value = _quantity(text, DSL_FREQUENCY_UNITS, lineno, vcol, "frequency")
            if value <= 0:
                raise SequenceParseError("frequency must be > 0", lineno, vcol)
        elif key == "rabi":
            value = _quantity(text, DSL_FREQUENCY_UNITS, lineno, vcol, "rabi")
            if value < 0:
                raise SequenceParseError("rabi must be ≥ 0", lineno, vcol)
        elif key == "dur":
            value = _positive_duration(text, lineno, vcol)
        elif key in ("phase", "angle"):
            try:
                value = parse_angle(text)
            except ValueError:
                raise SequenceParseError(f"cannot read {key} '{text}'", lineno, vcol)
            if key == "angle" and value <= 0:
                raise SequenceParseError("angle must be > 0", lineno, vcol)
        elif key == "on":
            parts = text.split("-")
            if len(parts) != 2 or not all(parts):
                raise SequenceParseError(f"expected on=<level>-<level>, got '{text}'", lineno, vcol)
            value = (parts[0], parts[1])
        else:
            raise SequenceParseError(f"unknown key '{key}'", lineno, col)
        values[key] = (value, col)

    first_col = tokens[1][1]
    if "f" not in values and "on" not in values:
        raise SequenceParseError("pulse needs f= or on=", lineno, first_col)
    angle = values.get("angle", (None,))[0]
    rabi = values.get("rabi", (None,))[0]
    dur = values.get("dur", (None,))[0]
    if angle is not None:
        if rabi is not None and dur is not None:
            raise SequenceParseError("angle= and explicit rabi=+dur= are mutually exclusive", lineno,
                                     values["angle"][1])
        if rabi is None and dur is None:
            raise SequenceParseError("angle= needs rabi= or dur=", lineno, values["angle"][1])
        if dur is None:
            if rabi == 0:
                raise SequenceParseError("angle= with rabi=0 never completes", lineno, values["rabi"][1])
            dur = angle / (TWO_PI * rabi) * 1e3
        else:
            rabi = angle / (TWO_PI * dur) * 1e3
    elif rabi is None or dur is None:
        missing = "dur=" if dur is None else "rabi="
        raise SequenceParseError(f"pulse needs {missing} (or angle=)", lineno, first_col)
    return PulseEvent(kind, dur, values.get("f", (None,))[0], rabi, values.get("phase", (0.0,))[0],
                      values.get("on", (None,))[0], angle)


# --------------------------------------------------------------------------
# Spin system

@dataclass(frozen=True, eq=False)
class SpinSystem:
    """Static spin levels plus the drive operators, expressed in a level basis.

    ``to_product`` maps level vectors to the electron (x) nuclear product basis,
    which is where optical pumping acts.
    """
    energies: np.ndarray
    labels: Tuple[str, ...]
    electron_ms: Tuple[int, ...]
    mw_drive: np.ndarray
    rf_drive: Optional[np.ndarray]
    mw_reference: float
    rf_reference: float
    to_product: np.ndarray
    product_dims: Tuple[int, int]
    product_ms: Tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.energies.size

    def index(self, label: str) -> int:
        if label in self.labels:
            return self.labels.index(label)
        if label.isdigit() and 1 <= int(label) <= self.dim:
            return int(label) - 1
        raise ValidationError(f"unknown level '{label}'; levels are {', '.join(self.labels)}", field="on")

    def frequency(self, a: int, b: int) -> float:
        """|E_b - E_a| in MHz."""
        return float(abs(Util.radPerSecToMhz(self.energies[b] - self.energies[a])))

    def coupling(self, channel: str, a: int, b: int) -> float:
        """Drive matrix element of (a, b) relative to the bare spin element."""
        drive, ref = (self.mw_drive, self.mw_reference) if channel == "mw" else (self.rf_drive, self.rf_reference)
        if drive is None:
            raise ModelError("the spin system has no nucleus to drive with RF")
        return float(abs(drive[a, b]) / ref)

    def transitions(self, channel: str, min_coupling: float = 1e-3):
        out = []
        for a in range(self.dim):
            for b in range(a + 1, self.dim):
                c = self.coupling(channel, a, b)
                if c >= min_coupling and self.frequency(a, b) > 0:
                    out.append((a, b, self.frequency(a, b), c))
        return out

    def polarized_state(self) -> DensityMatrix:
        """Electron in m_s=0, nuclei maximally mixed."""
        de, dn = self.product_dims
        e0 = np.zeros((de, de))
        e0[self.product_ms.index(0), self.product_ms.index(0)] = 1.0
        prod = np.kron(e0, np.eye(dn) / dn)
        v = self.to_product
        return DensityMatrix(v.conj().T @ prod @ v, validate=False)

    def level_state(self, label: str) -> DensityMatrix:
        return DensityMatrix.basis(self.dim, self.index(label))

    def laser_init(self, rho: np.ndarray) -> np.ndarray:
        """Optical pumping: electron to m_s=0, nuclear state kept."""
        de, dn = self.product_dims
        v = self.to_product
        prod = (v @ rho @ v.conj().T).reshape(de, dn, de, dn)
        nuclear = np.einsum("ijik->jk", prod)
        e0 = np.zeros((de, de))
        k0 = self.product_ms.index(0)
        e0[k0, k0] = 1.0
        return v.conj().T @ np.kron(e0, nuclear) @ v

    def ms0_population(self, rho: np.ndarray) -> float:
        de, dn = self.product_dims
        v = self.to_product
        diag = np.real(np.diag(v @ rho @ v.conj().T)).reshape(de, dn)
        return float(diag[self.product_ms.index(0)].sum())

    @classmethod
    def from_params(cls, params: SpinHamiltonianParams) -> "SpinSystem":
        h = ground_hamiltonian(params)
        energies, vectors = _eigensystem(h)
        basis = LevelBasis.ground(params)
        dominant = np.argmax(np.abs(vectors) ** 2, axis=0)
        labels = [basis.labels[k] for k in dominant]
        if len(set(labels)) != len(labels):
            labels = [f"{lab}#{n + 1}" for n, lab in enumerate(labels)]
        sx, _, _ = electron_operators(params)
        mw = vectors.conj().T @ sx @ vectors
        rf, rf_ref = None, 0.5
        if params.nuclei:
            nucleus = params.nuclei[0]
            ix, _, _ = nuclear_operators(params, 0)
            ratio = params.gamma_e / nucleus.gamma_n if nucleus.gamma_n else 0.0
            rf = vectors.conj().T @ (ratio * sx - ix) @ vectors
            rf_ref = abs(spin_matrices(nucleus.spin)[0][0, 1])
        return cls(np.asarray(energies, dtype=float), tuple(labels),
                   tuple(basis.electron_ms[k] for k in dominant), mw, rf, 1.0 / np.sqrt(2.0), rf_ref,
                   np.asarray(vectors, dtype=complex), (3, params.dim // 3), (1, 0, -1))

    @classmethod
    def bell(cls, params: Optional[SpinHamiltonianParams] = None) -> "SpinSystem":
        """Secular four-level electron (m_s 0, -1) x 13C subspace.

        Levels: 1=|-1,+1/2>, 2=|-1,-1/2>, 3=|0,+1/2>, 4=|0,-1/2>, i.e. with the
        electron written as up = m_s -1 and down = m_s 0: 1=|uu>, 2=|ud>,
        3=|du>, 4=|dd>.
        """
        if params is None:
            params = bell_params()
        if len(params.nuclei) != 1 or params.nuclei[0].spin != 0.5:
            raise ValidationError("the Bell subspace needs exactly one spin-1/2 nucleus", field="nuclei")
        nucleus = params.nuclei[0]
        bz = params.B0[2]
        levels = [(-1, 0.5), (-1, -0.5), (0, 0.5), (0, -0.5)]
        mhz = [params.D * ms ** 2 + params.gamma_e * bz * ms + nucleus.a_parallel * ms * mi
               - nucleus.gamma_n * bz * mi for ms, mi in levels]
        mw = np.zeros((4, 4), dtype=complex)
        rf = np.zeros((4, 4), dtype=complex)
        ratio = params.gamma_e / nucleus.gamma_n
        for a, b in ((0, 2), (1, 3)):
            mw[a, b] = mw[b, a] = 1.0 / np.sqrt(2.0)
            rf[a, b] = rf[b, a] = ratio / np.sqrt(2.0)
        for a, b in ((0, 1), (2, 3)):
            rf[a, b] = rf[b, a] = -0.5
        return cls(Util.mhzToRadPerSec(np.array(mhz)), ("1", "2", "3", "4"), (-1, -1, 0, 0), mw, rf,
                   1.0 / np.sqrt(2.0), 0.5, np.eye(4, dtype=complex), (2, 2), (-1, 0))


def bell_params() -> SpinHamiltonianParams:
    return SpinHamiltonianParams(B0=(0.0, 0.0, 20.0), nuclei=(NucleusSpec.carbon13_isotropic(126.0),))


def _as_system(params) -> SpinSystem:
    if isinstance(params, SpinSystem):
        return params
    if isinstance(params, SpinHamiltonianParams):
        return SpinSystem.from_params(params)
    raise ValidationError("expected SpinHamiltonianParams or SpinSystem", field="params")


# --------------------------------------------------------------------------
# Evolution

@dataclass(frozen=True)
class _Addressed:
    a: int
    b: int
    detuning: float      # rad/s, |w_ab| - w_pulse
    rabi: float          # Hz, effective
    orientation: int     # +1 when a is the lower level


def _address(event: PulseEvent, system: SpinSystem) -> Optional[_Addressed]:
    channel = event.channel
    if event.target_transition is not None:
        a = system.index(event.target_transition[0])
        b = system.index(event.target_transition[1])
        if a == b:
            raise ValidationError("on= needs two different levels", field="on")
        coupling = system.coupling(channel, a, b)
        if coupling == 0 and event.angle is None:
            _LOGGER.warning(f"{channel} drive has no matrix element on {system.labels[a]}-{system.labels[b]}")
    else:
        best = None
        for a_, b_, freq, c in system.transitions(channel):
            offset = abs(freq - event.frequency)
            if offset > ADDRESSING_BANDWIDTH * max(event.rabi, 1e-12):
                continue
            key = (offset, -c)
            if best is None or key < best[0]:
                best = (key, a_, b_)
        if best is None:
            _LOGGER.warning(f"off-resonant pulse has negligible effect ({channel} at {event.frequency} MHz)")
            return None
        _, a, b = best
        coupling = system.coupling(channel, a, b)
    freq = system.frequency(a, b)
    pulse_freq = freq if event.frequency is None else event.frequency
    detuning = TWO_PI * 1e6 * (freq - pulse_freq)
    if event.angle is not None:
        rabi = event.angle / (TWO_PI * event.duration * 1e-9)
    else:
        rabi = event.rabi * 1e6 * coupling
    orientation = 1 if system.energies[a] <= system.energies[b] else -1
    return _Addressed(a, b, detuning, rabi, orientation)


_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def _subspace_unitary(target: _Addressed, phase: float, tau: float, t0: float) -> np.ndarray:
    h = (-0.5 * target.orientation * target.detuning * _SZ
         + np.pi * target.rabi * (np.cos(phase) * _SX + np.sin(phase) * _SY))
    u = propagator(h, tau).data
    if target.detuning:
        w = 0.5 * target.orientation * target.detuning
        frame = lambda t: np.diag([np.exp(1j * w * t), np.exp(-1j * w * t)])
        u = frame(t0 + tau).conj().T @ u @ frame(t0)
    return u


def _embed_subspace(u_sub: np.ndarray, a: int, b: int, dim: int) -> np.ndarray:
    u = np.eye(dim, dtype=complex)
    idx = [a, b]
    u[np.ix_(idx, idx)] = u_sub
    return u


def pulse_propagator(event: PulseEvent, params, t0: float = 0.0) -> Operator:
    """Full-space rotating-frame propagator of a single pulse."""
    system = _as_system(params)
    target = _address(event, system)
    if target is None:
        return Operator.identity(system.dim)
    u_sub = _subspace_unitary(target, event.phase, event.duration * 1e-9, t0)
    return Operator(_embed_subspace(u_sub, target.a, target.b, system.dim))


def _lab_pulse(target: _Addressed, event: PulseEvent, system: SpinSystem, t0: float,
               steps_per_period: int = 40) -> np.ndarray:
    tau = event.duration * 1e-9
    a, b = target.a, target.b
    e_a, e_b = system.energies[a], system.energies[b]
    omega_p = abs(e_b - e_a) - target.detuning
    period = TWO_PI / max(omega_p, 1e-30)
    n = max(int(np.ceil(tau / period * steps_per_period)), 200)
    dt = tau / n
    ref = min(e_a, e_b)
    coupling = TWO_PI * target.rabi
    phase = target.orientation * event.phase
    u = np.eye(2, dtype=complex)
    for k in range(n):
        t = t0 + (k + 0.5) * dt
        c = coupling * np.cos(omega_p * t - phase)
        h = np.array([[e_a - ref, c], [c, e_b - ref]], dtype=complex)
        u = propagator(h, dt).data @ u
    # restore the reference energy dropped above
    u = u * np.exp(-1j * ref * tau)
    full = np.diag(np.exp(-1j * system.energies * tau)).astype(complex)
    full[np.ix_([a, b], [a, b])] = u
    return full


def _dephase(rho: np.ndarray, system: SpinSystem, rate: float, tau: float) -> np.ndarray:
    if rate <= 0:
        return rho
    ms = np.array(system.electron_ms)
    mask = np.where(ms[:, None] == ms[None, :], 1.0, np.exp(-rate * tau))
    return rho * mask


def simulate_sequence(seq: PulseSequence, params, initial: Optional[DensityMatrix] = None,
                      frame: Frame = Frame.ROTATING, dephasing: float = 0.0) -> Tuple[DensityMatrix, TimeTrace]:
    """Run a pulse program; returns the final state and level populations at event boundaries.

    ``dephasing`` (1/s) damps coherences between levels of different m_s during
    every event. Readout values are listed in ``trace.metadata["readouts"]``.
    """
    system = _as_system(params)
    if initial is None:
        initial = system.polarized_state()
    if initial.dim != system.dim:
        raise ValidationError(f"initial state has dim {initial.dim}, the spin system has {system.dim}",
                              field="initial")
    rho = np.array(initial.data, dtype=complex)
    t = 0.0
    times = [0.0]
    pops = [np.real(np.diag(rho)).copy()]
    ms0 = [system.ms0_population(rho)]
    readouts = []
    for event in seq:
        tau = event.duration * 1e-9
        if event.is_pulse:
            target = _address(event, system)
            if target is not None:
                if frame == Frame.ROTATING:
                    u = _embed_subspace(_subspace_unitary(target, event.phase, tau, t), target.a, target.b,
                                        system.dim)
                else:
                    u = _lab_pulse(target, event, system, t)
                rho = u @ rho @ u.conj().T
            elif frame == Frame.LAB:
                phases = np.exp(-1j * system.energies * tau)
                rho = (phases[:, None] * rho) * phases.conj()[None, :]
        elif event.kind == PulseKind.DELAY:
            if frame == Frame.LAB:
                phases = np.exp(-1j * system.energies * tau)
                rho = (phases[:, None] * rho) * phases.conj()[None, :]
        elif event.kind == PulseKind.LASER_INIT:
            rho = system.laser_init(rho)
        elif event.kind == PulseKind.LASER_READOUT:
            readouts.append(system.ms0_population(rho))
            rho = system.laser_init(rho)
        rho = _dephase(rho, system, dephasing, tau)
        rho = 0.5 * (rho + rho.conj().T)
        t += tau
        times.append(t)
        pops.append(np.real(np.diag(rho)).copy())
        ms0.append(system.ms0_population(rho))
    pops = np.array(pops)
    values = {f"p{k + 1}": pops[:, k] for k in range(system.dim)}
    values["ms0"] = np.array(ms0)
    trace = TimeTrace(np.array(times), values,
                      metadata={"sequence": seq.name, "frame": frame.value, "readouts": readouts,
                                "levels": list(system.labels)})
    return DensityMatrix(rho, validate=False), trace


def rabi_trace(params: SpinHamiltonianParams, rabi: float, t_max: float, n_points: int,
               dephasing_rate: float = 0.0, transition: Optional[Tuple[str, str]] = None) -> TimeTrace:
    """Resonant Rabi nutation on m_s 0 <-> -1 with an exponential envelope.

    ``t_max`` in ns. Population of the starting level follows
    1/2 + (cos^2(pi W t) - 1/2) exp(-dephasing_rate t).
    """
    if rabi <= 0:
        raise ValidationError(f"rabi must be > 0, got {rabi}", field="rabi")
    if dephasing_rate < 0:
        raise ValidationError("dephasing_rate must be >= 0", field="dephasing_rate")
    if n_points < 2 or t_max <= 0:
        raise ValidationError("need t_max > 0 and at least 2 points", field="n_points")
    system = SpinSystem.from_params(params)
    if transition is None:
        a = next(k for k, ms in enumerate(system.electron_ms) if ms == 0)
        candidates = [(system.coupling("mw", a, b), b) for b, ms in enumerate(system.electron_ms) if ms == -1]
        b = max(candidates)[1]
    else:
        a, b = system.index(transition[0]), system.index(transition[1])
    effective = rabi * system.coupling("mw", a, b)
    dt = t_max / (n_points - 1)
    if 1e3 / (effective * dt) < 8:
        raise ValidationError(f"{n_points} points over {t_max} ns give fewer than 8 samples per Rabi period",
                              field="n_points")
    times = np.linspace(0.0, t_max, n_points) * 1e-9
    angle = np.pi * effective * 1e6 * times
    # U(t) = cos(a) 1 - i sin(a) sx on the addressed pair
    stay = np.abs(np.cos(angle)) ** 2
    envelope = np.exp(-dephasing_rate * times)
    p_a = 0.5 + (stay - 0.5) * envelope
    trace = TimeTrace(times, {"p_start": p_a, "p_target": 1.0 - p_a},
                      metadata={"rabi_mhz": effective, "dephasing_rate": dephasing_rate,
                                "transition": f"{system.labels[a]}-{system.labels[b]}"})
    return trace


# --------------------------------------------------------------------------
# Hahn echo

def echo_frequencies(params: SpinHamiltonianParams, min_freq: float = 0.0) -> List[float]:
    """Nuclear splittings (MHz) of the m_s=0 and m_s=-1 manifolds plus their sums and differences."""
    system = SpinSystem.from_params(params)
    per_manifold = {}
    for ms in (0, -1):
        levels = [system.energies[k] for k, m in enumerate(system.electron_ms) if m == ms]
        splits = [abs(Util.radPerSecToMhz(x - y)) for i, x in enumerate(levels) for y in levels[i + 1:]]
        per_manifold[ms] = [float(s) for s in splits]
    out = set(per_manifold[0]) | set(per_manifold[-1])
    for x in per_manifold[0]:
        for y in per_manifold[-1]:
            out.update({x + y, abs(x - y)})
    return sorted(f for f in out if f >= min_freq)


def _finite_echo_pulses(h: np.ndarray, x: np.ndarray, dn: int, rabi: float):
    """pi/2 and pi pulses of Rabi frequency ``rabi`` (MHz) in the frame rotating at the 0 <-> -1 line centre.

    Eigenstates are sorted into m_s manifolds by their dominant electron
    component; the drive keeps only its 0 <-> -1 manifold elements. Returns
    the pulses and the rotating-frame Hamiltonian used for free evolution.
    """
    energies, vectors = np.linalg.eigh(h)
    weights = np.abs(vectors.reshape(3, dn, -1)) ** 2
    manifold = np.argmax(weights.sum(axis=1), axis=0)
    if not np.any(manifold == 1) or not np.any(manifold == 2):
        raise ModelError("cannot identify the m_s 0 and -1 manifolds for finite pulses")
    projector = [(vectors[:, manifold == m]) @ vectors[:, manifold == m].conj().T for m in range(3)]
    carrier = energies[manifold == 2].mean() - energies[manifold == 1].mean()
    h_rot = h - carrier * projector[2]
    x_rwa = projector[1] @ x @ projector[2] + projector[2] @ x @ projector[1]
    omega = 2.0 * np.pi * rabi * 1e6
    drive = h_rot + 0.5 * omega * x_rwa
    return propagator(drive, 0.5 * np.pi / omega).data, propagator(drive, np.pi / omega).data, h_rot


def hahn_echo_trace(params: SpinHamiltonianParams, tau_range, rabi: Optional[float] = None) -> TimeTrace:
    """Two-pulse echo amplitude versus tau (ns) on the m_s 0 <-> -1 transition.

    Without ``rabi`` the pulses are ideal hard rotations of the electron,
    non-selective in the nuclear states. With ``rabi`` (MHz) they last
    theta/(2 pi rabi) and act together with the rotating-frame Hamiltonian, so slow
    pulses only partly excite the hyperfine lines.
    """
    taus = frequency_axis(tau_range, "tau_range")
    if taus[0] < 0:
        raise ValidationError("tau must be >= 0", field="tau_range")
    if rabi is not None and rabi <= 0:
        raise ValidationError("rabi must be > 0", field="rabi")
    isotropic_zero_field = (params.nuclei and all(n.a_parallel == n.a_perp for n in params.nuclei)
                            and not any(params.B0))
    if isotropic_zero_field:
        _LOGGER.warning("isotropic hyperfine coupling at zero field gives no branching; echo is unmodulated")
        params = replace(params, nuclei=())
    if not params.nuclei:
        _LOGGER.info("No nucleus: flat echo envelope")
    h = ground_hamiltonian(params).data
    dn = params.dim // 3
    e_sub = np.zeros((3, 3), dtype=complex)
    e_sub[1, 2] = e_sub[2, 1] = 1.0
    x = np.kron(e_sub, np.eye(dn))
    if rabi is None:
        half = propagator(x, np.pi / 4).data
        full = propagator(x, np.pi / 2).data
    else:
        half, full, h = _finite_echo_pulses(h, x, dn, rabi)
    energies, vectors = np.linalg.eigh(h)
    rho0 = np.kron(np.diag([0.0, 1.0, 0.0]), np.eye(dn) / dn).astype(complex)
    rho0 = half @ rho0 @ half.conj().T
    coherence = np.kron(np.array([[0, 0, 0], [0, 0, 1], [0, 0, 0]], dtype=complex), np.eye(dn))
    echo = np.empty(taus.size)
    for k, tau in enumerate(taus * 1e-9):
        u = (vectors * np.exp(-1j * energies * tau)) @ vectors.conj().T
        step = u @ full @ u
        rho = step @ rho0 @ step.conj().T
        echo[k] = 2.0 * abs(np.trace(rho @ coherence))
    metadata = {"echo_frequencies_mhz": echo_frequencies(params) if params.nuclei else [],
                "pulse": "hard" if rabi is None else "finite", "rabi_mhz": rabi}
    return TimeTrace(taus * 1e-9, {"echo": echo}, metadata=metadata)


# --------------------------------------------------------------------------
# Bell states and tomography

BELL_MW_RABI = 10.0
BELL_RF_RABI = 1.0


def _pulse(channel: str, a: str, b: str, angle: float, phase: float, rabi: Optional[float] = None) -> PulseEvent:
    kind = PulseKind.MW_PULSE if channel == "mw" else PulseKind.RF_PULSE
    rabi = rabi if rabi is not None else (BELL_MW_RABI if channel == "mw" else BELL_RF_RABI)
    return PulseEvent(kind, angle / (TWO_PI * rabi) * 1e3, None, rabi, phase, (a, b), angle)


_BELL_RECIPES = {
    BellState.PSI_MINUS: (("mw", "3", "1", np.pi / 2, np.pi / 2), ("rf", "1", "2", np.pi, 3 * np.pi / 2)),
    BellState.PSI_PLUS: (("rf", "3", "4", np.pi / 2, np.pi / 2), ("mw", "4", "2", np.pi, np.pi / 2)),
    BellState.PHI_PLUS: (("mw", "3", "1", np.pi / 2, np.pi / 2), ("rf", "3", "4", np.pi, np.pi / 2)),
    BellState.PHI_MINUS: (("mw", "3", "1", np.pi / 2, 3 * np.pi / 2), ("rf", "3", "4", np.pi, np.pi / 2)),
}


def prepare_bell(which: BellState, mw_rabi: float = BELL_MW_RABI, rf_rabi: float = BELL_RF_RABI) -> PulseSequence:
    """Two-pulse program taking level 3 (|du>) to the requested Bell state."""
    which = BellState(which)
    events = []
    for channel, a, b, angle, phase in _BELL_RECIPES[which]:
        events.append(_pulse(channel, a, b, angle, phase, mw_rabi if channel == "mw" else rf_rabi))
    return PulseSequence(tuple(events), which.value)


def bell_vector(which: BellState) -> np.ndarray:
    which = BellState(which)
    s = 1.0 / np.sqrt(2.0)
    vec = np.zeros(4, dtype=complex)
    if which in (BellState.PSI_MINUS, BellState.PSI_PLUS):
        vec[2] = s
        vec[1] = -s if which == BellState.PSI_MINUS else s
    else:
        vec[3] = s
        vec[0] = s if which == BellState.PHI_PLUS else -s
    return vec


def bell_density(which: BellState) -> DensityMatrix:
    return DensityMatrix.from_state(bell_vector(which))


@dataclass(frozen=True, eq=False)
class TomographyResult:
    rho: DensityMatrix
    raw: np.ndarray
    provenance: Dict[Tuple[int, int], str]
    reference: DensityMatrix
    hermitian_ok: bool
    trace_ok: bool
    physical: bool

    @property
    def fidelity(self) -> float:
        return fidelity(self.rho, self.reference)

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.rho.data - self.reference.data)))


# swaps that turn a population difference into an m_s=0 readout change:
# (with, without) suffixes; readout(with) - readout(without) = sign * (rho_aa - rho_bb)
_DIFFERENCE_RECIPES = {
    ("3", "1"): ((), (("3", "1"),), 1.0),
    ("4", "2"): ((), (("4", "2"),), 1.0),
    ("1", "2"): ((("1", "2"), ("3", "1")), (("3", "1"),), -1.0),
    ("3", "4"): ((("4", "2"),), (("3", "4"), ("4", "2")), 1.0),
}
_CHANNEL = {("3", "1"): "mw", ("4", "2"): "mw", ("1", "2"): "rf", ("3", "4"): "rf"}
_SWAP_PHASE = np.pi / 2


def _swap(a: str, b: str) -> PulseEvent:
    return _pulse(_CHANNEL[(a, b)], a, b, np.pi, _SWAP_PHASE)


def _readout(system: SpinSystem, events: Sequence[PulseEvent], initial: DensityMatrix,
             dephasing: float = 0.0) -> float:
    seq = PulseSequence(tuple(events) + (PulseEvent(PulseKind.LASER_READOUT, 300.0),), "probe")
    _, trace = simulate_sequence(seq, system, initial, dephasing=dephasing)
    return trace.metadata["readouts"][0]


def _population_difference(system, prefix, a, b, initial) -> float:
    with_, without, sign = _DIFFERENCE_RECIPES[(a, b)]
    hi = _readout(system, list(prefix) + [_swap(*p) for p in with_], initial)
    lo = _readout(system, list(prefix) + [_swap(*p) for p in without], initial)
    return sign * (hi - lo)


def probe_pulse(a: str, b: str, quadrature: float) -> PulseEvent:
    """pi/2 probe whose population difference reads 2 Re(rho_ab e^{i quadrature})."""
    return _pulse(_CHANNEL.get((a, b)) or _CHANNEL[(b, a)], a, b, np.pi / 2, quadrature + 1.5 * np.pi)


def _coherence(system, prefix, a, b, initial) -> complex:
    """rho_ab of the state after ``prefix`` from two probe quadratures."""
    key = (a, b) if (a, b) in _DIFFERENCE_RECIPES else (b, a)
    sign = 1.0 if key == (a, b) else -1.0
    values = []
    for quadrature in (0.0, np.pi / 2):
        diff = _population_difference(system, list(prefix) + [probe_pulse(a, b, quadrature)], key[0], key[1],
                                      initial)
        values.append(sign * diff)
    return 0.5 * (values[0] - 1j * values[1])


def tomography_reconstruct(prep: PulseSequence, params=None, noise: float = 0.0,
                           tolerance: float = 0.02) -> TomographyResult:
    """Step-by-step density-matrix measurement of the state ``prep`` makes from level 3.

    Diagonals come from the four allowed transitions plus the trace condition,
    first-order coherences from pi/2 probes at quadratures 0 and pi/2, and the
    two second-order coherences after an EPR pi swap on 3-1. ``noise`` is an
    electron dephasing rate (1/s) applied while the preparation runs.
    """
    system = params if isinstance(params, SpinSystem) else SpinSystem.bell(params)
    if system.dim != 4:
        raise ValidationError("tomography needs the four-level electron x 13C subspace", field="params")
    start = system.level_state("3")
    body = PulseSequence(tuple(e for e in prep if e.kind != PulseKind.LASER_READOUT), prep.name)
    prepared, _ = simulate_sequence(body, system, start, dephasing=noise)
    provenance: Dict[Tuple[int, int], str] = {}

    pairs = [("3", "1"), ("4", "2"), ("1", "2"), ("3", "4")]
    rows, rhs = [], []
    for a, b in pairs:
        row = np.zeros(4)
        row[int(a) - 1], row[int(b) - 1] = 1.0, -1.0
        rows.append(row)
        rhs.append(_population_difference(system, [], a, b, prepared))
    rows.append(np.ones(4))
    rhs.append(1.0)
    diag, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    raw = np.diag(diag).astype(complex)
    for k in range(4):
        provenance[(k, k)] = "odmr-differences"

    for a, b in pairs:
        i, j = int(a) - 1, int(b) - 1
        raw[i, j] = _coherence(system, [], a, b, prepared)
        raw[j, i] = _coherence(system, [], b, a, prepared)
        provenance[(i, j)] = provenance[(j, i)] = f"probe {a}-{b}"

    swap = _swap("3", "1")
    u31 = -1j * np.exp(-1j * _SWAP_PHASE)   # <3|U|1>
    u13 = -1j * np.exp(1j * _SWAP_PHASE)    # <1|U|3>
    # rho_14: level 1 -> 3 under the swap, read as rho'_34
    raw[0, 3] = _coherence(system, [swap], "3", "4", prepared) / u31
    raw[3, 0] = _coherence(system, [swap], "4", "3", prepared) / np.conj(u31)
    # rho_32: level 3 -> 1 under the swap, read as rho'_12
    raw[2, 1] = _coherence(system, [swap], "1", "2", prepared) / u13
    raw[1, 2] = _coherence(system, [swap], "2", "1", prepared) / np.conj(u13)
    for ij in ((0, 3), (3, 0), (1, 2), (2, 1)):
        provenance[ij] = "swap 3-1 then probe"

    herm = 0.5 * (raw + raw.conj().T)
    hermitian_ok = bool(np.max(np.abs(raw - raw.conj().T)) <= tolerance)
    trace_ok = bool(abs(np.trace(raw).real - 1.0) <= tolerance)
    physical = bool(np.min(np.linalg.eigvalsh(herm)) >= -tolerance)
    if not hermitian_ok:
        _LOGGER.warning("Reconstructed density matrix is not Hermitian within tolerance")
    return TomographyResult(DensityMatrix(herm, validate=False), raw, provenance, prepared,
                            hermitian_ok, trace_ok, physical)
