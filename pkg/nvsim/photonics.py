"""Photon statistics of single emitters and the EIT lambda system.

Lambda-system frequencies are MHz and Rabi frequencies follow the
``(Omega / 2)(|i><j| + h.c.)`` convention; relaxation rates are 1/s.
"""
import logging
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from nvsim.nv_model import steady_state
from nvsim.odmr import frequency_axis, measure_fwhm
from nvsim.qops import CollapseChannel, Operator, lindblad_steady_state, propagator
from nvsim.util import Spectrum
from nvsim.util.errors import ValidationError
from nvsim.util.protocol import Presentation

_LOGGER = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
FLUORESCENCE_CONTRAST = 0.15


# --------------------------------------------------------------------------
# Single emitters

@dataclass(frozen=True)
class EmitterModel:
    lifetime: float                 # ns
    quantum_yield: float = 1.0
    isc_rate: float = 0.0           # 1/s
    shelf_lifetime: float = 100.0   # ns
    zpl_wavelength: float = 637.0   # nm
    zpl_width: float = 0.0          # nm
    debye_waller: float = 1.0

    def __post_init__(self):
        if not self.lifetime > 0:
            raise ValidationError(f"lifetime must be > 0, got {self.lifetime}", field="lifetime")
        if not 0.0 <= self.debye_waller <= 1.0:
            raise ValidationError("debye_waller must lie in [0, 1]", field="debye_waller")
        if not 0.0 <= self.quantum_yield <= 1.0:
            raise ValidationError("quantum_yield must lie in [0, 1]", field="quantum_yield")
        if self.isc_rate < 0:
            raise ValidationError("isc_rate must be >= 0", field="isc_rate")
        if not self.shelf_lifetime > 0:
            raise ValidationError("shelf_lifetime must be > 0", field="shelf_lifetime")

    @classmethod
    def nv(cls) -> "EmitterModel":
        return cls(lifetime=13.0, quantum_yield=0.7, isc_rate=1e7, shelf_lifetime=333.0,
                   zpl_wavelength=637.0, zpl_width=0.0, debye_waller=0.04)

    @classmethod
    def ne8(cls) -> "EmitterModel":
        return cls(lifetime=5.0, quantum_yield=0.7, isc_rate=1.5e7, shelf_lifetime=100.0,
                   zpl_wavelength=800.0, zpl_width=1.5, debye_waller=0.7)

    def rate_matrix(self, pump_rate: float) -> np.ndarray:
        """3x3 rate matrix over (ground, excited, shelf), M[to, from]."""
        if pump_rate < 0:
            raise ValidationError("pump_rate must be >= 0", field="pump_rate")
        m = np.zeros((3, 3))
        m[1, 0] = pump_rate
        m[0, 1] = 1e9 / self.lifetime
        m[2, 1] = self.isc_rate
        m[0, 2] = 1e9 / self.shelf_lifetime
        return m - np.diag(m.sum(axis=0))


def _excited_population(m: EmitterModel, pump_rate: float, times_s: np.ndarray) -> np.ndarray:
    rates = m.rate_matrix(pump_rate)
    solution = solve_ivp(lambda t, p: rates @ p, (0.0, float(times_s[-1]) if times_s.size else 0.0),
                         [1.0, 0.0, 0.0], method="Radau", t_eval=times_s, rtol=1e-10, atol=1e-13,
                         jac=lambda t, p: rates)
    if not solution.success:
        raise ValidationError(f"g2 integration failed: {solution.message}", field="tau_range")
    return solution.y[1]


def g2_curve(m: EmitterModel, pump_rate: float, tau_range=(-100.0, 100.0, 401)) -> Spectrum:
    """g2(tau) from the three-level rate equations; tau in ns.

    After a detected photon the emitter is in the ground state, so g2 is the
    excited population evolved from the ground state over its steady-state value.
    """
    if not pump_rate > 0:
        raise ValidationError(f"pump_rate must be > 0, got {pump_rate}", field="pump_rate")
    axis = frequency_axis(tau_range, "tau_range")
    if not axis[0] <= 0.0 <= axis[-1]:
        raise ValidationError("tau_range must span 0", field="tau_range")
    p_ss = steady_state(m.rate_matrix(pump_rate))[1]
    lags = np.unique(np.abs(axis))
    excited = _excited_population(m, pump_rate, lags * 1e-9)
    excited[lags == 0] = 0.0
    values = np.interp(np.abs(axis), lags, excited / p_ss)
    metadata = {"pump_rate": pump_rate, "lifetime_ns": m.lifetime, "isc_rate": m.isc_rate,
                "shelf_lifetime_ns": m.shelf_lifetime, "steady_excited": p_ss}
    return Spectrum(axis, values, metadata, axis_name="delay_ns", value_name="g2")


def zpl_photon_rate(m: EmitterModel, pump_rate: float) -> float:
    """Steady-state emission into the zero-phonon line (photons/s)."""
    p_ss = steady_state(m.rate_matrix(pump_rate))[1]
    return float(p_ss * 1e9 / m.lifetime * m.quantum_yield * m.debye_waller)


# --------------------------------------------------------------------------
# Lambda system

@dataclass(frozen=True)
class LambdaSystem:
    """|1> and |3> ground levels, |2> excited; probe on 1-2, coupling on 3-2."""
    energies: Tuple[float, float, float]
    omega_c: float
    omega_p: float
    coupling_freq: float
    ground_dephasing: float = np.pi * 1e6
    excited_decay: float = 2e7
    ground_relaxation: float = 1e5

    def __post_init__(self):
        object.__setattr__(self, "energies", tuple(float(e) for e in self.energies))
        if len(self.energies) != 3:
            raise ValidationError("a lambda system needs three level energies", field="energies")
        if self.omega_c < 0 or self.omega_p < 0:
            raise ValidationError("Rabi frequencies must be >= 0", field="omega_c")
        if self.ground_dephasing < 0 or self.excited_decay < 0 or self.ground_relaxation < 0:
            raise ValidationError("relaxation rates must be >= 0", field="ground_dephasing")

    @classmethod
    def microwave(cls, coupling_freq: float = 2803.0, splitting: float = 6.0, omega_c: float = 0.3,
                  omega_p: float = 0.05, **rates) -> "LambdaSystem":
        """Spin-sublevel lambda: |3> at 0, |2> resonant with the coupling field, |1> at ``splitting``."""
        return cls((splitting, coupling_freq, 0.0), omega_c, omega_p, coupling_freq, **rates)

    @property
    def probe_transition(self) -> float:
        return self.energies[1] - self.energies[0]

    @property
    def coupling_transition(self) -> float:
        return self.energies[1] - self.energies[2]

    @property
    def coupling_detuning(self) -> float:
        return self.coupling_freq - self.coupling_transition

    @property
    def two_photon_resonance(self) -> float:
        """Probe frequency where the dark state forms."""
        return self.coupling_freq + self.energies[2] - self.energies[0]

    def hamiltonian(self, probe_freq: float) -> Operator:
        """Rotating-frame Hamiltonian in rad/s."""
        dp = probe_freq - self.probe_transition
        dc = self.coupling_detuning
        h = np.zeros((3, 3), dtype=complex)
        h[1, 1] = -dp
        h[2, 2] = -(dp - dc)
        h[0, 1] = h[1, 0] = 0.5 * self.omega_p
        h[2, 1] = h[1, 2] = 0.5 * self.omega_c
        return Operator(TWO_PI * 1e6 * h, hamiltonian=True)

    def channels(self) -> List[CollapseChannel]:
        def op(to, frm):
            return Operator.transition(3, to, frm)

        dephase = np.diag([1.0, 0.0, -1.0]).astype(complex)
        return [
            CollapseChannel(op(0, 1), 0.5 * self.excited_decay),
            CollapseChannel(op(2, 1), 0.5 * self.excited_decay),
            CollapseChannel(Operator(dephase), 0.5 * self.ground_dephasing),
            CollapseChannel(op(0, 2), self.ground_relaxation),
            CollapseChannel(op(2, 0), self.ground_relaxation),
        ]


def _steady_states(sys: LambdaSystem, axis: np.ndarray) -> np.ndarray:
    channels = sys.channels()
    return np.array([lindblad_steady_state(sys.hamiltonian(f), channels).data for f in axis])


def _present(rhos: np.ndarray, presentation: Presentation, scale: float) -> np.ndarray:
    if presentation == Presentation.ABSORPTION:
        return -np.imag(rhos[:, 1, 0]) / scale
    return 1.0 - FLUORESCENCE_CONTRAST * np.real(rhos[:, 1, 1]) / scale


def _reference_scale(sys: LambdaSystem, presentation: Presentation) -> float:
    """Peak of the coupling-free response, used to normalize both presentations."""
    ref = replace(sys, omega_c=0.0)
    rho = _steady_states(ref, np.array([sys.probe_transition]))[0]
    value = -np.imag(rho[1, 0]) if presentation == Presentation.ABSORPTION else np.real(rho[1, 1])
    return float(value) if value > 0 else 1.0


def eit_probe_spectrum(sys: LambdaSystem, probe_range,
                       presentation: Presentation = Presentation.FLUORESCENCE) -> Spectrum:
    """Steady-state response versus probe frequency (MHz).

    FLUORESCENCE shows the ODMR-detected signal, which rises at two-photon
    resonance; ABSORPTION shows the probe absorption -Im(rho_21), which dips.
    """
    presentation = Presentation(presentation)
    axis = frequency_axis(probe_range, "probe_range")
    scale = _reference_scale(sys, presentation)
    values = _present(_steady_states(sys, axis), presentation, scale)
    metadata = {
        "presentation": presentation.value,
        "coupling_mhz": sys.coupling_freq,
        "two_photon_resonance_mhz": sys.two_photon_resonance,
        "omega_c_mhz": sys.omega_c,
        "omega_p_mhz": sys.omega_p,
        "ground_dephasing": sys.ground_dephasing,
    }
    if sys.omega_c == 0:
        metadata["note"] = "omega_c = 0: single resonance, no EIT"
        _LOGGER.info("Coupling field off; spectrum has no transparency feature")
    return Spectrum(axis, values, metadata, value_name=presentation.value)


class EITFeature(NamedTuple):
    center: float
    fwhm: float
    depth: float


def eit_feature(sys: LambdaSystem, probe_range) -> EITFeature:
    """Centre, FWHM (MHz) and relative depth of the transparency window."""
    axis = frequency_axis(probe_range, "probe_range")
    with_c = eit_probe_spectrum(sys, axis, Presentation.ABSORPTION)
    without = eit_probe_spectrum(replace(sys, omega_c=0.0), axis, Presentation.ABSORPTION)
    window = without.values - with_c.values
    if np.max(window) <= 0:
        raise ValidationError("no transparency window in the probe range", field="probe_range")
    diff = Spectrum(axis, window)
    peak = int(np.argmax(window))
    return EITFeature(float(axis[peak]), measure_fwhm(diff), float(window[peak] / without.values[peak]))


class DressedStates(NamedTuple):
    a: np.ndarray
    b: np.ndarray
    theta: float


def dressed_states(sys: LambdaSystem) -> DressedStates:
    """Eigenvectors of the coupling-field block spanned by |2> and |3> (basis |1>, |2>, |3>).

    theta = atan2(omega_c, detuning) / 2; on resonance |a> = (|3>+|2>)/sqrt2
    and |b> = (|3>-|2>)/sqrt2.
    """
    theta = 0.5 * np.arctan2(sys.omega_c, sys.coupling_detuning)
    a = np.array([0.0, np.sin(theta), np.cos(theta)])
    b = np.array([0.0, -np.cos(theta), np.sin(theta)])
    return DressedStates(a, b, float(theta))


# --------------------------------------------------------------------------
# Dark-state polaritons

@dataclass(frozen=True)
class PolaritonState:
    theta: float
    photon_amplitude: complex
    spin_amplitude: complex
    g: float
    n_photons: float
    omega: float = 0.0
    excited_amplitude: complex = 0.0

    @property
    def photon_fraction(self) -> float:
        return float(abs(self.photon_amplitude) ** 2)

    @property
    def spin_fraction(self) -> float:
        return float(abs(self.spin_amplitude) ** 2)

    @property
    def collective_coupling(self) -> float:
        return self.g * np.sqrt(self.n_photons)


def polariton(omega: float, g: float, n: float) -> PolaritonState:
    """Dark polariton cos(theta) E + sin(theta) s for control Rabi ``omega`` (MHz)."""
    if omega < 0 or g < 0 or n < 0:
        raise ValidationError("omega, g and N must be >= 0", field="omega")
    collective = g * np.sqrt(n)
    omega_rad = TWO_PI * 1e6 * omega
    if omega_rad == 0 and collective == 0:
        raise ValidationError("mixing angle is undefined for omega = g sqrt(N) = 0", field="omega")
    theta = float(np.arctan2(collective, omega_rad))
    return PolaritonState(theta, complex(np.cos(theta)), complex(np.sin(theta)), g, n, omega)


def linear_ramp(start: float, stop: float, n_steps: int) -> np.ndarray:
    return np.linspace(start, stop, n_steps)


def _polariton_hamiltonian(collective: float, omega_mhz: float) -> np.ndarray:
    """(E, P, s) block: G(|P><E| + h.c.) - Omega(|P><s| + h.c.), rad/s."""
    omega_rad = TWO_PI * 1e6 * omega_mhz
    h = np.zeros((3, 3))
    h[1, 0] = h[0, 1] = collective
    h[1, 2] = h[2, 1] = -omega_rad
    return h


def _sweep(initial: PolaritonState, ramp: np.ndarray, dt: Optional[float]) -> List[PolaritonState]:
    collective = initial.collective_coupling
    if collective <= 0:
        raise ValidationError("storage needs g sqrt(N) > 0", field="g")
    dt = 1.0 / collective if dt is None else dt
    if not dt > 0:
        raise ValidationError("dt must be > 0", field="dt")
    psi = np.array([initial.photon_amplitude, initial.excited_amplitude, initial.spin_amplitude], dtype=complex)
    trajectory = [initial]
    for omega in ramp:
        psi = propagator(_polariton_hamiltonian(collective, omega), dt).data @ psi
        theta = float(np.arctan2(collective, TWO_PI * 1e6 * omega))
        trajectory.append(PolaritonState(theta, complex(psi[0]), complex(psi[2]), initial.g,
                                         initial.n_photons, float(omega), complex(psi[1])))
    return trajectory


def storage_sweep(initial: PolaritonState, ramp: Sequence[float], dt: Optional[float] = None) -> List[PolaritonState]:
    """Evolve the polariton while the control Rabi frequency (MHz) follows ``ramp`` down to 0.

    Each ramp value is held for one step of ``dt`` seconds (default 1/(g sqrt N)).
    """
    ramp = np.asarray(ramp, dtype=float)
    if ramp.ndim != 1 or ramp.size == 0:
        raise ValidationError("ramp must be a non-empty list", field="ramp")
    if np.any(np.diff(ramp) > 0):
        raise ValidationError("storage ramp must be nonincreasing", field="ramp")
    if ramp[-1] != 0:
        raise ValidationError("storage ramp must end at 0", field="ramp")
    return _sweep(initial, ramp, dt)


def retrieval_sweep(stored: PolaritonState, ramp: Sequence[float], dt: Optional[float] = None) -> List[PolaritonState]:
    """Time reverse of ``storage_sweep``: the control rises from 0 and releases the photon."""
    ramp = np.asarray(ramp, dtype=float)
    if ramp.ndim != 1 or ramp.size == 0:
        raise ValidationError("ramp must be a non-empty list", field="ramp")
    if np.any(np.diff(ramp) < 0):
        raise ValidationError("retrieval ramp must be nondecreasing", field="ramp")
    if ramp[0] != 0:
        raise ValidationError("retrieval ramp must start at 0", field="ramp")
    return _sweep(stored, ramp, dt)


def group_velocity_compression(dn_ddelta: float, carrier: float, n: float = 1.0) -> float:
    """c / v_gr = n + carrier * dn/ddelta, the spatial compression of a slowed pulse."""
    ratio = n + carrier * dn_ddelta
    if ratio <= 0:
        raise ValidationError(f"n + w dn/ddelta = {ratio:.4g} must be > 0", field="dn_ddelta")
    return float(ratio)
