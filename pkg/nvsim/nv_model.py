"""NV center level structure.

Two models live here: the ground-state spin Hamiltonian (electron spin 1 plus
optional 14N / 13C nuclei) and the seven-level optical rate model with
spin-selective intersystem crossing.

Level conventions:
  * spin operators are written in the m = +S ... -S basis, electron first;
  * the optical model orders its levels as ``RateLevel`` (g0, g+1, g-1,
    e0, e+1, e-1, singlet);
  * rate matrices use M[i, j] = rate j -> i, so columns sum to zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import constants, linalg, optimize

from nvsim.qops import Operator, eig_hermitian, kron
from nvsim.util import Util
from nvsim.util.errors import ModelError, ValidationError
from nvsim.util.protocol import RateLevel, SelectionRule, Species, SpinState

_LOGGER = logging.getLogger(__name__)

GAMMA_E = 28.03          # MHz/mT
GAMMA_N14 = 0.003077     # MHz/mT
GAMMA_C13 = 0.010705     # MHz/mT
D_NV = 2880.0            # MHz
ABSORPTION_CROSS_SECTION = 1e-16   # cm^2
PUMP_WAVELENGTH = 532.0            # nm


def spin_matrices(spin: float):
    """Sx, Sy, Sz for quantum number ``spin`` in the descending m basis."""
    m = np.arange(spin, -spin - 1, -1)
    dim = m.size
    sp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        sp[k - 1, k] = np.sqrt(spin * (spin + 1) - m[k] * (m[k] + 1))
    sx = 0.5 * (sp + sp.conj().T)
    sy = -0.5j * (sp - sp.conj().T)
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


@dataclass(frozen=True)
class NucleusSpec:
    species: Species
    spin: float
    a_parallel: float
    a_perp: float
    quadrupole_p: float = 0.0
    gamma_n: float = 0.0

    def __post_init__(self):
        if not isinstance(self.species, Species):
            object.__setattr__(self, "species", Species(self.species))
        if self.spin not in (0.5, 1.0):
            raise ValidationError(f"unsupported nuclear spin I={self.spin}; only 1/2 and 1 are modelled",
                                  field="spin")
        if self.quadrupole_p != 0 and self.spin != 1.0:
            raise ValidationError("quadrupole_p must be 0 unless I = 1", field="quadrupole_p")

    @property
    def dim(self) -> int:
        return int(round(2 * self.spin + 1))

    @classmethod
    def nitrogen14(cls, a: float = 2.0, quadrupole_p: float = 0.0, a_perp: Optional[float] = None):
        return cls(Species.N14, 1.0, a, a if a_perp is None else a_perp, quadrupole_p, GAMMA_N14)

    @classmethod
    def carbon13_isotropic(cls, a: float = 126.0):
        return cls(Species.C13, 0.5, a, a, 0.0, GAMMA_C13)

    @classmethod
    def carbon13(cls, splitting: float = 126.0, D: float = D_NV):
        """First-shell 13C whose isotropic coupling reproduces ``splitting`` exactly.

        The flip-flop terms pull the doublet in by about a^2/2D, so the coupling
        that yields a given observed separation is found numerically.
        """
        def mismatch(a):
            params = SpinHamiltonianParams(D=D, nuclei=(cls.carbon13_isotropic(a),))
            return doublet_separation(params) - splitting

        a = optimize.brentq(mismatch, 0.5 * splitting, 1.5 * splitting, xtol=1e-10)
        return cls.carbon13_isotropic(a)


@dataclass(frozen=True)
class SpinHamiltonianParams:
    D: float = D_NV
    E: float = 0.0
    gamma_e: float = GAMMA_E
    B0: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    nuclei: Tuple[NucleusSpec, ...] = ()
    symmetry: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "B0", tuple(float(b) for b in self.B0))
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if len(self.B0) != 3:
            raise ValidationError("B0 needs three components", field="B0")
        if not self.D > 0:
            raise ValidationError(f"D must be > 0, got {self.D}", field="D")
        if self.E < 0:
            raise ValidationError(f"E must be >= 0, got {self.E}", field="E")
        if self.symmetry == "C3v" and self.E != 0:
            raise ValidationError("C3v symmetry requires E = 0", field="E")

    @property
    def dims(self) -> List[int]:
        return [3] + [n.dim for n in self.nuclei]

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def with_field(self, B0) -> "SpinHamiltonianParams":
        return replace(self, B0=tuple(B0))


class LevelBasis(NamedTuple):
    labels: Tuple[str, ...]
    electron_ms: Tuple[int, ...]
    nuclear_mI: Tuple[Tuple[float, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    @classmethod
    def ground(cls, params: SpinHamiltonianParams) -> "LevelBasis":
        grids = [np.arange(1, -2, -1)] + [np.arange(n.spin, -n.spin - 1, -1) for n in params.nuclei]
        labels, ms_list, mi_list = [], [], []
        for combo in np.array(np.meshgrid(*grids, indexing="ij")).reshape(len(grids), -1).T:
            ms = int(combo[0])
            mis = tuple(float(x) for x in combo[1:])
            labels.append("(" + ",".join([f"{ms:+d}" if ms else "0"] + [_format_m(x) for x in mis]) + ")")
            ms_list.append(ms)
            mi_list.append(mis)
        if len(set(labels)) != len(labels):
            raise ModelError("level labels are not unique")
        return cls(tuple(labels), tuple(ms_list), tuple(mi_list))

    @classmethod
    def optical(cls) -> "LevelBasis":
        labels = ("g0", "g+1", "g-1", "e0", "e+1", "e-1", "singlet")
        ms = (0, 1, -1, 0, 1, -1, 0)
        return cls(labels, ms, tuple(() for _ in labels))


def _format_m(m: float) -> str:
    frac = Fraction(m).limit_denominator(2)
    if frac == 0:
        return "0"
    return f"{'+' if frac > 0 else '-'}{abs(frac)}"


def _embed(op: np.ndarray, position: int, dims: Sequence[int]) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for k, d in enumerate(dims):
        out = np.kron(out, op if k == position else np.eye(d))
    return out


def electron_operators(params: SpinHamiltonianParams):
    """Electron Sx, Sy, Sz embedded in the full electron-nuclear space."""
    return tuple(_embed(s, 0, params.dims) for s in spin_matrices(1.0))


def nuclear_operators(params: SpinHamiltonianParams, k: int):
    return tuple(_embed(i, k + 1, params.dims) for i in spin_matrices(params.nuclei[k].spin))


def ground_hamiltonian_mhz(params: SpinHamiltonianParams) -> np.ndarray:
    dims = params.dims
    sx, sy, sz = electron_operators(params)
    eye = np.eye(params.dim)
    bx, by, bz = params.B0
    h = params.D * (sz @ sz - 2.0 / 3.0 * eye) + params.E * (sx @ sx - sy @ sy)
    h = h + params.gamma_e * (bx * sx + by * sy + bz * sz)
    for k, nucleus in enumerate(params.nuclei):
        ix, iy, iz = nuclear_operators(params, k)
        spin = nucleus.spin
        h = h + nucleus.a_perp * (sx @ ix + sy @ iy) + nucleus.a_parallel * (sz @ iz)
        if nucleus.quadrupole_p:
            h = h + nucleus.quadrupole_p * (iz @ iz - spin * (spin + 1) / 3.0 * eye)
        h = h - nucleus.gamma_n * (bx * ix + by * iy + bz * iz)
    return 0.5 * (h + h.conj().T)


def ground_hamiltonian(params: SpinHamiltonianParams) -> Operator:
    """Ground-state spin Hamiltonian in rad/s on the |m_s> (x) |m_I ...> basis."""
    return Operator(Util.mhzToRadPerSec(1.0) * ground_hamiltonian_mhz(params), hamiltonian=True)


class Transition(NamedTuple):
    freq: float
    strength: float
    from_label: str
    to_label: str
    from_index: int
    to_index: int


def _eigensystem(h: Operator):
    data = h.data
    offdiag = data - np.diag(np.diag(data))
    if not np.any(offdiag):
        diag = np.real(np.diag(data))
        order = np.argsort(diag, kind="stable")
        return diag[order], np.eye(h.dim)[:, order]
    values, vectors = eig_hermitian(h)
    return values, vectors.data


def transition_table(h: Operator, basis: LevelBasis, selection: SelectionRule = SelectionRule.ESR,
                     threshold: float = 0.01, drive: Optional[np.ndarray] = None,
                     min_freq: float = 1e-6) -> List[Transition]:
    """Allowed transitions of ``h`` sorted by frequency (MHz).

    Strengths are |<i|X|j>|^2 in the eigenbasis with X = S_x (ESR, ALL) or the
    summed nuclear I_x (NMR), kept when above ``threshold`` times the strongest.
    """
    values, vectors = _eigensystem(h)
    freqs_mhz = Util.radPerSecToMhz(values)
    n = h.dim
    if drive is None:
        nuclei_dims = basis.dim // 3
        if selection == SelectionRule.NMR:
            drive = np.zeros((n, n), dtype=complex)
            dims = _dims_from_basis(basis)
            for k in range(1, len(dims)):
                spin = (dims[k] - 1) / 2.0
                drive += _embed(spin_matrices(spin)[0], k, dims)
        else:
            drive = np.kron(spin_matrices(1.0)[0], np.eye(nuclei_dims))
    elements = vectors.conj().T @ drive @ vectors
    dominant = np.argmax(np.abs(vectors) ** 2, axis=0)

    candidates = []
    for i in range(n):
        for j in range(i + 1, n):
            freq = float(freqs_mhz[j] - freqs_mhz[i])
            if freq <= min_freq:
                continue
            a, b = dominant[i], dominant[j]
            same_ms = basis.electron_ms[a] == basis.electron_ms[b]
            if selection == SelectionRule.ESR and same_ms:
                continue
            if selection == SelectionRule.NMR and not same_ms:
                continue
            strength = float(np.abs(elements[i, j]) ** 2)
            candidates.append(Transition(freq, strength, basis.labels[a], basis.labels[b], i, j))
    if not candidates:
        return []
    strongest = max(t.strength for t in candidates)
    if strongest == 0:
        return []
    kept = [t for t in candidates if t.strength >= threshold * strongest]
    return sorted(kept, key=lambda t: (t.freq, t.from_index))


def _dims_from_basis(basis: LevelBasis) -> List[int]:
    dims = [3]
    if basis.nuclear_mI and basis.nuclear_mI[0]:
        for k in range(len(basis.nuclear_mI[0])):
            values = {mi[k] for mi in basis.nuclear_mI}
            dims.append(len(values))
    return dims


def merge_lines(transitions: Sequence[Transition], tol: float = 1e-2) -> List[Tuple[float, float]]:
    """Collapse transitions closer than ``tol`` MHz into (frequency, summed strength)."""
    merged: List[List[float]] = []
    for t in sorted(transitions, key=lambda t: t.freq):
        if merged and t.freq - merged[-1][2] <= tol:
            total = merged[-1][1] + t.strength
            merged[-1][0] = (merged[-1][0] * merged[-1][1] + t.freq * t.strength) / total if total else t.freq
            merged[-1][1] = total
            merged[-1][2] = t.freq
        else:
            merged.append([t.freq, t.strength, t.freq])
    return [(f, s) for f, s, _ in merged]


def esr_lines(params: SpinHamiltonianParams, threshold: float = 0.01, tol: float = 1e-2):
    h = ground_hamiltonian(params)
    return merge_lines(transition_table(h, LevelBasis.ground(params), SelectionRule.ESR, threshold), tol)


def doublet_separation(params: SpinHamiltonianParams) -> float:
    """Separation between the hyperfine doublet centres of a single spin-1/2 nucleus (MHz)."""
    lines = [f for f, _ in esr_lines(params)]
    if len(lines) < 2:
        raise ModelError("hyperfine doublet is not resolved")
    centre = params.D
    lower = [f for f in lines if f < centre]
    upper = [f for f in lines if f >= centre]
    if not lower or not upper:
        return max(lines) - min(lines)
    return float(np.mean(upper) - np.mean(lower))


@dataclass(frozen=True)
class PhotophysicsRates:
    a_rad: float = 1.0 / 13e-9
    quantum_yield: float = 0.7
    k_s_xy: float = 5e7
    k_s_z: float = 5e4
    k_x: float = 1e6
    k_y: float = 1e6
    k_z: float = 1e6
    r_slr: float = 1e3
    detection_eff: float = 1e-3

    def __post_init__(self):
        for name in ("a_rad", "k_s_xy", "k_s_z", "k_x", "k_y", "k_z", "r_slr"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be a non-negative rate, got {value}", field=name)
        for name in ("quantum_yield", "detection_eff"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}", field=name)

    @property
    def k_D(self) -> float:
        return self.k_x + self.k_y

    @property
    def k_T(self) -> float:
        return self.k_D + self.k_z

    @property
    def singlet_lifetime(self) -> float:
        return 1.0 / self.k_T if self.k_T > 0 else float("inf")

    @classmethod
    def room_temperature(cls) -> "PhotophysicsRates":
        return cls()

    @classmethod
    def low_temperature(cls) -> "PhotophysicsRates":
        return cls(k_s_z=1e3, r_slr=1.0)

    def isc_rate(self, branch: SpinState) -> float:
        return self.k_s_xy if branch == SpinState.DARK else self.k_s_z


_GROUND = (RateLevel.G0, RateLevel.G_PLUS, RateLevel.G_MINUS)
_EXCITED = (RateLevel.E0, RateLevel.E_PLUS, RateLevel.E_MINUS)


def optical_rate_matrix(rates: PhotophysicsRates, laser_power: float, pumped: Sequence[int] = (0, 1, -1),
                        stimulated: bool = False, mw_rate: float = 0.0) -> np.ndarray:
    """7x7 classical rate matrix; ``laser_power`` is the pump rate W in 1/s.

    The excited state decays back to the same spin sublevel at a_rad, split into
    a radiative share a_rad*quantum_yield and a non-radiative remainder.
    ``mw_rate`` adds a saturating microwave mixing of g0 with both g+-1.
    """
    if laser_power < 0:
        raise ValidationError(f"laser power must be >= 0, got {laser_power}", field="laser_power")
    if mw_rate < 0:
        raise ValidationError(f"mw_rate must be >= 0, got {mw_rate}", field="mw_rate")
    m = np.zeros((7, 7))

    def add(frm, to, rate):
        m[to.value, frm.value] += rate

    ms_index = {0: 0, 1: 1, -1: 2}
    for ms in pumped:
        k = ms_index[ms]
        add(_GROUND[k], _EXCITED[k], laser_power)
        if stimulated:
            add(_EXCITED[k], _GROUND[k], laser_power)
    for g, e in zip(_GROUND, _EXCITED):
        add(e, g, rates.a_rad * rates.quantum_yield)
        add(e, g, rates.a_rad * (1.0 - rates.quantum_yield))
    add(RateLevel.E0, RateLevel.SINGLET, rates.k_s_z)
    add(RateLevel.E_PLUS, RateLevel.SINGLET, rates.k_s_xy)
    add(RateLevel.E_MINUS, RateLevel.SINGLET, rates.k_s_xy)
    add(RateLevel.SINGLET, RateLevel.G0, rates.k_z)
    add(RateLevel.SINGLET, RateLevel.G_PLUS, rates.k_x)
    add(RateLevel.SINGLET, RateLevel.G_MINUS, rates.k_y)
    for a in _GROUND:
        for b in _GROUND:
            if a != b:
                add(a, b, rates.r_slr)
    for dark in (RateLevel.G_PLUS, RateLevel.G_MINUS):
        add(RateLevel.G0, dark, mw_rate)
        add(dark, RateLevel.G0, mw_rate)
    m -= np.diag(m.sum(axis=0))
    return m


def steady_state(rate_matrix: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Normalized null vector of a rate matrix (columns summing to zero)."""
    m = np.asarray(rate_matrix, dtype=float)
    scale = float(np.max(np.abs(m))) or 1.0
    if np.max(np.abs(m.sum(axis=0))) > 1e-9 * scale:
        raise ValidationError("rate matrix columns do not sum to zero", field="rate_matrix")
    singular = linalg.svdvals(m / scale)
    if singular.size > 1 and singular[-2] < tol:
        raise ModelError("rate matrix has a degenerate null space (disconnected level graph)")
    n = m.shape[0]
    system = np.vstack([m / scale, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pops, *_ = linalg.lstsq(system, rhs)
    if np.min(pops) < -1e-9:
        raise ModelError("steady state has negative populations")
    pops = np.clip(pops, 0.0, None)
    return pops / pops.sum()


def spin_polarization(rates: PhotophysicsRates, laser_power: float) -> float:
    """Population of ground m_s=0 in the optically pumped steady state."""
    return float(steady_state(optical_rate_matrix(rates, laser_power))[RateLevel.G0.value])


class FluorescenceRate(NamedTuple):
    emitted: float
    detected: float


def fluorescence_rate(rates: PhotophysicsRates, laser_power: float, pumped: Sequence[int] = (0, 1, -1),
                      stimulated: bool = False, mw_rate: float = 0.0) -> FluorescenceRate:
    pops = steady_state(optical_rate_matrix(rates, laser_power, pumped, stimulated, mw_rate))
    excited = sum(pops[e.value] for e in _EXCITED)
    emitted = rates.a_rad * excited
    return FluorescenceRate(emitted, emitted * rates.quantum_yield * rates.detection_eff)


class SaturatedIntensity(NamedTuple):
    emitted: float
    detected: float
    low_temperature_limit: float


def saturated_intensity(rates: PhotophysicsRates, branch: SpinState = SpinState.DARK,
                        k_s: Optional[float] = None) -> SaturatedIntensity:
    """<I_sat> = A / (4 + (k_s k_D + R) / (R k_T)).

    ``k_s`` defaults to the ISC rate of the excited branch; the low-temperature
    limit R A k_T / (k_s k_D) is reported alongside.
    """
    R = rates.r_slr
    if R <= 0:
        raise ValidationError("saturated intensity is singular for r_slr = 0", field="r_slr")
    if rates.k_T <= 0:
        raise ValidationError("singlet decay rates must not all be zero", field="k_T")
    k_s = rates.isc_rate(branch) if k_s is None else k_s
    A = rates.a_rad
    emitted = A / (4.0 + (k_s * rates.k_D + R) / (R * rates.k_T))
    limit = R * A * rates.k_T / (k_s * rates.k_D) if k_s * rates.k_D > 0 else float("inf")
    return SaturatedIntensity(emitted, emitted * rates.quantum_yield * rates.detection_eff, limit)


def saturated_flux_from_rates(rates: PhotophysicsRates, saturation: float = 1e3) -> float:
    """Emitted flux of the rate model under saturated, spin-selective pumping of m_s=0.

    The excited m_s=0 level is given the ISC rate k_s_xy so that its branch
    matches the dark-state form of ``saturated_intensity``.
    """
    selective = replace(rates, k_s_z=rates.k_s_xy)
    W = saturation * (rates.a_rad + rates.k_s_xy)
    return fluorescence_rate(selective, W, pumped=(0,), stimulated=True).emitted


def pump_rate_from_intensity(intensity_kw_cm2: float, wavelength_nm: float = PUMP_WAVELENGTH,
                             cross_section_cm2: float = ABSORPTION_CROSS_SECTION) -> float:
    """Optical pump rate W (1/s) for a laser intensity given in kW/cm^2."""
    if intensity_kw_cm2 < 0:
        raise ValidationError("laser intensity must be >= 0", field="intensity")
    photon_energy = constants.h * constants.c / (wavelength_nm * 1e-9)
    return float(intensity_kw_cm2 * 1e3 / photon_energy * cross_section_cm2)


def spin_flip_rates(rates: PhotophysicsRates, laser_power: float, selective: bool = False) -> Tuple[float, float]:
    """(bright->dark, dark->bright) rates of the effective two-state spin telegraph.

    With ``selective`` only the m_s=0 optical line is pumped, as under resonant
    low-temperature excitation, so the dark state returns through r_slr alone.
    """
    def singlet_crossing(k_s):
        return laser_power * k_s / (rates.a_rad + k_s) if rates.a_rad + k_s > 0 else 0.0

    if laser_power < 0:
        raise ValidationError(f"laser power must be >= 0, got {laser_power}", field="laser_power")
    k_T = rates.k_T or 1.0
    bright_to_dark = singlet_crossing(rates.k_s_z) * rates.k_D / k_T + 2.0 * rates.r_slr
    dark_to_bright = rates.r_slr
    if not selective:
        dark_to_bright += singlet_crossing(rates.k_s_xy) * rates.k_z / k_T
    return float(bright_to_dark), float(dark_to_bright)
