"""Stochastic readout and measurement backaction.

Every stochastic function takes an explicit integer ``seed`` and draws from a
``numpy.random.Generator(PCG64(seed))``; identical seeds give identical output.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize, stats
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from nvsim.nv_model import PhotophysicsRates, spin_flip_rates
from nvsim.qops import CollapseChannel, Operator, liouvillian
from nvsim.util import Histogram, TimeTrace
from nvsim.util.errors import FitError, ValidationError
from nvsim.util.protocol import FitModel, SpinState

_LOGGER = logging.getLogger(__name__)

DEFAULT_BIN = 5e-3
DEFAULT_BRIGHT_CPS = 15000.0
DEFAULT_DARK_CPS = 1000.0
DEFAULT_READOUT_FLIP = 0.05
MAX_DAMPING_TIME = 40e-6


def make_rng(seed: Optional[int]) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# --------------------------------------------------------------------------
# Telegraph traces

def jump_trace(rates: PhotophysicsRates, bright_cps: float = DEFAULT_BRIGHT_CPS, dark_cps: float = DEFAULT_DARK_CPS,
               duration: float = 10.0, bin: float = DEFAULT_BIN, seed: Optional[int] = None,
               laser_power: float = 1e5, selective: bool = True,
               flip_rates: Optional[Tuple[float, float]] = None,
               initial: SpinState = SpinState.BRIGHT) -> TimeTrace:
    """Binned photon counts of a single spin jumping between bright and dark.

    Flip rates default to ``spin_flip_rates(rates, laser_power, selective)``;
    ``flip_rates=(bright->dark, dark->bright)`` overrides them. Times are bin
    starts in seconds.
    """
    if not bin > 0:
        raise ValidationError(f"bin must be > 0, got {bin}", field="bin")
    if not duration >= bin:
        raise ValidationError("duration must cover at least one bin", field="duration")
    if not bright_cps > dark_cps >= 0:
        raise ValidationError("need bright_cps > dark_cps >= 0", field="bright_cps")
    if flip_rates is None:
        flip_rates = spin_flip_rates(rates, laser_power, selective)
    k_bd, k_db = (float(r) for r in flip_rates)
    if k_bd < 0 or k_db < 0:
        raise ValidationError("flip rates must be >= 0", field="flip_rates")
    rng = make_rng(seed)

    state = SpinState(initial).value
    leave = (k_bd, k_db)
    switches = []
    t = 0.0
    while True:
        rate = leave[state]
        if rate == 0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= duration:
            break
        switches.append(t)
        state ^= 1

    n_bins = int(np.floor(duration / bin + 1e-9))
    edges = np.arange(n_bins + 1) * bin
    # cumulative time spent bright at each switch point, then at each bin edge
    points = np.concatenate([[0.0], switches, [max(duration, edges[-1])]])
    states = (SpinState(initial).value + np.arange(points.size - 1)) % 2
    bright_time = np.concatenate([[0.0], np.cumsum(np.diff(points) * (states == 0))])
    exposure = np.diff(np.interp(edges, points, bright_time))
    mean = bright_cps * exposure + dark_cps * (bin - exposure)
    counts = rng.poisson(mean)
    values = {
        "counts": counts,
        "rate_cps": counts / bin,
        "state": np.where(exposure >= 0.5 * bin, SpinState.BRIGHT.value, SpinState.DARK.value),
    }
    metadata = {
        "bright_cps": bright_cps,
        "dark_cps": dark_cps,
        "flip_rates": [k_bd, k_db],
        "initial_state": SpinState(initial).name.lower(),
        "switch_times": switches,
        "duration_s": duration,
    }
    _LOGGER.debug(f"Telegraph trace with {len(switches)} switches over {duration} s")
    return TimeTrace(edges[:-1], values, seed=seed, bin=bin, metadata=metadata)


def dwell_times(trace: TimeTrace) -> Dict[SpinState, np.ndarray]:
    """Completed dwell durations per state; the final (censored) dwell is dropped."""
    switches = np.asarray(trace.metadata.get("switch_times", []), dtype=float)
    initial = SpinState[trace.metadata.get("initial_state", "bright").upper()]
    starts = np.concatenate([[0.0], switches[:-1]]) if switches.size else np.array([])
    durations = switches - starts
    order = (initial.value + np.arange(durations.size)) % 2
    return {SpinState.BRIGHT: durations[order == 0], SpinState.DARK: durations[order == 1]}


def stationary_bright_fraction(flip_rates: Tuple[float, float]) -> float:
    k_bd, k_db = flip_rates
    return k_db / (k_bd + k_db) if k_bd + k_db > 0 else 1.0


# --------------------------------------------------------------------------
# Readout histograms

def readout_histogram(n_windows: int = 10000, bright_cps: float = DEFAULT_BRIGHT_CPS,
                      dark_cps: float = DEFAULT_DARK_CPS, bin: float = DEFAULT_BIN,
                      flip_probability: float = DEFAULT_READOUT_FLIP, seed: Optional[int] = None,
                      flip_rate: Optional[float] = None) -> Histogram:
    """Photon-count histogram of readout windows of a spin prepared in m_s=0.

    A window flips to the dark state with ``flip_probability`` at its start.
    Given ``flip_rate`` (1/s) instead, the flip happens at an exponentially
    distributed time inside the window, which fills the region between peaks.
    """
    if n_windows < 1:
        raise ValidationError("n_windows must be >= 1", field="n_windows")
    if not bin > 0:
        raise ValidationError(f"bin must be > 0, got {bin}", field="bin")
    if not bright_cps >= dark_cps >= 0:
        raise ValidationError("need bright_cps >= dark_cps >= 0", field="bright_cps")
    if not 0.0 <= flip_probability <= 1.0:
        raise ValidationError("flip_probability must lie in [0, 1]", field="flip_probability")
    rng = make_rng(seed)
    if flip_rate is None:
        flipped = rng.random(n_windows) < flip_probability
        bright_time = np.where(flipped, 0.0, bin)
    else:
        if flip_rate < 0:
            raise ValidationError("flip_rate must be >= 0", field="flip_rate")
        flip_at = rng.exponential(1.0 / flip_rate, n_windows) if flip_rate > 0 else np.full(n_windows, np.inf)
        bright_time = np.minimum(flip_at, bin)
    counts = rng.poisson(bright_cps * bright_time + dark_cps * (bin - bright_time))
    frequencies = np.bincount(counts)
    edges = np.arange(frequencies.size + 1, dtype=float)
    metadata = {
        "bright_mean": bright_cps * bin,
        "dark_mean": dark_cps * bin,
        "flip_probability": flip_probability if flip_rate is None else None,
        "flip_rate": flip_rate,
        "n_windows": n_windows,
        "seed": seed,
    }
    return Histogram(edges, frequencies, bin, metadata)


class ReadoutFit(NamedTuple):
    model: FitModel
    dark_weight: float
    dark_mean: float
    dark_width: float
    bright_weight: float
    bright_mean: float
    bright_width: float


class ReadoutFidelity(NamedTuple):
    fidelity: float
    threshold: float
    peak_ratio: float
    wing_ratio: float
    resolved: bool
    fallback: bool
    fit: Optional[ReadoutFit]


def _component_pmf(model: FitModel, k: np.ndarray, mean: float, width: float) -> np.ndarray:
    if model == FitModel.POISSON:
        return stats.poisson.pmf(k, mean)
    return stats.norm.cdf(k + 0.5, mean, width) - stats.norm.cdf(k - 0.5, mean, width)


def _component_sf(model: FitModel, t: float, mean: float, width: float) -> float:
    """P(count > t)."""
    if model == FitModel.POISSON:
        return float(stats.poisson.sf(np.floor(t), mean))
    return float(stats.norm.sf(np.floor(t) + 0.5, mean, width))


def fit_readout(h: Histogram, model: FitModel = FitModel.POISSON) -> ReadoutFit:
    """Two-component maximum-likelihood fit of a readout histogram."""
    model = FitModel(model)
    k = h.counts
    n = h.frequencies.astype(float)
    if h.total == 0:
        raise FitError("histogram is empty")
    lo = h.metadata.get("dark_mean") or max(np.percentile(np.repeat(k, h.frequencies), 10), 0.5)
    hi = h.metadata.get("bright_mean") or max(np.percentile(np.repeat(k, h.frequencies), 90), lo + 1.0)
    lo, hi = float(lo), float(max(hi, lo))

    def unpack(x):
        w = 1.0 / (1.0 + np.exp(-x[0]))
        if model == FitModel.POISSON:
            return w, np.exp(x[1]), 0.0, np.exp(x[2]), 0.0
        return w, x[1], np.exp(x[3]), x[2], np.exp(x[4])

    def nll(x):
        w, m_d, s_d, m_b, s_b = unpack(x)
        mix = w * _component_pmf(model, k, m_d, s_d) + (1.0 - w) * _component_pmf(model, k, m_b, s_b)
        return -float(np.sum(n * np.log(np.maximum(mix, 1e-300))))

    w0 = 0.1
    if model == FitModel.POISSON:
        x0 = [np.log(w0 / (1 - w0)), np.log(max(lo, 1e-3)), np.log(max(hi, 1e-3))]
    else:
        x0 = [np.log(w0 / (1 - w0)), lo, hi, np.log(np.sqrt(max(lo, 1.0))), np.log(np.sqrt(max(hi, 1.0)))]
    result = optimize.minimize(nll, x0, method="Nelder-Mead",
                               options={"maxiter": 4000, "xatol": 1e-6, "fatol": 1e-8})
    if not result.success or not np.isfinite(result.fun):
        raise FitError(f"readout fit did not converge: {result.message}")
    w, m_d, s_d, m_b, s_b = unpack(result.x)
    if m_d > m_b:
        w, m_d, s_d, m_b, s_b = 1.0 - w, m_b, s_b, m_d, s_d
    if model == FitModel.GAUSSIAN:
        s_d, s_b = max(s_d, 1e-3), max(s_b, 1e-3)
    return ReadoutFit(model, float(w), float(m_d), float(s_d), float(1.0 - w), float(m_b), float(s_b))


def _resolved(fit: ReadoutFit) -> bool:
    if fit.model == FitModel.POISSON:
        width = np.sqrt(fit.dark_mean + fit.bright_mean)
    else:
        width = np.hypot(fit.dark_width, fit.bright_width)
    return bool(fit.bright_mean - fit.dark_mean > max(width, 1e-9))


def readout_fidelity(h: Histogram, model: FitModel = FitModel.POISSON) -> ReadoutFidelity:
    """Probability that an m_s=0 readout window is assigned bright at the optimal threshold.

    The threshold maximizes the mean correct-assignment probability of the two
    fitted components. ``peak_ratio`` is the dark/bright peak-height ratio and
    ``wing_ratio`` the dark component's height where the weighted components
    cross, relative to the bright peak.
    """
    model = FitModel(model)
    try:
        fit = fit_readout(h, model)
    except FitError as exc:
        _LOGGER.warning(f"{exc}; falling back to a raw threshold")
        lo = float(h.metadata.get("dark_mean", 0.0))
        hi = float(h.metadata.get("bright_mean", h.counts[np.argmax(h.frequencies)]))
        threshold = 0.5 * (lo + hi)
        above = h.frequencies[h.counts > threshold].sum()
        return ReadoutFidelity(float(above / max(h.total, 1)), threshold, float("nan"), float("nan"),
                               hi > lo, True, None)

    if not _resolved(fit):
        _LOGGER.warning("readout peaks are not resolved; states are indistinguishable")
        return ReadoutFidelity(0.5, 0.5 * (fit.dark_mean + fit.bright_mean), 1.0, 1.0, False, False, fit)

    candidates = np.arange(np.floor(fit.dark_mean), np.ceil(fit.bright_mean) + 1)
    scores = [0.5 * (_component_sf(model, t, fit.bright_mean, fit.bright_width)
                     + 1.0 - _component_sf(model, t, fit.dark_mean, fit.dark_width)) for t in candidates]
    threshold = float(candidates[int(np.argmax(scores))])
    fidelity = (fit.bright_weight * _component_sf(model, threshold, fit.bright_mean, fit.bright_width)
                + fit.dark_weight * _component_sf(model, threshold, fit.dark_mean, fit.dark_width))

    k = np.arange(0, int(np.ceil(fit.bright_mean + 10 * np.sqrt(fit.bright_mean + 1))) + 1)
    dark = fit.dark_weight * _component_pmf(model, k, fit.dark_mean, fit.dark_width)
    bright = fit.bright_weight * _component_pmf(model, k, fit.bright_mean, fit.bright_width)
    peak_ratio = float(dark.max() / bright.max()) if bright.max() > 0 else float("inf")
    between = (k >= fit.dark_mean) & (k <= fit.bright_mean)
    cross = k[between][np.argmin(np.abs(dark[between] - bright[between]))] if np.any(between) else threshold
    wing_ratio = float(dark[int(cross)] / bright.max()) if bright.max() > 0 else float("inf")
    return ReadoutFidelity(float(fidelity), threshold, peak_ratio, wing_ratio, True, False, fit)


# --------------------------------------------------------------------------
# Quantum Zeno effect

@dataclass(frozen=True)
class ZenoParams:
    lam: float
    total_time: float
    n_measurements: int

    def __post_init__(self):
        if int(self.n_measurements) != self.n_measurements or self.n_measurements < 1:
            raise ValidationError("n_measurements must be an integer >= 1", field="n_measurements")
        if self.lam < 0 or self.total_time < 0:
            raise ValidationError("lambda and total_time must be >= 0", field="lambda")
        if self.flip_probability > 1.0:
            raise ValidationError(f"(lambda T / N)^2 = {self.flip_probability:.4g} exceeds 1", field="lambda")

    @property
    def flip_probability(self) -> float:
        return (self.lam * self.total_time / self.n_measurements) ** 2


def zeno_survival_discrete(z: ZenoParams) -> float:
    p = z.flip_probability
    if p > 0.5:
        raise ValidationError(f"p = {p:.4g} > 1/2 leaves the survival formula's range", field="lambda")
    return 0.5 * (1.0 + (1.0 - 2.0 * p) ** z.n_measurements)


def zeno_survival_continuous(z: ZenoParams) -> float:
    return 0.5 * (1.0 + np.exp(-2.0 * (z.lam * z.total_time) ** 2 / z.n_measurements))


# --------------------------------------------------------------------------
# Laser-induced damping of Rabi nutation

class DampingPoint(NamedTuple):
    power: float
    rate: float
    mode_rate: float
    flagged: bool


# g0, g-1, e0, e-1, singlet
_G0, _GM, _E0, _EM, _S = range(5)


def _damping_model(rates: PhotophysicsRates, power: float, rabi: float, intrinsic: float):
    """Five-level Lindblad model: resonant MW on the ground pair, coherent laser on both spin branches.

    The optical Rabi frequency is set so that the weak-field pump rate of the
    m_s=0 branch equals ``power``.
    """
    def op(to, frm):
        return Operator.transition(5, to, frm)

    omega_l = np.sqrt(power * (rates.a_rad + rates.k_s_z))
    h = np.pi * rabi * 1e6 * (op(_G0, _GM).data + op(_GM, _G0).data)
    h = h + 0.5 * omega_l * (op(_E0, _G0).data + op(_G0, _E0).data + op(_EM, _GM).data + op(_GM, _EM).data)
    dephase = np.zeros((5, 5), dtype=complex)
    dephase[_G0, _G0], dephase[_GM, _GM] = 1.0, -1.0
    channels = [
        CollapseChannel(op(_G0, _E0), rates.a_rad),
        CollapseChannel(op(_GM, _EM), rates.a_rad),
        CollapseChannel(op(_S, _E0), rates.k_s_z),
        CollapseChannel(op(_S, _EM), rates.k_s_xy),
        CollapseChannel(op(_G0, _S), rates.k_z),
        CollapseChannel(op(_GM, _S), rates.k_D),
        CollapseChannel(Operator(dephase), intrinsic),
    ]
    return Operator(h, hamiltonian=True), channels


def _rabi_signal(rates, power, rabi, intrinsic):
    """m_s=0 population versus time from the Liouvillian eigenmodes, plus the Rabi-mode decay rate."""
    h, channels = _damping_model(rates, power, rabi, intrinsic)
    sup = liouvillian(h, channels)
    values, vectors = linalg.eig(sup)
    rho0 = np.zeros((5, 5), dtype=complex)
    rho0[_G0, _G0] = 1.0
    coeffs = linalg.solve(vectors, rho0.reshape(-1))
    target = 2.0 * np.pi * rabi * 1e6
    mode = values[np.argmin(np.abs(np.abs(values.imag) - target))]
    mode_rate = float(-mode.real)

    period = 1.0 / (rabi * 1e6)
    t_sim = min(MAX_DAMPING_TIME, max(20 * period, 4.0 / mode_rate if mode_rate > 0 else MAX_DAMPING_TIME))
    per_period = 32
    n = int(np.ceil(t_sim / period * per_period)) + 1
    times = np.linspace(0.0, t_sim, n)
    readers = np.zeros((5, 5))
    readers[_G0, _G0] = readers[_E0, _E0] = 1.0
    observe = readers.T.reshape(-1) @ vectors
    signal = np.real((observe * coeffs) @ np.exp(np.outer(values, times)))
    return times, signal, per_period, mode_rate


def envelope_decay_rate(times: np.ndarray, signal: np.ndarray, per_period: int) -> float:
    """Exponential decay rate of an oscillation's envelope from its extrema."""
    oscillation = signal - uniform_filter1d(signal, size=per_period, mode="nearest")
    maxima, _ = find_peaks(oscillation)
    minima, _ = find_peaks(-oscillation)
    extrema = np.sort(np.concatenate([maxima, minima]))
    amplitude = np.abs(oscillation[extrema])
    keep = amplitude > 1e-4 * (amplitude.max() if amplitude.size else 0.0)
    extrema, amplitude = extrema[keep], amplitude[keep]
    if extrema.size < 3:
        raise FitError(f"only {extrema.size} extrema in the Rabi trace")
    slope, _ = np.polyfit(times[extrema], np.log(amplitude), 1)
    return float(max(-slope, 0.0))


def rabi_damping_point(power: float, rates: Optional[PhotophysicsRates] = None, rabi: float = 100.0,
                       intrinsic: float = 1e5) -> DampingPoint:
    rates = rates or PhotophysicsRates.room_temperature()
    times, signal, per_period, mode_rate = _rabi_signal(rates, power, rabi, intrinsic)
    try:
        rate = envelope_decay_rate(times, signal, per_period)
        flagged = False
    except FitError as exc:
        _LOGGER.warning(f"Damping fit failed at W={power:.3g}/s: {exc}")
        rate, flagged = float("nan"), True
    return DampingPoint(float(power), rate, mode_rate, flagged)


def rabi_damping_vs_power(powers: Sequence[float], rates: Optional[PhotophysicsRates] = None,
                          rabi: float = 100.0, intrinsic: float = 1e5) -> List[DampingPoint]:
    """Decay rate of MW Rabi nutation for each optical pump rate W (1/s).

    ``intrinsic`` is the pure-dephasing rate, which is the damping at W = 0.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.ndim != 1 or powers.size == 0:
        raise ValidationError("powers must be a non-empty list", field="powers")
    if np.any(powers < 0) or np.any(np.diff(powers) <= 0):
        raise ValidationError("powers must be non-negative and ascending", field="powers")
    if rabi <= 0 or intrinsic < 0:
        raise ValidationError("rabi must be > 0 and intrinsic dephasing >= 0", field="rabi")
    return [rabi_damping_point(w, rates, rabi, intrinsic) for w in powers]
