import logging
from typing import Optional

import numpy as np
from scipy import signal

from nvsim.nv_model import (PhotophysicsRates, SpinHamiltonianParams, esr_lines, fluorescence_rate)
from nvsim.util import Spectrum
from nvsim.util.errors import ValidationError
from nvsim.util.protocol import Lineshape

_LOGGER = logging.getLogger(__name__)

DEFAULT_CONTRAST = 0.15


def frequency_axis(axis_range, field="range") -> np.ndarray:
    """Accepts an explicit axis or a (start, stop, points) triple."""
    if isinstance(axis_range, np.ndarray):
        axis = axis_range.astype(float)
    elif isinstance(axis_range, (tuple, list)) and len(axis_range) == 3 and float(axis_range[2]).is_integer():
        start, stop, points = axis_range
        if int(points) < 2 or not stop > start:
            raise ValidationError(f"range {axis_range} needs stop > start and at least 2 points", field=field)
        axis = np.linspace(float(start), float(stop), int(points))
    else:
        axis = np.asarray(axis_range, dtype=float)
    if axis.ndim != 1 or axis.size < 2 or np.any(np.diff(axis) <= 0):
        raise ValidationError("axis must be strictly increasing with at least 2 points", field=field)
    return axis


def lineshape(offset, linewidth, shape=Lineshape.LORENTZIAN):
    """Peak-normalized line profile with FWHM ``linewidth``."""
    offset = np.asarray(offset, dtype=float)
    if shape == Lineshape.GAUSSIAN:
        return np.exp(-4.0 * np.log(2.0) * offset ** 2 / linewidth ** 2)
    half = 0.5 * linewidth
    return half ** 2 / (offset ** 2 + half ** 2)


def rate_model_contrast(rates: PhotophysicsRates, laser_power: Optional[float] = None) -> float:
    """Fractional fluorescence drop when a saturating microwave mixes m_s=0 with m_s=+-1."""
    W = 0.1 * rates.a_rad if laser_power is None else laser_power
    off = fluorescence_rate(rates, W).emitted
    on = fluorescence_rate(rates, W, mw_rate=1e2 * rates.a_rad).emitted
    return float(1.0 - on / off) if off > 0 else 0.0


def cw_odmr_spectrum(params: SpinHamiltonianParams, rates: PhotophysicsRates, mw_range, linewidth: float,
                     contrast: Optional[float] = DEFAULT_CONTRAST, shape: Lineshape = Lineshape.LORENTZIAN,
                     threshold: float = 0.01, merge_tol: float = 1e-2,
                     laser_power: Optional[float] = None) -> Spectrum:
    """CW ODMR: unit baseline with one dip per distinct allowed ESR line.

    Each dip is ``contrast`` times the line's strength relative to the
    strongest line; overlapping dips add. ``contrast=None`` takes the contrast
    from the optical rate model.
    """
    if not linewidth > 0:
        raise ValidationError(f"linewidth must be > 0, got {linewidth}", field="linewidth")
    if contrast is None:
        contrast = rate_model_contrast(rates, laser_power)
        _LOGGER.debug(f"Rate-model ODMR contrast {contrast:.4f}")
    if not 0.0 < contrast < 1.0:
        raise ValidationError(f"contrast must lie in (0, 1), got {contrast}", field="contrast")
    axis = frequency_axis(mw_range, "mw_range")
    lines = esr_lines(params, threshold, merge_tol)
    values = np.ones_like(axis)
    if lines:
        strongest = max(s for _, s in lines)
        for freq, strength in lines:
            values -= contrast * (strength / strongest) * lineshape(axis - freq, linewidth, shape)
    else:
        _LOGGER.info("No allowed transitions; returning a flat spectrum")
    metadata = {
        "lineshape": shape.value,
        "linewidth_mhz": linewidth,
        "contrast": contrast,
        "lines_mhz": [f for f, _ in lines],
        "D_mhz": params.D,
        "B0_mT": list(params.B0),
    }
    return Spectrum(axis, values, metadata)


def excitation_line(rates: PhotophysicsRates, lifetime: float, extra_dephasing: float = 0.0,
                    detuning_range=(-100.0, 100.0, 2001), spectral_jump_rate: float = 0.0) -> Spectrum:
    """Low-temperature fluorescence-excitation line of the bright (m_s=0) transition.

    FWHM = 1/(2 pi lifetime) + extra_dephasing (+ spectral_jump_rate / pi).
    The baseline of this spectrum is 0 (no fluorescence off resonance).
    """
    if not lifetime > 0:
        raise ValidationError(f"lifetime must be > 0, got {lifetime}", field="lifetime")
    if extra_dephasing < 0 or spectral_jump_rate < 0:
        raise ValidationError("dephasing contributions must be >= 0", field="extra_dephasing")
    lifetime_limited = 1e3 / (2.0 * np.pi * lifetime)
    fwhm = lifetime_limited + extra_dephasing + spectral_jump_rate / (np.pi * 1e6)
    axis = frequency_axis(detuning_range, "detuning_range")
    values = lineshape(axis, fwhm)
    bright = rates.a_rad / (rates.a_rad + rates.k_s_z)
    dark = rates.a_rad / (rates.a_rad + rates.k_s_xy)
    metadata = {
        "lineshape": Lineshape.LORENTZIAN.value,
        "fwhm_mhz": fwhm,
        "lifetime_limited_mhz": lifetime_limited,
        "extra_dephasing_mhz": extra_dephasing,
        "baseline": 0.0,
        "suppressed_line_weight": dark / bright,
    }
    return Spectrum(axis, values, metadata, axis_name="detuning_mhz")


def find_dips(spectrum: Spectrum, prominence: Optional[float] = None, peaks: bool = False) -> np.ndarray:
    """Axis positions of the dips (or peaks) of ``spectrum``."""
    data = spectrum.values if peaks else -spectrum.values
    if prominence is None:
        span = float(np.max(data) - np.min(data))
        if span == 0:
            return np.array([])
        prominence = 0.1 * span
    idx, _ = signal.find_peaks(data, prominence=prominence)
    return spectrum.axis[idx]


def measure_fwhm(spectrum: Spectrum, baseline: float = 0.0) -> float:
    """Full width at half maximum of the dominant peak above ``baseline``."""
    values = spectrum.values - baseline
    axis = spectrum.axis
    peak = int(np.argmax(values))
    half = 0.5 * values[peak]
    left = np.flatnonzero(values[:peak] < half)
    right = np.flatnonzero(values[peak:] < half)
    if left.size == 0 or right.size == 0:
        raise ValidationError("peak is not bracketed by the axis", field="axis")
    lo, hi = left[-1], peak + right[0]
    x_left = np.interp(half, [values[lo], values[lo + 1]], [axis[lo], axis[lo + 1]])
    x_right = np.interp(half, [values[hi], values[hi - 1]], [axis[hi], axis[hi - 1]])
    return float(x_right - x_left)
