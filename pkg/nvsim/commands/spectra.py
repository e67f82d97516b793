from dataclasses import replace

import numpy as np

from nvsim.nv_model import (GAMMA_C13, NucleusSpec, PhotophysicsRates, SpinHamiltonianParams, esr_lines,
                            fluorescence_rate, saturated_flux_from_rates, saturated_intensity, spin_polarization)
from nvsim.odmr import (DEFAULT_CONTRAST, cw_odmr_spectrum, excitation_line, find_dips, frequency_axis,
                        measure_fwhm)
from nvsim.util import *


def ratesFromPreset(preset: RatePreset) -> PhotophysicsRates:
    if preset == RatePreset.LOW_TEMPERATURE:
        return PhotophysicsRates.low_temperature()
    return PhotophysicsRates.room_temperature()


def nucleiFromParameters(nucleus: HyperfineNucleus, hyperfine=None, a_perp=None):
    """Nucleus tuple for the spin Hamiltonian; ``hyperfine`` overrides the species default."""
    if nucleus == HyperfineNucleus.N14:
        return (NucleusSpec.nitrogen14(2.0 if hyperfine is None else hyperfine, a_perp=a_perp),)
    if nucleus == HyperfineNucleus.C13:
        if hyperfine is None and a_perp is None:
            return (NucleusSpec.carbon13(),)
        a = 126.0 if hyperfine is None else hyperfine
        return (NucleusSpec(Species.C13, 0.5, a, a if a_perp is None else a_perp, 0.0, GAMMA_C13),)
    return ()


SPIN_SCHEMA = {
    "b0": ParamSpec(ParameterType.FIELD, "0,0,0mT", "static field vector"),
    "D": ParamSpec(ParameterType.FREQUENCY, "2880MHz", "zero-field splitting"),
    "E": ParamSpec(ParameterType.FREQUENCY, "0MHz", "strain splitting"),
    "nucleus": ParamSpec(ParameterType.CHOICE, "none", "hyperfine partner", HyperfineNucleus),
    "hyperfine": ParamSpec(ParameterType.FREQUENCY, None, "parallel hyperfine coupling"),
    "a_perp": ParamSpec(ParameterType.FREQUENCY, None, "perpendicular hyperfine coupling"),
}


def spinParameters(p) -> SpinHamiltonianParams:
    return SpinHamiltonianParams(D=p["D"], E=p["E"], B0=tuple(p["b0"]),
                                 nuclei=nucleiFromParameters(p["nucleus"], p["hyperfine"], p["a_perp"]))


class OdmrExperiment(Experiment):
    anchor = "Fig 3 / Fig 11(a): zero-field splitting and hyperfine structure in CW ODMR"
    schema = dict(SPIN_SCHEMA, **{
        "mw_range": ParamSpec(ParameterType.RANGE, "2780,2980,2001", "start,stop,points in MHz"),
        "linewidth": ParamSpec(ParameterType.FREQUENCY, "1MHz", "line FWHM"),
        "contrast": ParamSpec(ParameterType.FLOAT, DEFAULT_CONTRAST, "dip depth of the strongest line"),
        "rate_contrast": ParamSpec(ParameterType.BOOL, "false", "take the contrast from the optical rate model"),
        "lineshape": ParamSpec(ParameterType.CHOICE, "lorentzian", "line profile", Lineshape),
    })

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.ODMR, parameters, path)

    def check(self):
        p = self.parameters
        spinParameters(p)
        requirePositive(p, "linewidth")
        if not p["rate_contrast"] and not 0.0 < p["contrast"] < 1.0:
            raise ValidationError(f"contrast must lie in (0, 1), got {p['contrast']}", field="contrast")
        frequency_axis(p["mw_range"], "mw_range")

    def execute(self, seed=None):
        p = self.parameters
        params = spinParameters(p)
        contrast = None if p["rate_contrast"] else p["contrast"]
        spectrum = cw_odmr_spectrum(params, PhotophysicsRates.room_temperature(), p["mw_range"], p["linewidth"],
                                    contrast, p["lineshape"])
        return OdmrResult(self.name, spectrum, find_dips(spectrum), esr_lines(params))


class OdmrResult(ExperimentResult):
    def __init__(self, name, spectrum, dips, lines):
        super().__init__(name, spectrum, {
            "dips_mhz": list(dips),
            "lines_mhz": [f for f, _ in lines],
            "line_strengths": [s for _, s in lines],
            "contrast": spectrum.metadata["contrast"],
        })
        self.spectrum = spectrum
        self.dips = np.asarray(dips)


class ExcitationLineExperiment(Experiment):
    anchor = "Fig 4: lifetime-limited optical excitation line at low temperature"
    schema = {
        "lifetime": ParamSpec(ParameterType.TIME, "13ns", "excited-state lifetime"),
        "extra_dephasing": ParamSpec(ParameterType.FREQUENCY, "0MHz", "additional homogeneous width"),
        "jump_rate": ParamSpec(ParameterType.RATE, 0.0, "spectral jump rate"),
        "detuning_range": ParamSpec(ParameterType.RANGE, "-100,100,2001", "start,stop,points in MHz"),
        "rates": ParamSpec(ParameterType.CHOICE, "low", "photophysics preset", RatePreset),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.EXCITATION_LINE, parameters, path)

    def check(self):
        p = self.parameters
        requirePositive(p, "lifetime")
        requirePositive(p, "extra_dephasing", "jump_rate", strict=False)
        frequency_axis(p["detuning_range"], "detuning_range")

    def execute(self, seed=None):
        p = self.parameters
        spectrum = excitation_line(ratesFromPreset(p["rates"]), p["lifetime"], p["extra_dephasing"],
                                   p["detuning_range"], p["jump_rate"])
        return ExcitationLineResult(self.name, spectrum)


class ExcitationLineResult(ExperimentResult):
    def __init__(self, name, spectrum):
        self.fwhm = spectrum.metadata["fwhm_mhz"]
        self.measuredFwhm = measure_fwhm(spectrum)
        super().__init__(name, spectrum, {
            "fwhm_mhz": self.fwhm,
            "measured_fwhm_mhz": self.measuredFwhm,
            "lifetime_limited_mhz": spectrum.metadata["lifetime_limited_mhz"],
        })
        self.spectrum = spectrum


class SaturationExperiment(Experiment):
    anchor = "§NV photophysics, saturated intensity: saturated fluorescence intensity set by intersystem crossing"
    schema = {
        "rates": ParamSpec(ParameterType.CHOICE, "room", "photophysics preset", RatePreset),
        "powers": ParamSpec(ParameterType.LIST, "1e5,1e6,1e7,3e7,1e8,3e8,1e9", "optical pump rates in 1/s"),
        "branch": ParamSpec(ParameterType.CHOICE, "dark", "excited branch for the closed form", SpinState),
        "r_slr": ParamSpec(ParameterType.RATE, None, "spin-lattice rate override"),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.SATURATION, parameters, path)

    def check(self):
        p = self.parameters
        requirePositive(p, "r_slr")
        powers = np.asarray(p["powers"], dtype=float)
        if powers.size == 0 or np.any(powers < 0):
            raise ValidationError("powers must be a non-empty list of rates >= 0", field="powers")

    def execute(self, seed=None):
        p = self.parameters
        rates = ratesFromPreset(p["rates"])
        if p["r_slr"] is not None:
            rates = replace(rates, r_slr=p["r_slr"])
        rows = []
        powers = np.asarray(p["powers"], dtype=float)
        for w in powers:
            flux = fluorescence_rate(rates, w)
            rows.append((w, flux.emitted, flux.detected, spin_polarization(rates, w)))
        table = Table(["pump_rate_per_s", "emitted_per_s", "detected_per_s", "polarization"], rows)
        return SaturationResult(self.name, table, saturated_intensity(rates, p["branch"]),
                                saturated_flux_from_rates(rates))


class SaturationResult(ExperimentResult):
    def __init__(self, name, table, closed_form, rate_model):
        super().__init__(name, table, {
            "saturated_emitted_per_s": closed_form.emitted,
            "saturated_detected_per_s": closed_form.detected,
            "low_temperature_limit_per_s": closed_form.low_temperature_limit,
            "rate_model_flux_per_s": rate_model,
        })
        self.saturated = closed_form
        self.rateModelFlux = rate_model
