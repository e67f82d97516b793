import numpy as np

from nvsim.commands.spectra import SPIN_SCHEMA, spinParameters
from nvsim.odmr import frequency_axis
from nvsim.pulsec import (bell_vector, echo_frequencies, format_sequence, hahn_echo_trace, prepare_bell,
                          rabi_trace, tomography_reconstruct)
from nvsim.qops import fidelity
from nvsim.util import *


class RabiExperiment(Experiment):
    anchor = "Fig 12(a): Rabi nutation of a single electron spin under strong microwave driving"
    schema = dict(SPIN_SCHEMA, **{
        "rabi": ParamSpec(ParameterType.FREQUENCY, "140MHz", "nominal Rabi frequency"),
        "t_max": ParamSpec(ParameterType.TIME, "200ns", "trace length"),
        "n_points": ParamSpec(ParameterType.INT, 4001, "samples"),
        "dephasing": ParamSpec(ParameterType.RATE, 0.0, "envelope decay rate"),
    })

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.RABI, parameters, path)

    def check(self):
        p = self.parameters
        spinParameters(p)
        requirePositive(p, "rabi", "t_max")
        requirePositive(p, "dephasing", strict=False)
        if p["n_points"] < 2:
            raise ValidationError("n_points must be >= 2", field="n_points")

    def execute(self, seed=None):
        p = self.parameters
        trace = rabi_trace(spinParameters(p), p["rabi"], p["t_max"], p["n_points"], p["dephasing"])
        return RabiResult(self.name, trace)


class RabiResult(ExperimentResult):
    def __init__(self, name, trace):
        rabi = trace.metadata["rabi_mhz"]
        self.piTime = 1e3 / (2.0 * rabi)
        times_ns = Util.secondsToNs(trace.times)
        # p_start oscillates at the Rabi frequency; 1/ns -> MHz
        self.fittedRabi = 1e3 * Util.dominantFrequency(times_ns, trace["p_start"])
        self.inversion = float(np.interp(self.piTime, times_ns, trace["p_target"]))
        super().__init__(name, trace, {
            "rabi_mhz": rabi,
            "fitted_rabi_mhz": self.fittedRabi,
            "pi_time_ns": self.piTime,
            "inversion_at_pi": self.inversion,
            "transition": trace.metadata["transition"],
        })
        self.trace = trace


class EchoExperiment(Experiment):
    anchor = "§Coherent spin manipulation, two-pulse echo: electron spin echo envelope modulation by a nearby nuclear spin"
    schema = dict(SPIN_SCHEMA, **{
        "b0": ParamSpec(ParameterType.FIELD, "0,0,5mT", "static field vector"),
        "nucleus": ParamSpec(ParameterType.CHOICE, "N14", "hyperfine partner", HyperfineNucleus),
        "a_perp": ParamSpec(ParameterType.FREQUENCY, "1.5MHz", "perpendicular hyperfine coupling"),
        "tau_range": ParamSpec(ParameterType.RANGE, "0,4000,4001", "start,stop,points in ns"),
        "rabi": ParamSpec(ParameterType.FREQUENCY, None, "finite pulse Rabi frequency"),
    })

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.ECHO, parameters, path)

    def check(self):
        p = self.parameters
        spinParameters(p)
        requirePositive(p, "rabi")
        if frequency_axis(p["tau_range"], "tau_range")[0] < 0:
            raise ValidationError("tau must be >= 0", field="tau_range")

    def execute(self, seed=None):
        p = self.parameters
        params = spinParameters(p)
        trace = hahn_echo_trace(params, p["tau_range"], p["rabi"])
        return EchoResult(self.name, trace, echo_frequencies(params, 1e-3))


class EchoResult(ExperimentResult):
    def __init__(self, name, trace, frequencies):
        echo = trace["echo"]
        # 1/ns -> MHz
        times_ns = Util.secondsToNs(trace.times)
        modulated = bool(np.ptp(echo) > 1e-6)
        dominant = 1e3 * Util.dominantFrequency(times_ns, echo) if modulated and echo.size > 3 else 0.0
        super().__init__(name, trace, {
            "expected_frequencies_mhz": list(frequencies),
            "dominant_frequency_mhz": dominant,
            "modulation_depth": float(np.ptp(echo)),
        })
        self.trace = trace
        self.frequencies = frequencies


class BellTomographyExperiment(Experiment):
    anchor = "Fig 14(a,b): electron-nuclear Bell states and their density-matrix tomography"
    schema = {
        "state": ParamSpec(ParameterType.CHOICE, "psi-minus", "Bell state to prepare", BellState),
        "noise": ParamSpec(ParameterType.RATE, 0.0, "electron dephasing during preparation"),
        "mw_rabi": ParamSpec(ParameterType.FREQUENCY, "10MHz", "electron pulse Rabi frequency"),
        "rf_rabi": ParamSpec(ParameterType.FREQUENCY, "1MHz", "nuclear pulse Rabi frequency"),
        "tolerance": ParamSpec(ParameterType.FLOAT, 0.02, "Hermiticity / trace tolerance"),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.BELL_TOMOGRAPHY, parameters, path)

    def check(self):
        p = self.parameters
        requirePositive(p, "mw_rabi", "rf_rabi", "tolerance")
        requirePositive(p, "noise", strict=False)

    def execute(self, seed=None):
        p = self.parameters
        prep = prepare_bell(p["state"], p["mw_rabi"], p["rf_rabi"])
        tomography = tomography_reconstruct(prep, noise=p["noise"], tolerance=p["tolerance"])
        return BellTomographyResult(self.name, p["state"], prep, tomography)


class BellTomographyResult(ExperimentResult):
    def __init__(self, name, state, prep, tomography):
        rho = tomography.rho.data
        self.state = state
        self.tomography = tomography
        self.fidelity = fidelity(tomography.rho, bell_vector(state))
        super().__init__(name, None, {
            "state": state,
            "rho_real": np.real(rho),
            "rho_imag": np.imag(rho),
            "fidelity": self.fidelity,
            "hermitian_ok": tomography.hermitian_ok,
            "trace_ok": tomography.trace_ok,
            "physical": tomography.physical,
            "sequence": format_sequence(prep),
        })
