import numpy as np

from nvsim.commands.spectra import ratesFromPreset
from nvsim.measurement import (DEFAULT_BRIGHT_CPS, DEFAULT_DARK_CPS, DEFAULT_READOUT_FLIP, ZenoParams, dwell_times,
                               jump_trace, rabi_damping_point, readout_fidelity, readout_histogram,
                               stationary_bright_fraction, zeno_survival_continuous, zeno_survival_discrete)
from nvsim.util import *


class ZenoExperiment(Experiment):
    anchor = "§Zeno, survival probability p_surv: quantum Zeno suppression of spin transitions by repeated measurement"
    schema = {
        "lambda_t": ParamSpec(ParameterType.FLOAT, 1.0, "coupling times total evolution time"),
        "n": ParamSpec(ParameterType.INT, 4, "number of measurements"),
        "n_max": ParamSpec(ParameterType.INT, 200, "largest N in the survival curve"),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.ZENO, parameters, path)

    def check(self):
        p = self.parameters
        requirePositive(p, "lambda_t", strict=False)
        if p["n"] < 2:
            raise ValidationError("n must be >= 2", field="n")
        p_flip = (p["lambda_t"] / p["n"]) ** 2
        if p_flip > 0.5:
            raise ValidationError(f"(lambda_t / n)^2 = {p_flip:.4g} exceeds 1/2; use more measurements", field="n")

    def execute(self, seed=None):
        p = self.parameters
        z = ZenoParams(p["lambda_t"], 1.0, p["n"])
        # the discrete formula holds for (lambda T / N)^2 <= 1/2
        n_min = max(1, int(np.ceil(np.sqrt(2.0) * p["lambda_t"])))
        rows = [(n, zeno_survival_discrete(ZenoParams(p["lambda_t"], 1.0, n)),
                 zeno_survival_continuous(ZenoParams(p["lambda_t"], 1.0, n)))
                for n in range(n_min, max(p["n_max"], p["n"]) + 1)]
        table = Table(["n_measurements", "p_surv", "p_surv_continuous"], rows)
        return ZenoResult(self.name, table, zeno_survival_discrete(z), zeno_survival_continuous(z))


class ZenoResult(ExperimentResult):
    def __init__(self, name, table, discrete, continuous):
        super().__init__(name, table, {"p_surv": discrete, "p_surv_continuous": continuous})
        self.survival = discrete
        self.continuousSurvival = continuous


class ReadoutExperiment(Experiment):
    anchor = "Fig 9(b): single-shot spin readout photon statistics"
    schema = {
        "n_windows": ParamSpec(ParameterType.INT, 10000, "readout windows"),
        "bright_cps": ParamSpec(ParameterType.FLOAT, DEFAULT_BRIGHT_CPS, "m_s=0 count rate"),
        "dark_cps": ParamSpec(ParameterType.FLOAT, DEFAULT_DARK_CPS, "m_s=+-1 count rate"),
        "bin": ParamSpec(ParameterType.TIME, "5ms", "window length"),
        "flip_probability": ParamSpec(ParameterType.FLOAT, DEFAULT_READOUT_FLIP, "flip chance per window"),
        "flip_rate": ParamSpec(ParameterType.RATE, None, "flip rate inside the window"),
        "fit_model": ParamSpec(ParameterType.CHOICE, "poisson", "component shape", FitModel),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.READOUT, parameters, path)

    def check(self):
        p = self.parameters
        requirePositive(p, "n_windows", "bin")
        requirePositive(p, "dark_cps", "flip_rate", strict=False)
        if p["bright_cps"] < p["dark_cps"]:
            raise ValidationError("bright_cps must be >= dark_cps", field="bright_cps")
        if not 0.0 <= p["flip_probability"] <= 1.0:
            raise ValidationError("flip_probability must lie in [0, 1]", field="flip_probability")

    def execute(self, seed=None):
        p = self.parameters
        histogram = readout_histogram(p["n_windows"], p["bright_cps"], p["dark_cps"], Util.nsToSeconds(p["bin"]),
                                      p["flip_probability"], seed, p["flip_rate"])
        return ReadoutResult(self.name, histogram, readout_fidelity(histogram, p["fit_model"]))


class ReadoutResult(ExperimentResult):
    def __init__(self, name, histogram, fidelity):
        scalars = {
            "fidelity": fidelity.fidelity,
            "threshold": fidelity.threshold,
            "peak_ratio": fidelity.peak_ratio,
            "wing_ratio": fidelity.wing_ratio,
            "resolved": fidelity.resolved,
            "fallback": fidelity.fallback,
        }
        if fidelity.fit is not None:
            scalars.update({"dark_mean": fidelity.fit.dark_mean, "bright_mean": fidelity.fit.bright_mean,
                            "dark_weight": fidelity.fit.dark_weight})
        super().__init__(name, histogram, scalars)
        self.histogram = histogram
        self.fidelity = fidelity


class JumpsExperiment(Experiment):
    anchor = "Fig 9(a): quantum jumps of a single spin in the fluorescence telegraph signal"
    schema = {
        "duration": ParamSpec(ParameterType.TIME, "10s", "trace length"),
        "bin": ParamSpec(ParameterType.TIME, "5ms", "count bin"),
        "laser_power": ParamSpec(ParameterType.RATE, 1e5, "optical pump rate"),
        "rates": ParamSpec(ParameterType.CHOICE, "low", "photophysics preset", RatePreset),
        "bright_cps": ParamSpec(ParameterType.FLOAT, DEFAULT_BRIGHT_CPS, "m_s=0 count rate"),
        "dark_cps": ParamSpec(ParameterType.FLOAT, DEFAULT_DARK_CPS, "m_s=+-1 count rate"),
        "selective": ParamSpec(ParameterType.BOOL, "true", "pump only the m_s=0 optical line"),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.JUMPS, parameters, path)

    def check(self):
        p = self.parameters
        requirePositive(p, "duration", "bin")
        requirePositive(p, "laser_power", "dark_cps", strict=False)
        if p["duration"] < p["bin"]:
            raise ValidationError("duration must cover at least one bin", field="duration")
        if not p["bright_cps"] > p["dark_cps"]:
            raise ValidationError("bright_cps must exceed dark_cps", field="bright_cps")

    def execute(self, seed=None):
        p = self.parameters
        trace = jump_trace(ratesFromPreset(p["rates"]), p["bright_cps"], p["dark_cps"],
                           Util.nsToSeconds(p["duration"]), Util.nsToSeconds(p["bin"]), seed,
                           p["laser_power"], p["selective"])
        return JumpsResult(self.name, trace)


class JumpsResult(ExperimentResult):
    def __init__(self, name, trace):
        dwell = dwell_times(trace)
        flips = trace.metadata.get("flip_rates", (0.0, 0.0))
        super().__init__(name, trace, {
            "n_switches": len(trace.metadata.get("switch_times", [])),
            "mean_bright_dwell_s": float(np.mean(dwell[SpinState.BRIGHT])) if dwell[SpinState.BRIGHT].size else 0.0,
            "mean_dark_dwell_s": float(np.mean(dwell[SpinState.DARK])) if dwell[SpinState.DARK].size else 0.0,
            "bright_fraction": float(np.mean(trace["state"] == SpinState.BRIGHT.value)),
            "stationary_bright_fraction": stationary_bright_fraction(tuple(flips)),
        })
        self.trace = trace
        self.dwell = dwell


class RabiDampingExperiment(Experiment):
    anchor = "Fig 10(b): laser-induced damping of Rabi nutation and its saturation"
    schema = {
        "powers": ParamSpec(ParameterType.LIST, "1e5,2e5,5e5,1e6,1e7,1e8,2e8,5e8,1e9", "optical pump rates in 1/s"),
        "rabi": ParamSpec(ParameterType.FREQUENCY, "100MHz", "microwave Rabi frequency"),
        "intrinsic": ParamSpec(ParameterType.RATE, 1e5, "damping without laser"),
        "rates": ParamSpec(ParameterType.CHOICE, "room", "photophysics preset", RatePreset),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.RABI_DAMPING, parameters, path)

    def check(self):
        p = self.parameters
        requirePositive(p, "rabi")
        requirePositive(p, "intrinsic", strict=False)
        powers = np.asarray(p["powers"], dtype=float)
        if powers.size == 0 or np.any(powers < 0) or np.any(np.diff(powers) <= 0):
            raise ValidationError("powers must be non-negative and ascending", field="powers")

    def execute(self, seed=None):
        from nvsim import NVSim
        p = self.parameters
        sweep = [RabiDampingPointExperiment({"power": w, "rabi": p["rabi"], "intrinsic": p["intrinsic"],
                                             "rates": p["rates"]}) for w in p["powers"]]
        sim = NVSim()
        points = [r.point for r in sim.runUntilComplete(sim.runSweep(sweep, seed))]
        table = Table(["pump_rate_per_s", "damping_per_s", "mode_rate_per_s", "flagged"],
                      [(d.power, d.rate, d.mode_rate, float(d.flagged)) for d in points])
        return RabiDampingResult(self.name, table, points)


class RabiDampingPointExperiment(Experiment):
    """One optical power of a Rabi damping sweep."""
    anchor = RabiDampingExperiment.anchor
    schema = {
        "power": ParamSpec(ParameterType.RATE, 0.0, "optical pump rate in 1/s"),
        "rabi": RabiDampingExperiment.schema["rabi"],
        "intrinsic": RabiDampingExperiment.schema["intrinsic"],
        "rates": RabiDampingExperiment.schema["rates"],
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.RABI_DAMPING, parameters, path)

    def check(self):
        requirePositive(self.parameters, "power", "intrinsic", strict=False)
        requirePositive(self.parameters, "rabi")

    def execute(self, seed=None):
        p = self.parameters
        point = rabi_damping_point(p["power"], ratesFromPreset(p["rates"]), p["rabi"], p["intrinsic"])
        result = ExperimentResult(self.name, scalars=point._asdict())
        result.point = point
        return result


class RabiDampingResult(ExperimentResult):
    def __init__(self, name, table, points):
        super().__init__(name, table, {
            "flagged_points": [d.power for d in points if d.flagged],
            "max_damping_per_s": float(np.nanmax([d.mode_rate for d in points])),
        })
        self.points = points
