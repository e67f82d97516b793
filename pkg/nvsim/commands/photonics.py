import numpy as np

from nvsim.odmr import frequency_axis
from nvsim.photonics import (EmitterModel, LambdaSystem, dressed_states, eit_feature, eit_probe_spectrum, g2_curve,
                             linear_ramp, polariton, retrieval_sweep, storage_sweep, zpl_photon_rate)
from nvsim.util import *


def emitterFromPreset(preset: EmitterPreset) -> EmitterModel:
    if preset == EmitterPreset.NE8:
        return EmitterModel.ne8()
    return EmitterModel.nv()


class G2Experiment(Experiment):
    anchor = "Fig 6: photon antibunching and shelving-induced bunching of a single emitter"
    schema = {
        "emitter": ParamSpec(ParameterType.CHOICE, "nv", "emitter preset", EmitterPreset),
        "pump_rate": ParamSpec(ParameterType.RATE, 5e7, "optical pump rate"),
        "tau_range": ParamSpec(ParameterType.RANGE, "-200,200,801", "start,stop,points in ns"),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.G2, parameters, path)

    def check(self):
        p = self.parameters
        requirePositive(p, "pump_rate")
        axis = frequency_axis(p["tau_range"], "tau_range")
        if not axis[0] <= 0.0 <= axis[-1]:
            raise ValidationError("tau_range must span 0", field="tau_range")

    def execute(self, seed=None):
        p = self.parameters
        model = emitterFromPreset(p["emitter"])
        curve = g2_curve(model, p["pump_rate"], p["tau_range"])
        return G2Result(self.name, curve, zpl_photon_rate(model, p["pump_rate"]))


class G2Result(ExperimentResult):
    def __init__(self, name, curve, zpl_rate):
        zero = int(np.argmin(np.abs(curve.axis)))
        super().__init__(name, curve, {
            "g2_zero": float(curve.values[zero]),
            "g2_max": float(np.max(curve.values)),
            "g2_tail": float(curve.values[-1]),
            "zpl_photon_rate_per_s": zpl_rate,
        })
        self.curve = curve


class EitExperiment(Experiment):
    anchor = "Fig 8: electromagnetically induced transparency in a spin lambda system"
    schema = {
        "coupling": ParamSpec(ParameterType.FREQUENCY, "2803MHz", "coupling field frequency"),
        "splitting": ParamSpec(ParameterType.FREQUENCY, "6MHz", "two-photon (ground) splitting"),
        "omega_c": ParamSpec(ParameterType.FREQUENCY, "0.3MHz", "coupling Rabi frequency"),
        "omega_p": ParamSpec(ParameterType.FREQUENCY, "0.05MHz", "probe Rabi frequency"),
        "ground_dephasing": ParamSpec(ParameterType.RATE, np.pi * 1e6, "ground coherence decay"),
        "excited_decay": ParamSpec(ParameterType.RATE, 2e7, "decay of the shared level"),
        "probe_range": ParamSpec(ParameterType.RANGE, "2790,2804,1401", "start,stop,points in MHz"),
        "presentation": ParamSpec(ParameterType.CHOICE, "fluorescence", "signal shown", Presentation),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.EIT, parameters, path)

    def check(self):
        self.system()
        frequency_axis(self.parameters["probe_range"], "probe_range")

    def system(self) -> LambdaSystem:
        p = self.parameters
        return LambdaSystem.microwave(p["coupling"], p["splitting"], p["omega_c"], p["omega_p"],
                                      ground_dephasing=p["ground_dephasing"], excited_decay=p["excited_decay"])

    def execute(self, seed=None):
        p = self.parameters
        system = self.system()
        spectrum = eit_probe_spectrum(system, p["probe_range"], p["presentation"])
        feature = eit_feature(system, p["probe_range"]) if system.omega_c > 0 else None
        return EitResult(self.name, spectrum, system, feature)


class EitResult(ExperimentResult):
    def __init__(self, name, spectrum, system, feature):
        scalars = {
            "two_photon_resonance_mhz": system.two_photon_resonance,
            "mixing_angle": dressed_states(system).theta,
        }
        if feature is not None:
            scalars.update({"feature_center_mhz": feature.center, "feature_fwhm_mhz": feature.fwhm,
                            "feature_depth": feature.depth})
        super().__init__(name, spectrum, scalars)
        self.spectrum = spectrum
        self.feature = feature


class PolaritonStorageExperiment(Experiment):
    anchor = "§Quantum memory, dark polariton: dark-state polariton storage and retrieval of light"
    schema = {
        "omega": ParamSpec(ParameterType.FREQUENCY, "15.9154943092MHz", "initial control Rabi frequency"),
        "g": ParamSpec(ParameterType.RATE, 1e5, "single-emitter coupling"),
        "n_atoms": ParamSpec(ParameterType.FLOAT, 1e6, "ensemble size"),
        "n_steps": ParamSpec(ParameterType.INT, 1000, "ramp steps"),
        "retrieve": ParamSpec(ParameterType.BOOL, "true", "ramp the control back up afterwards"),
    }

    def __init__(self, parameters=None, path=None):
        super().__init__(ExperimentType.POLARITON_STORAGE, parameters, path)

    def check(self):
        p = self.parameters
        if p["n_steps"] < 2:
            raise ValidationError("n_steps must be >= 2", field="n_steps")
        requirePositive(p, "g", "n_atoms")
        polariton(p["omega"], p["g"], p["n_atoms"])

    def execute(self, seed=None):
        p = self.parameters
        initial = polariton(p["omega"], p["g"], p["n_atoms"])
        stored = storage_sweep(initial, linear_ramp(p["omega"], 0.0, p["n_steps"]))
        retrieved = retrieval_sweep(stored[-1], linear_ramp(0.0, p["omega"], p["n_steps"]))[1:] \
            if p["retrieve"] else []
        return PolaritonStorageResult(self.name, initial, stored, retrieved)


class PolaritonStorageResult(ExperimentResult):
    def __init__(self, name, initial, stored, retrieved):
        trajectory = list(stored) + list(retrieved)
        rows = [(k, s.omega, s.theta, s.photon_fraction, s.spin_fraction, abs(s.excited_amplitude) ** 2)
                for k, s in enumerate(trajectory)]
        table = Table(["step", "omega_mhz", "theta", "photon_fraction", "spin_fraction", "excited_fraction"], rows)
        final = trajectory[-1]
        norm = final.photon_fraction + final.spin_fraction + abs(final.excited_amplitude) ** 2
        scalars = {
            "initial_theta": initial.theta,
            "stored_spin_fraction": stored[-1].spin_fraction,
            "norm_error": abs(norm - 1.0),
        }
        if retrieved:
            scalars["retrieved_photon_fraction"] = final.photon_fraction
            scalars["roundtrip_error"] = abs(final.photon_fraction - initial.photon_fraction)
        super().__init__(name, table, scalars)
        self.trajectory = trajectory
