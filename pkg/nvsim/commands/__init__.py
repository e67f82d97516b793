from nvsim.commands.photonics import *
from nvsim.commands.readout import *
from nvsim.commands.spectra import *
from nvsim.commands.spin import *
from nvsim.util.protocol import ExperimentType

EXPERIMENTS = {
    ExperimentType.ODMR: OdmrExperiment,
    ExperimentType.EXCITATION_LINE: ExcitationLineExperiment,
    ExperimentType.RABI: RabiExperiment,
    ExperimentType.ECHO: EchoExperiment,
    ExperimentType.BELL_TOMOGRAPHY: BellTomographyExperiment,
    ExperimentType.ZENO: ZenoExperiment,
    ExperimentType.READOUT: ReadoutExperiment,
    ExperimentType.G2: G2Experiment,
    ExperimentType.EIT: EitExperiment,
    ExperimentType.POLARITON_STORAGE: PolaritonStorageExperiment,
    ExperimentType.SATURATION: SaturationExperiment,
    ExperimentType.JUMPS: JumpsExperiment,
    ExperimentType.RABI_DAMPING: RabiDampingExperiment,
}
