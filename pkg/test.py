import logging
import sys
import asyncio

import nvsim
from nvsim.commands import OdmrExperiment, RabiExperiment, ZenoExperiment
from nvsim.config import ExperimentConfig


loop = asyncio.new_event_loop()

logger = logging.getLogger("Logger")
logger.setLevel(logging.DEBUG)
handler = logging.StreamHandler(sys.stdout)
handler.setLevel(logging.DEBUG)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
handler.setFormatter(formatter)
logger.addHandler(handler)


sim = nvsim.NVSim(logger=logger, loop=loop)
sim.register_callback(lambda result: logger.info(str(result)))

odmr = OdmrExperiment({"b0": "0,0,1mT"})
odmr.check()
result = sim.executeExperiment(odmr)
logger.info("ODMR dips: " + str(result.scalars["dips_mhz"]))

results = loop.run_until_complete(sim.runSweep([RabiExperiment({"rabi": "40MHz", "t_max": "1000ns"}),
                                                RabiExperiment({"rabi": "140MHz"})], seed=1))
for r in results:
    logger.info("Rabi: " + str(r.scalars))

manifest = sim.run(ExperimentConfig("zeno", {"n": "8"}, output_path="out", seed=7))
logger.info("Wrote " + ", ".join(o["path"] for o in manifest.outputs))
logger.info("Replay: " + ", ".join(sim.replay("out")))

#sim.run(ExperimentConfig("bell-tomography", {"state": "phi-plus", "noise": "1e6"}, output_path="out"))

loop.close()
