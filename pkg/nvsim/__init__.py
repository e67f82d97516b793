from __future__ import annotations

import asyncio
import logging
import os
import tempfile
import time
from typing import Callable, List, Optional, Sequence

import nest_asyncio
import numpy as np

from nvsim.config import ExperimentConfig, RunManifest, fileDigest
from nvsim.util import *
from nvsim.util.errors import *

__version__ = "0.1.0"

_LOGGER = logging.getLogger(__name__)


def newSeed() -> int:
    return int(np.random.SeedSequence().entropy % (2 ** 32))


def spawnSeeds(seed: Optional[int], n: int) -> List[int]:
    """Independent per-task seeds derived from one root seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


def columnUnit(name: str) -> str:
    for suffix, unit in (("_per_s", "1/s"), ("_mhz", "MHz"), ("_ns", "ns"), ("_s", "s"), ("_cps", "1/s")):
        if name.endswith(suffix):
            return unit
    return "1"


class NVSim:
    """Runs NV-center experiments and writes their artifacts."""

    def __init__(self, logger=None, loop=None):
        self._callbacks = set()
        self.loop = loop
        self.lastResult = None

        #Logger
        self._LOGGER = logger or _LOGGER

    def register_callback(self, callback: Callable[[ExperimentResult], None]) -> None:
        """Register callback, called with every finished result."""
        self._callbacks.add(callback)

    def remove_callback(self, callback: Callable[[ExperimentResult], None]) -> None:
        """Remove previously registered callback."""
        self._callbacks.discard(callback)

    def validate(self, config: ExperimentConfig) -> List[Diagnostic]:
        """Full parameter validation without running anything."""
        try:
            experiment = config.build()
            experiment.check()
            self._LOGGER.debug("(NVSim): " + f"{experiment.name} config is valid")
        except NVSimError as e:
            return [Diagnostic.fromException(e)]
        return []

    def executeExperiment(self, experiment: Experiment, seed=None) -> ExperimentResult:
        self._LOGGER.debug("(NVSim): " + f"running {experiment.name} (seed {seed})")
        result = experiment.execute(seed)
        self.lastResult = result
        for callback in self._callbacks:
            callback(result)
        return result

    async def executeExperimentAsync(self, experiment: Experiment, seed=None) -> ExperimentResult:
        loop = self.loop or asyncio.get_running_loop()
        return await loop.run_in_executor(None, self.executeExperiment, experiment, seed)

    async def runSweep(self, experiments: Sequence[Experiment], seed=None) -> List[ExperimentResult]:
        """Run independent experiments in parallel; task k always receives the k-th derived seed."""
        seeds = spawnSeeds(seed, len(experiments))
        for k, (experiment, child) in enumerate(zip(experiments, seeds)):
            self._LOGGER.debug("(NVSim Sweep): " + f"point {k + 1}/{len(experiments)} {experiment.name} seed {child}")
        results = await asyncio.gather(*(self.executeExperimentAsync(e, s) for e, s in zip(experiments, seeds)))
        return list(results)

    def runUntilComplete(self, coro):
        """Drive ``coro`` to completion, also from inside an already running loop."""
        loop = self.loop
        if loop is None:
            try:
                loop = asyncio.get_running_loop()
            except RuntimeError:
                return asyncio.run(coro)
        if loop.is_running():
            nest_asyncio.apply(loop)
        return loop.run_until_complete(coro)

    def run(self, config: ExperimentConfig) -> RunManifest:
        """Execute ``config`` and write its outputs plus a RunManifest into the output directory."""
        seed = config.seed if config.seed is not None else newSeed()
        config = config.withSeed(seed)
        experiment = config.build()
        experiment.check()
        start = time.perf_counter()
        result = self.runUntilComplete(self.executeExperimentAsync(experiment, seed))
        outputs = self.writeOutputs(result, config, experiment)
        manifest = RunManifest(config.serializeToXML(), __version__, seed, time.perf_counter() - start, outputs)
        try:
            manifest.write(config.output_path)
        except OSError as e:
            self._removeOutputs(config.output_path, outputs)
            raise OutputError(f"cannot write manifest: {e}")
        self._LOGGER.info("(NVSim): " + f"{experiment.name} wrote {len(outputs)} file(s) to {config.output_path}")
        return manifest

    def _header(self, experiment: Experiment, seed) -> dict:
        header = {"experiment": experiment.name, "anchor": experiment.anchor, "seed": seed, "version": __version__}
        header.update({"param." + k: v for k, v in experiment.parameters.items() if v is not None})
        return header

    def _write(self, directory, name, text, written):
        path = os.path.join(directory, name)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        written.append({"path": name, "sha256": fileDigest(path)})

    def _removeOutputs(self, directory, outputs):
        for entry in outputs:
            try:
                os.remove(os.path.join(directory, entry["path"]))
            except OSError:
                self._LOGGER.warning("(NVSim): " + f"could not remove partial output {entry['path']}")

    def writeOutputs(self, result: ExperimentResult, config: ExperimentConfig, experiment: Experiment) -> List[dict]:
        """CSV for the series and JSON for the scalars (or everything as JSON); partial files are removed on failure."""
        directory = config.output_path
        written = []
        header = self._header(experiment, config.seed)
        try:
            os.makedirs(directory, exist_ok=True)
            payload = dict(header)
            payload["scalars"] = result.scalars
            series = result.series
            if series is not None:
                names, rows = series.columns()
                if config.output_format == OutputFormat.CSV:
                    metadata = dict(header)
                    metadata.update(series.metadata)
                    metadata["units"] = [columnUnit(n) for n in names]
                    self._write(directory, result.name + ".csv", Util.formatCSV(names, rows, metadata), written)
                else:
                    payload["series"] = {n: np.asarray(rows)[:, k] for k, n in enumerate(names)}
                    payload["series_metadata"] = series.metadata
            self._write(directory, result.name + ".json", Util.formatJSON(payload), written)
        except OSError as e:
            self._removeOutputs(directory, written)
            raise OutputError(f"cannot write outputs to '{directory}': {e}")
        except Exception:
            self._removeOutputs(directory, written)
            raise
        return written

    def replay(self, manifest_path) -> List[str]:
        """Re-run a manifest into a scratch directory and compare every output digest."""
        manifest = RunManifest.fromFile(manifest_path)
        if manifest.version != __version__:
            self._LOGGER.warning("(NVSim): " + f"manifest was written by version {manifest.version}, "
                                 f"replaying with {__version__}")
        config = manifest.config()
        expected = {o["path"]: o["sha256"] for o in manifest.outputs}
        with tempfile.TemporaryDirectory() as scratch:
            replayed = self.run(config.withOverrides(output_path=scratch))
        actual = {o["path"]: o["sha256"] for o in replayed.outputs}
        mismatched = sorted(p for p in set(expected) | set(actual) if expected.get(p) != actual.get(p))
        if mismatched:
            raise ReplayError(f"replay differs in {', '.join(mismatched)}")
        return sorted(expected)
