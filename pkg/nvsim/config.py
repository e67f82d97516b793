"""Experiment configuration files and run manifests.

A config file is a single XML element::

    <experiment name="odmr" seed="7">
      <output path="out" format="csv"/>
      <param name="b0">0,0,1mT</param>
    </experiment>
"""
import hashlib
import json
import logging
import os
from xml.sax.saxutils import quoteattr

import untangle

from nvsim.commands import EXPERIMENTS
from nvsim.util import Experiment, Util
from nvsim.util.errors import ConfigError, ReplayError, ValidationError
from nvsim.util.protocol import ExperimentType, OutputFormat

_LOGGER = logging.getLogger(__name__)

DEFAULT_OUTPUT = "out"
MANIFEST_NAME = "manifest.json"

_EXPERIMENT_ATTRIBUTES = ("name", "seed")
_OUTPUT_ATTRIBUTES = ("path", "format")


def experimentNames():
    return [t.value for t in ExperimentType]


class ExperimentConfig:
    """Which experiment to run, its raw parameter values, where to write and with which seed."""

    def __init__(self, experiment, parameters=None, output_path=DEFAULT_OUTPUT, output_format=OutputFormat.CSV,
                 seed=None):
        try:
            self.experiment = ExperimentType(experiment)
        except ValueError:
            raise ConfigError(f"unknown experiment '{experiment}'; valid: {', '.join(experimentNames())}",
                              field="experiment", position="experiment/@name")
        try:
            self.output_format = OutputFormat(output_format)
        except ValueError:
            raise ConfigError(f"unknown output format '{output_format}'; valid: csv, json", field="format",
                              position="experiment/output/@format")
        if seed is not None:
            try:
                seed = int(seed)
            except (TypeError, ValueError):
                raise ValidationError(f"seed must be an integer, got '{seed}'", field="seed")
            if seed < 0:
                raise ValidationError("seed must be >= 0", field="seed")
        self.parameters = dict(parameters or {})
        self.output_path = output_path or DEFAULT_OUTPUT
        self.seed = seed

    def build(self) -> Experiment:
        """Resolve and validate the parameters against the experiment's schema."""
        return EXPERIMENTS[self.experiment](self.parameters, path="experiment")

    def withOverrides(self, parameters=None, output_path=None, output_format=None, seed=None):
        merged = dict(self.parameters)
        merged.update({k: v for k, v in (parameters or {}).items() if v is not None})
        return ExperimentConfig(self.experiment, merged, output_path or self.output_path,
                                output_format or self.output_format, self.seed if seed is None else seed)

    def withSeed(self, seed):
        return ExperimentConfig(self.experiment, self.parameters, self.output_path, self.output_format, seed)

    def serializeToXML(self):
        """Resolved config in the file format; parsing it back gives the same run."""
        xmlstr = self.build().serializeToXML(self.seed)
        head, rest = xmlstr.split(">", 1)
        output = "<output path={0} format={1}/>".format(quoteattr(str(self.output_path)),
                                                         quoteattr(self.output_format.value))
        return head + ">" + output + rest

    @classmethod
    def fromXML(cls, source):
        """Parse a config from XML text or a file path."""
        text = source
        if not str(source).lstrip().startswith("<"):
            if not os.path.isfile(source):
                raise ConfigError(f"config file '{source}' not found", field="config")
            with open(source, encoding="utf-8") as handle:
                text = handle.read()
        try:
            doc = untangle.parse(text)
        except Exception as e:
            raise ConfigError(f"malformed config XML: {e}", field="config")
        roots = doc.children
        if len(roots) != 1 or roots[0]._name != "experiment":
            raise ConfigError("config root element must be <experiment>", field="config", position="/")
        root = roots[0]
        for key in root._attributes:
            if key not in _EXPERIMENT_ATTRIBUTES:
                raise ConfigError(f"unknown attribute '{key}'", field=key, position=f"experiment/@{key}")
        if "name" not in root._attributes:
            raise ConfigError(f"<experiment> needs a name; valid: {', '.join(experimentNames())}",
                              field="experiment", position="experiment/@name")

        parameters = {}
        output_path, output_format = DEFAULT_OUTPUT, OutputFormat.CSV.value
        for child in root.children:
            if child._name == "output":
                for key in child._attributes:
                    if key not in _OUTPUT_ATTRIBUTES:
                        raise ConfigError(f"unknown attribute '{key}'", field=key,
                                          position=f"experiment/output/@{key}")
                output_path = child._attributes.get("path", output_path)
                output_format = child._attributes.get("format", output_format)
            elif child._name == "param":
                name = child._attributes.get("name")
                extra = [k for k in child._attributes if k != "name"]
                if name is None or extra:
                    raise ConfigError("<param> takes exactly one attribute, name", field=extra[0] if extra else "param",
                                      position="experiment/param")
                if name in parameters:
                    raise ConfigError(f"parameter '{name}' given twice", field=name,
                                      position=f"experiment/param[@name='{name}']")
                parameters[name] = child.cdata.strip()
            else:
                raise ConfigError(f"unknown element <{child._name}>", field=child._name,
                                  position=f"experiment/{child._name}")
        return cls(root["name"], parameters, output_path, output_format, root["seed"])

    def __repr__(self):
        return f"ExperimentConfig({self.experiment.value}, seed={self.seed}, out={self.output_path})"


def fileDigest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class RunManifest:
    """Everything needed to re-run a result byte for byte."""

    def __init__(self, config_xml, version, seed, wall_time, outputs):
        self.config_xml = config_xml
        self.version = version
        self.seed = seed
        self.wall_time = wall_time
        # [{"path": file name relative to the output directory, "sha256": digest}]
        self.outputs = list(outputs)

    def toJSON(self):
        return Util.formatJSON({
            "config": self.config_xml,
            "version": self.version,
            "seed": self.seed,
            "wall_time_s": self.wall_time,
            "outputs": self.outputs,
        })

    def write(self, directory):
        path = os.path.join(directory, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.toJSON())
        return path

    def config(self) -> ExperimentConfig:
        return ExperimentConfig.fromXML(self.config_xml)

    @classmethod
    def fromFile(cls, path):
        if os.path.isdir(path):
            path = os.path.join(path, MANIFEST_NAME)
        try:
            with open(path, encoding="utf-8") as handle:
                data = json.load(handle)
            return cls(data["config"], data["version"], data["seed"], data["wall_time_s"], data["outputs"])
        except (OSError, ValueError, KeyError) as e:
            raise ReplayError(f"cannot read manifest '{path}': {e}")
