"""
Tests for XML experiment configs, run manifests, parameter parsing and
diagnostics.
"""

import json

import numpy as np
import pytest

from nvsim.commands import EXPERIMENTS
from nvsim.config import MANIFEST_NAME, ExperimentConfig, RunManifest, experimentNames
from nvsim.util import Diagnostic, Util
from nvsim.util.errors import (
    ConfigError,
    FitError,
    ModelError,
    OutputError,
    ReplayError,
    SequenceParseError,
    StabilityError,
    UnitError,
    ValidationError,
)
from nvsim.util.protocol import ExperimentType, OutputFormat


# ═══════════════════════════════════════════════════════════════════
# Quantities
# ═══════════════════════════════════════════════════════════════════


class TestQuantities:

    @pytest.mark.parametrize("text, expected", [
        ("2.88GHz", 2880.0),
        ("500kHz", 0.5),
        ("1.5", 1.5),
        ("3e6Hz", 3.0),
    ])
    def test_frequency(self, text, expected):
        assert Util.parseFrequency(text) == pytest.approx(expected)

    @pytest.mark.parametrize("text, expected", [("1.5us", 1500.0), ("12ns", 12.0), ("5ms", 5e6), ("10s", 1e10)])
    def test_time(self, text, expected):
        assert Util.parseTime(text) == pytest.approx(expected)

    def test_field_unit_on_last_component(self):
        np.testing.assert_allclose(Util.parseField("0,0,10G"), [0.0, 0.0, 1.0])
        np.testing.assert_allclose(Util.parseField("1mT,0,0.5"), [1.0, 0.0, 0.5])

    def test_field_needs_three_components(self):
        with pytest.raises(ValidationError):
            Util.parseField("0,1mT")

    def test_unknown_unit(self):
        with pytest.raises(UnitError) as excinfo:
            Util.parseFrequency("3furlongs", field="D")
        assert excinfo.value.field == "D"

    def test_not_a_number(self):
        with pytest.raises(ValidationError):
            Util.parseTime("soon")

    def test_rate_from_intensity(self):
        assert Util.parseRate("1kW/cm2") == pytest.approx(2.678e5, rel=1e-3)
        assert Util.parseRate("1e6/s") == pytest.approx(1e6)
        with pytest.raises(UnitError):
            Util.parseRate("1W")

    @pytest.mark.parametrize("text, expected", [("true", True), ("Off", False), ("1", True)])
    def test_bool(self, text, expected):
        assert Util.parseBool(text) is expected

    def test_range(self):
        assert Util.parseRange("2780,2980,2001") == (2780.0, 2980.0, 2001)
        with pytest.raises(ValidationError):
            Util.parseRange("1,2")


# ═══════════════════════════════════════════════════════════════════
# Experiment registry
# ═══════════════════════════════════════════════════════════════════


class TestRegistry:

    def test_every_type_registered(self):
        assert set(EXPERIMENTS) == set(ExperimentType)

    @pytest.mark.parametrize("experiment_type", list(ExperimentType))
    def test_defaults_are_valid(self, experiment_type):
        experiment = EXPERIMENTS[experiment_type]({})
        experiment.check()
        assert experiment.name == experiment_type.value
        assert experiment.anchor

    def test_excitation_line_default_lifetime(self):
        assert EXPERIMENTS[ExperimentType.EXCITATION_LINE]({}).parameters["lifetime"] == pytest.approx(13.0)

    def test_unknown_parameter_has_position(self):
        with pytest.raises(ConfigError) as excinfo:
            EXPERIMENTS[ExperimentType.ODMR]({"colour": "blue"}, path="experiment")
        assert excinfo.value.position == "experiment/param[@name='colour']"

    def test_choice_parameter(self):
        experiment = EXPERIMENTS[ExperimentType.ODMR]({"lineshape": "gaussian"})
        assert experiment.parameters["lineshape"].value == "gaussian"
        with pytest.raises(ValidationError):
            EXPERIMENTS[ExperimentType.ODMR]({"lineshape": "voigt"})

    def test_out_of_range_detected_by_check(self):
        experiment = EXPERIMENTS[ExperimentType.EXCITATION_LINE]({"lifetime": "-5ns"})
        with pytest.raises(ValidationError) as excinfo:
            experiment.check()
        assert excinfo.value.field == "lifetime"


# ═══════════════════════════════════════════════════════════════════
# Config files
# ═══════════════════════════════════════════════════════════════════


ODMR_XML = """
<experiment name="odmr" seed="7">
  <output path="results" format="json"/>
  <param name="b0">0,0,1mT</param>
  <param name="linewidth">2MHz</param>
</experiment>
"""


class TestExperimentConfig:

    def test_from_xml_text(self):
        config = ExperimentConfig.fromXML(ODMR_XML)
        assert config.experiment == ExperimentType.ODMR
        assert config.seed == 7
        assert config.output_path == "results"
        assert config.output_format == OutputFormat.JSON
        assert config.parameters == {"b0": "0,0,1mT", "linewidth": "2MHz"}

    def test_from_file(self, tmp_path):
        path = tmp_path / "odmr.xml"
        path.write_text(ODMR_XML)
        assert ExperimentConfig.fromXML(str(path)).parameters["linewidth"] == "2MHz"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.fromXML(str(tmp_path / "missing.xml"))

    def test_malformed_xml(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.fromXML("<experiment name='odmr'>")

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError) as excinfo:
            ExperimentConfig.fromXML('<experiment name="nmr"/>')
        assert "odmr" in str(excinfo.value)
        assert excinfo.value.position == "experiment/@name"

    def test_missing_name(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.fromXML("<experiment/>")

    def test_wrong_root(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.fromXML('<run name="odmr"/>')

    def test_unknown_attribute(self):
        with pytest.raises(ConfigError) as excinfo:
            ExperimentConfig.fromXML('<experiment name="odmr" mode="fast"/>')
        assert excinfo.value.position == "experiment/@mode"

    def test_unknown_element(self):
        with pytest.raises(ConfigError) as excinfo:
            ExperimentConfig.fromXML('<experiment name="odmr"><laser/></experiment>')
        assert excinfo.value.position == "experiment/laser"

    def test_duplicate_param(self):
        with pytest.raises(ConfigError) as excinfo:
            ExperimentConfig.fromXML('<experiment name="zeno"><param name="n">3</param>'
                                     '<param name="n">4</param></experiment>')
        assert excinfo.value.position == "experiment/param[@name='n']"

    def test_bad_seed(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.fromXML('<experiment name="zeno" seed="abc"/>')
        with pytest.raises(ValidationError):
            ExperimentConfig("zeno", seed=-1)

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            ExperimentConfig("zeno", output_format="xlsx")

    def test_overrides(self):
        config = ExperimentConfig.fromXML(ODMR_XML).withOverrides({"linewidth": "3MHz", "D": None},
                                                                 output_path="elsewhere", seed="9")
        assert config.parameters == {"b0": "0,0,1mT", "linewidth": "3MHz"}
        assert config.output_path == "elsewhere"
        assert config.output_format == OutputFormat.JSON
        assert config.seed == 9

    @pytest.mark.parametrize("experiment_type", list(ExperimentType))
    def test_serialization_is_stable(self, experiment_type):
        config = ExperimentConfig(experiment_type, seed=5)
        text = config.serializeToXML()
        again = ExperimentConfig.fromXML(text)
        assert again.experiment == experiment_type
        assert again.seed == 5
        assert again.serializeToXML() == text

    def test_serialized_values_rebuild(self):
        config = ExperimentConfig.fromXML(ODMR_XML)
        rebuilt = ExperimentConfig.fromXML(config.serializeToXML()).build()
        np.testing.assert_allclose(rebuilt.parameters["b0"], [0.0, 0.0, 1.0])
        assert rebuilt.parameters["linewidth"] == pytest.approx(2.0)


class TestRunManifest:

    def test_round_trip(self, tmp_path):
        manifest = RunManifest("<experiment name=\"zeno\"/>", "0.1.0", 3, 0.25,
                               [{"path": "zeno.csv", "sha256": "ab" * 32}])
        manifest.write(str(tmp_path))
        data = json.loads((tmp_path / MANIFEST_NAME).read_text())
        assert set(data) == {"config", "version", "seed", "wall_time_s", "outputs"}
        loaded = RunManifest.fromFile(str(tmp_path))
        assert loaded.seed == 3
        assert loaded.outputs == manifest.outputs
        assert loaded.config().experiment == ExperimentType.ZENO

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ReplayError):
            RunManifest.fromFile(str(tmp_path / "nothing.json"))

    def test_incomplete_manifest(self, tmp_path):
        path = tmp_path / MANIFEST_NAME
        path.write_text(json.dumps({"config": "<experiment name=\"zeno\"/>"}))
        with pytest.raises(ReplayError):
            RunManifest.fromFile(str(path))


# ═══════════════════════════════════════════════════════════════════
# Diagnostics
# ═══════════════════════════════════════════════════════════════════


class TestDiagnostic:

    @pytest.mark.parametrize("exc, code", [
        (ConfigError("x", field="experiment"), 2),
        (ConfigError("x", field="colour"), 3),
        (ValidationError("x", field="lifetime"), 4),
        (SequenceParseError("x", 2, 5), 5),
        (UnitError("x"), 6),
        (StabilityError("x", 1e-9), 7),
        (ModelError("x"), 8),
        (FitError("x"), 9),
        (OutputError("x"), 10),
        (ReplayError("x"), 11),
        (RuntimeError("x"), 1),
    ])
    def test_codes(self, exc, code):
        assert Diagnostic.fromException(exc).code == code

    def test_message_format(self):
        text = str(Diagnostic.fromException(ValidationError("lifetime must be > 0", field="lifetime")))
        assert text == "[Parameter out of range] lifetime: lifetime must be > 0"

    def test_sequence_position(self):
        text = str(Diagnostic.fromException(SequenceParseError("bad token", 3, 7)))
        assert "sequence @ 3:7" in text

    def test_experiment_names(self):
        assert "bell-tomography" in experimentNames()
        assert len(experimentNames()) == len(ExperimentType)
