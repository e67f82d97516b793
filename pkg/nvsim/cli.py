"""Command line entry point.

    nvsim run EXPERIMENT [--config FILE] [--out DIR] [--seed N] [--format csv|json] [--PARAM VALUE ...]
    nvsim validate [EXPERIMENT] [--config FILE] [--PARAM VALUE ...]
    nvsim replay MANIFEST

Values that start with "-" need the "=" form, e.g. --rabi=-5MHz.
"""
import argparse
import logging
import sys

from nvsim import NVSim
from nvsim.commands import EXPERIMENTS
from nvsim.config import ExperimentConfig, experimentNames
from nvsim.util import Diagnostic
from nvsim.util.errors import ConfigError, ExitCodes, NVSimError, ValidationError
from nvsim.util.protocol import ExperimentType, OutputFormat

_LOGGER = logging.getLogger(__name__)

COMMANDS = ("run", "validate", "replay")


def setupLogging(verbose: bool):
    logger = logging.getLogger("nvsim")
    if not any(getattr(h, "_nvsim", False) for h in logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler._nvsim = True
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)
    return logger


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def experimentParser(experiment: ExperimentType = None) -> argparse.ArgumentParser:
    """Common flags plus one ``--param`` flag per schema entry of ``experiment``."""
    prog = "nvsim " + (experiment.value if experiment else "")
    parser = argparse.ArgumentParser(prog=prog.strip(), add_help=True, allow_abbrev=False,
                                     epilog="Values that start with '-' need the '=' form, e.g. --rabi=-5MHz.")
    parser.add_argument("--config", help="XML config file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", help="random seed")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], help="output format")
    parser.add_argument("-v", "--verbose", action="store_true")
    if experiment is not None:
        group = parser.add_argument_group("parameters")
        for name, spec in EXPERIMENTS[experiment].schema.items():
            default = "" if spec.default is None else f" (default {spec.default})"
            group.add_argument(_flag(name), dest="param_" + name, metavar=spec.ptype.value.upper(),
                               help=spec.help + default)
    return parser


def _split(argv):
    """(command, experiment name or None, remaining flags)."""
    command = argv[0]
    rest = argv[1:]
    if command not in COMMANDS:
        command, rest = "run", argv
    name = rest[0] if rest and not rest[0].startswith("-") else None
    return command, name, rest[1:] if name is not None else rest


def resolveConfig(name, flags) -> ExperimentConfig:
    experiment = None
    if name is not None:
        try:
            experiment = ExperimentType(name)
        except ValueError:
            raise ConfigError(f"unknown experiment '{name}'; valid: {', '.join(experimentNames())}",
                              field="experiment")
    args, unknown = experimentParser(experiment).parse_known_args(flags)
    if args.config:
        config = ExperimentConfig.fromXML(args.config)
        if experiment is not None and config.experiment != experiment:
            raise ConfigError(f"config is for '{config.experiment.value}', not '{experiment.value}'",
                              field="experiment")
        if experiment is None:
            # parameter flags are only known once the file names the experiment
            args, unknown = experimentParser(config.experiment).parse_known_args(flags)
    elif experiment is not None:
        config = ExperimentConfig(experiment)
    else:
        raise ConfigError(f"name an experiment or pass --config; valid: {', '.join(experimentNames())}",
                          field="experiment")
    if unknown:
        raise ConfigError(f"unknown option '{unknown[0]}'", field=unknown[0].lstrip("-").replace("-", "_"))
    overrides = {k[len("param_"):]: v for k, v in vars(args).items() if k.startswith("param_") and v is not None}
    return config.withOverrides(overrides, args.out, args.format, args.seed)


def _report(diagnostics):
    for diagnostic in diagnostics:
        print(str(diagnostic), file=sys.stderr)


def _exitCode(exc) -> int:
    return ExitCodes.VALIDATION if isinstance(exc, ValidationError) else ExitCodes.RUNTIME


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    verbose = any(a in ("-v", "--verbose") for a in argv)
    argv = [a for a in argv if a not in ("-v", "--verbose")]
    logger = setupLogging(verbose)
    if not argv or argv[0] in ("-h", "--help"):
        print(__doc__)
        return ExitCodes.OK if argv else ExitCodes.VALIDATION
    command, name, flags = _split(argv)
    sim = NVSim(logger=logger)
    try:
        if command == "replay":
            if name is None:
                raise ConfigError("replay needs a manifest path", field="manifest")
            compared = sim.replay(name)
            print(f"replay identical: {', '.join(compared)}")
            return ExitCodes.OK
        config = resolveConfig(name, flags)
        if command == "validate":
            diagnostics = sim.validate(config)
            _report(diagnostics)
            if not diagnostics:
                print(f"{config.experiment.value}: config is valid")
            return ExitCodes.OK if not diagnostics else ExitCodes.VALIDATION
        manifest = sim.run(config)
        for entry in manifest.outputs:
            print(entry["path"])
        return ExitCodes.OK
    except SystemExit as e:
        # argparse exits on --help and on malformed flags
        return ExitCodes.OK if not e.code else ExitCodes.VALIDATION
    except NVSimError as e:
        _report([Diagnostic.fromException(e)])
        return _exitCode(e)
    except Exception as e:
        logger.error(f"(nvsim): unexpected failure: {e}")
        return ExitCodes.RUNTIME


if __name__ == "__main__":
    sys.exit(main())
