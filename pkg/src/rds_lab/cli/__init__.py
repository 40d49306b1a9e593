"""Experiment harness, HTTP service, and command-line interface."""

from .config import (
    ConfigError,
    ExperimentConfig,
    SyntheticSchoolSpec,
    load_experiment_config,
    load_school_spec,
    parse_experiment_config,
    parse_school_spec,
)
from .experiments import (
    ExperimentResult,
    ResolvedModel,
    resolve_model,
    run_experiment,
    run_simulate,
    write_bundle,
)
from .service import create_app
from .synth import SchoolNetwork, generate_school, school_files

__all__ = [name for name in dir() if not name.startswith("_")]
