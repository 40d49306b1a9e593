"""Versioned experiment configuration.

Configs are JSON objects with an explicit version field. Unknown keys are
errors: a misspelled option must fail loudly, not silently fall back to a
default. Every validation error names the offending key by dotted path.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from ..estimators import ESTIMATOR_KINDS
from ..sampler import SamplerError, SeedSpec
from ..tree import OffspringLaw, TreeError

CONFIG_VERSION = 1

ENGINES = ("vertex", "counts")
MODEL_KINDS = ("two_block", "block_weights", "edge_list")
TREE_KINDS = ("m_tree", "galton_watson", "target_size")
LAW_KINDS = ("deterministic", "one_plus_binomial", "custom")


class ConfigError(ValueError):
    pass


def _as_mapping(value, path):
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object")
    return dict(value)


def _pop(mapping, key, path, required=True, default=None):
    if key in mapping:
        return mapping.pop(key)
    if required:
        raise ConfigError(f"{path}.{key}: missing required key")
    return default


def _ensure_empty(mapping, path):
    if mapping:
        key = sorted(mapping)[0]
        raise ConfigError(f"{path}.{key}: unknown key")


def _as_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be at least {minimum}, got {value}")
    return value


def _as_float(value, path, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    value = float(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be at least {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{path}: must be at most {maximum}, got {value}")
    return value


def _as_strict_rate(value):
    # correlation decay rates live strictly inside (-1, 1)
    value = _as_float(value, "config.gls_lambda2")
    if not -1.0 < value < 1.0:
        raise ConfigError(
            f"config.gls_lambda2: must lie strictly between -1 and 1, got {value}"
        )
    return value


def _as_bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false, got {value!r}")
    return value


def _as_str(value, path, choices=None):
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(
            f"{path}: expected one of {', '.join(choices)}; got {value!r}"
        )
    return value


def _as_float_list(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a nonempty list of numbers")
    return tuple(_as_float(v, f"{path}[{i}]") for i, v in enumerate(value))


@dataclass(frozen=True)
class LawSpec:
    kind: str
    m: int | None = None
    n: int | None = None
    prob: float | None = None
    pmf: tuple | None = None

    def to_law(self):
        try:
            if self.kind == "deterministic":
                return OffspringLaw.deterministic(self.m)
            if self.kind == "one_plus_binomial":
                return OffspringLaw.one_plus_binomial(self.n, self.prob)
            return OffspringLaw.custom(dict(self.pmf))
        except TreeError as exc:
            raise ConfigError(f"offspring law: {exc}") from exc


def _parse_law(data, path):
    d = _as_mapping(data, path)
    kind = _as_str(_pop(d, "kind", path), f"{path}.kind", LAW_KINDS)
    if kind == "deterministic":
        spec = LawSpec(kind=kind, m=_as_int(_pop(d, "m", path), f"{path}.m", 1))
    elif kind == "one_plus_binomial":
        spec = LawSpec(
            kind=kind,
            n=_as_int(_pop(d, "n", path, required=False, default=2), f"{path}.n", 0),
            prob=_as_float(
                _pop(d, "prob", path, required=False, default=0.5),
                f"{path}.prob",
                0.0,
                1.0,
            ),
        )
    else:
        pmf_raw = _as_mapping(_pop(d, "pmf", path), f"{path}.pmf")
        pmf = []
        for key, value in pmf_raw.items():
            try:
                count = int(key)
            except (TypeError, ValueError):
                raise ConfigError(
                    f"{path}.pmf: offspring counts must be integers, got {key!r}"
                ) from None
            if count < 0:
                raise ConfigError(f"{path}.pmf: negative offspring count {count}")
            pmf.append((count, _as_float(value, f"{path}.pmf[{key}]", 0.0)))
        spec = LawSpec(kind=kind, pmf=tuple(sorted(pmf)))
    _ensure_empty(d, path)
    spec.to_law()  # validates eagerly so errors carry config paths
    return spec


@dataclass(frozen=True)
class TreeSpec:
    kind: str
    m: int | None = None
    depth: int | None = None
    law: LawSpec | None = None
    target_n: int | None = None
    max_restarts: int | None = None

    def offspring_mean(self):
        if self.kind == "m_tree":
            return float(self.m)
        return float(self.law.to_law().mean)


def _parse_tree(data, path):
    d = _as_mapping(data, path)
    kind = _as_str(_pop(d, "kind", path), f"{path}.kind", TREE_KINDS)
    if kind == "m_tree":
        spec = TreeSpec(
            kind=kind,
            m=_as_int(_pop(d, "m", path), f"{path}.m", 1),
            depth=_as_int(_pop(d, "depth", path), f"{path}.depth", 0),
        )
    elif kind == "galton_watson":
        spec = TreeSpec(
            kind=kind,
            law=_parse_law(_pop(d, "law", path), f"{path}.law"),
            depth=_as_int(_pop(d, "depth", path), f"{path}.depth", 0),
        )
    else:
        spec = TreeSpec(
            kind=kind,
            law=_parse_law(_pop(d, "law", path), f"{path}.law"),
            target_n=_as_int(_pop(d, "target_n", path), f"{path}.target_n", 1),
            max_restarts=_as_int(
                _pop(d, "max_restarts", path, required=False, default=100),
                f"{path}.max_restarts",
                0,
            ),
        )
    _ensure_empty(d, path)
    return spec


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    p: float | None = None
    q: float | None = None
    trait: tuple | None = None
    weights: tuple | None = None
    nodes_per_block: int | None = None
    path: str | None = None
    traits_path: str | None = None
    trait_column: str = "trait"


def _resolve_path(value, base_dir, path):
    value = _as_str(value, path)
    if base_dir is not None and not os.path.isabs(value):
        value = os.path.join(base_dir, value)
    if not os.path.isfile(value):
        raise ConfigError(f"{path}: file not found: {value}")
    return value


def _parse_model(data, path, base_dir):
    d = _as_mapping(data, path)
    kind = _as_str(_pop(d, "kind", path), f"{path}.kind", MODEL_KINDS)
    if kind == "two_block":
        trait = _pop(d, "trait", path, required=False, default=[1.0, 0.0])
        npb = _pop(d, "nodes_per_block", path, required=False)
        weights = _pop(d, "weights", path, required=False)
        spec = ModelSpec(
            kind=kind,
            p=_as_float(_pop(d, "p", path), f"{path}.p"),
            q=_as_float(_pop(d, "q", path), f"{path}.q"),
            trait=_as_float_list(trait, f"{path}.trait"),
            nodes_per_block=(
                None if npb is None else _as_int(npb, f"{path}.nodes_per_block", 1)
            ),
            weights=(None if weights is None else _parse_matrix(weights, f"{path}.weights")),
        )
        if len(spec.trait) != 2:
            raise ConfigError(f"{path}.trait: two-block models need 2 trait values")
        if (spec.nodes_per_block is None) != (spec.weights is None):
            raise ConfigError(
                f"{path}: nodes_per_block and weights must be given together"
            )
    elif kind == "block_weights":
        spec = ModelSpec(
            kind=kind,
            weights=_parse_matrix(_pop(d, "weights", path), f"{path}.weights"),
            nodes_per_block=_as_int(
                _pop(d, "nodes_per_block", path), f"{path}.nodes_per_block", 1
            ),
            trait=_as_float_list(_pop(d, "trait", path), f"{path}.trait"),
        )
        if len(spec.trait) != len(spec.weights):
            raise ConfigError(f"{path}.trait: need one trait value per block")
    else:
        spec = ModelSpec(
            kind=kind,
            path=_resolve_path(_pop(d, "path", path), base_dir, f"{path}.path"),
            traits_path=_resolve_path(
                _pop(d, "traits_path", path), base_dir, f"{path}.traits_path"
            ),
            trait_column=_as_str(
                _pop(d, "trait_column", path, required=False, default="trait"),
                f"{path}.trait_column",
            ),
        )
    _ensure_empty(d, path)
    return spec


def _parse_matrix(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a nonempty list of rows")
    rows = tuple(_as_float_list(row, f"{path}[{i}]") for i, row in enumerate(value))
    width = len(rows[0])
    if any(len(row) != width for row in rows) or width != len(rows):
        raise ConfigError(f"{path}: must be square")
    return rows


@dataclass(frozen=True)
class SamplingSpec:
    with_replacement: bool
    seed: SeedSpec


def _parse_seed(data, path):
    d = _as_mapping(data, path)
    kind = _as_str(
        _pop(d, "kind", path),
        f"{path}.kind",
        ("fixed_node", "distribution", "stationary", "degree_proportional"),
    )
    try:
        if kind == "fixed_node":
            spec = SeedSpec.fixed_node(_as_int(_pop(d, "node", path), f"{path}.node", 0))
        elif kind == "distribution":
            spec = SeedSpec.distribution(
                _as_float_list(_pop(d, "probabilities", path), f"{path}.probabilities")
            )
        elif kind == "stationary":
            spec = SeedSpec.stationary()
        else:
            spec = SeedSpec.degree_proportional()
    except SamplerError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _ensure_empty(d, path)
    return spec


def _parse_sampling(data, path):
    d = _as_mapping(data, path)
    spec = SamplingSpec(
        with_replacement=_as_bool(
            _pop(d, "with_replacement", path, required=False, default=True),
            f"{path}.with_replacement",
        ),
        seed=_parse_seed(_pop(d, "seed", path), f"{path}.seed"),
    )
    _ensure_empty(d, path)
    return spec


@dataclass(frozen=True)
class ExperimentConfig:
    version: int
    model: ModelSpec
    tree: TreeSpec
    sampling: SamplingSpec
    estimators: tuple
    replicates: int
    master_seed: int
    engine: str = "vertex"
    gls_lambda2: float | None = None


def parse_experiment_config(data, base_dir=None):
    d = _as_mapping(data, "config")
    version = _as_int(_pop(d, "version", "config"), "config.version")
    if version != CONFIG_VERSION:
        raise ConfigError(
            f"config.version: expected {CONFIG_VERSION}, got {version}"
        )
    estimators_raw = _pop(d, "estimators", "config")
    if not isinstance(estimators_raw, list) or not estimators_raw:
        raise ConfigError("config.estimators: expected a nonempty list")
    estimators = []
    for i, name in enumerate(estimators_raw):
        name = _as_str(name, f"config.estimators[{i}]", ESTIMATOR_KINDS)
        if name in estimators:
            raise ConfigError(f"config.estimators[{i}]: duplicate {name!r}")
        estimators.append(name)
    gls_lambda2 = _pop(d, "gls_lambda2", "config", required=False)
    config = ExperimentConfig(
        version=version,
        model=_parse_model(_pop(d, "model", "config"), "config.model", base_dir),
        tree=_parse_tree(_pop(d, "tree", "config"), "config.tree"),
        sampling=_parse_sampling(_pop(d, "sampling", "config"), "config.sampling"),
        estimators=tuple(estimators),
        replicates=_as_int(_pop(d, "replicates", "config"), "config.replicates", 1),
        master_seed=_as_int(_pop(d, "master_seed", "config"), "config.master_seed", 0),
        engine=_as_str(
            _pop(d, "engine", "config", required=False, default="vertex"),
            "config.engine",
            ENGINES,
        ),
        gls_lambda2=(
            None if gls_lambda2 is None else _as_strict_rate(gls_lambda2)
        ),
    )
    _ensure_empty(d, "config")
    _cross_validate(config)
    return config


def _cross_validate(config):
    if config.engine == "counts":
        if config.tree.kind != "m_tree":
            raise ConfigError(
                "config.engine: the counts engine needs a deterministic "
                "offspring tree (config.tree.kind = m_tree)"
            )
        if not config.sampling.with_replacement:
            raise ConfigError(
                "config.engine: the counts engine models the with-replacement walk"
            )
    if not config.sampling.with_replacement:
        if config.tree.kind != "target_size":
            raise ConfigError(
                "config.tree.kind: without-replacement sampling stops by "
                "sample size; use target_size"
            )
        if config.model.kind == "two_block" and config.model.weights is None:
            raise ConfigError(
                "config.model: without-replacement sampling walks a node-level "
                "graph; give nodes_per_block and weights, or use edge_list"
            )
def load_experiment_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_experiment_config(data, base_dir=os.path.dirname(os.path.abspath(path)))


@dataclass(frozen=True)
class SyntheticSchoolSpec:
    version: int
    students: int
    grade_count: int
    p_within: float
    p_adjacent: float
    p_far: float
    trait_min_grade: int
    master_seed: int


def parse_school_spec(data):
    d = _as_mapping(data, "school")
    version = _as_int(_pop(d, "version", "school"), "school.version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"school.version: expected {CONFIG_VERSION}, got {version}")
    grade_count = _as_int(
        _pop(d, "grade_count", "school", required=False, default=6),
        "school.grade_count",
        2,
    )
    spec = SyntheticSchoolSpec(
        version=version,
        students=_as_int(_pop(d, "students", "school"), "school.students", grade_count),
        grade_count=grade_count,
        p_within=_as_float(_pop(d, "p_within", "school"), "school.p_within", 0.0, 1.0),
        p_adjacent=_as_float(
            _pop(d, "p_adjacent", "school"), "school.p_adjacent", 0.0, 1.0
        ),
        p_far=_as_float(_pop(d, "p_far", "school"), "school.p_far", 0.0, 1.0),
        trait_min_grade=_as_int(
            _pop(d, "trait_min_grade", "school", required=False, default=grade_count // 2),
            "school.trait_min_grade",
            1,
        ),
        master_seed=_as_int(
            _pop(d, "master_seed", "school", required=False, default=0),
            "school.master_seed",
            0,
        ),
    )
    _ensure_empty(d, "school")
    if spec.trait_min_grade >= spec.grade_count:
        raise ConfigError(
            "school.trait_min_grade: must leave at least one grade on each side"
        )
    return spec


def load_school_spec(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_school_spec(data)
