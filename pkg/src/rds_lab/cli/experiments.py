"""Experiment harness.

Resolves a config into an executable model, runs replicates on a thread
pool, and reduces the replicate estimates into distribution summaries.
Every replicate owns the RNG stream seeded by (master_seed, replicate
index), so results are identical for any thread count.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..blockmodel import BlockModel, BlockModelError, block_process_from, expand_to_graph
from ..branching import simulate_type_counts
from ..estimators import (
    KIND_TO_COLUMNS,
    EstimateRecord,
    EstimatorError,
    gls_closed_form_2block,
    gls_ipw,
    gls_vh,
    ipw,
    sample_mean,
    sbm_fgls,
    vh,
)
from ..graph import GraphError, build_transition, largest_connected_component, read_edge_list
from ..sampler import SeedSpec, draw_seed, walk, walk_without_replacement
from ..spectral import SpectralError, bottleneck, classify_regime, decompose
from ..stats import StatsError, mixture_separation, qq_to_csv, summarize
from ..tree import OffspringLaw, galton_watson, grow_to_size, m_tree
from .config import ConfigError

NEEDS_DEGREES = ("ipw", "vh", "gls_ipw", "gls_vh")
NEEDS_LAMBDA2 = ("gls", "gls_ipw", "gls_vh")


@dataclass
class ResolvedModel:
    """Executable form of a model spec: the state chain, its
    decomposition, per-state traits and degrees, and, when a node-level
    population exists, the graph with per-node traits."""

    tm: object
    dec: object
    y: np.ndarray
    degrees: np.ndarray | None
    mean_degree: float | None
    graph: object | None
    graph_y: np.ndarray | None
    gls_lambda2: float | None
    lambda2_source: str
    lambda_tilde: float | None


def read_traits_table(path, column, context="config.model.traits_path"):
    """Node-value table: CSV whose first column is the node label and whose
    named column carries the value."""
    with open(path, encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ConfigError(f"{context}: {path} is empty")
    header = [cell.strip() for cell in lines[0].split(",")]
    if column not in header[1:]:
        raise ConfigError(
            f"{context}: no column {column!r} in {path} "
            f"(columns: {', '.join(header[1:]) or 'none'})"
        )
    idx = header.index(column)
    table = {}
    for line in lines[1:]:
        cells = [cell.strip() for cell in line.split(",")]
        if len(cells) <= idx:
            raise ConfigError(f"{context}: short row {line!r}")
        try:
            table[cells[0]] = float(cells[idx])
        except ValueError:
            raise ConfigError(
                f"{context}: bad value {cells[idx]!r} for node {cells[0]!r}"
            ) from None
    return table


def _resolve_edge_list(spec, config):
    with open(spec.path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = read_edge_list(text)
    except GraphError as exc:
        raise ConfigError(f"config.model.path: {exc}") from exc
    graph, _ = largest_connected_component(raw)
    table = read_traits_table(spec.traits_path, spec.trait_column)
    y = np.empty(graph.node_count)
    for i, label in enumerate(graph.labels):
        if label not in table:
            raise ConfigError(
                f"config.model.traits_path: no trait for node {label!r}"
            )
        y[i] = table[label]
    tm = build_transition(graph)
    dec = decompose(tm)
    lam_tilde = None
    try:
        lam_tilde = float(bottleneck(graph, y).lambda_tilde)
    except SpectralError:
        pass
    if config.gls_lambda2 is not None:
        gls_lambda2, source = config.gls_lambda2, "config"
    else:
        gls_lambda2 = lam_tilde
        source = "bottleneck"
    return ResolvedModel(
        tm=tm,
        dec=dec,
        y=y,
        degrees=graph.degrees,
        mean_degree=graph.volume / graph.node_count,
        graph=graph,
        graph_y=y,
        gls_lambda2=gls_lambda2,
        lambda2_source=source,
        lambda_tilde=lam_tilde,
    )


def _resolve_blockmodel(spec, config):
    try:
        if spec.kind == "two_block":
            model = BlockModel.two_block(
                spec.p,
                spec.q,
                trait=spec.trait,
                nodes_per_block=spec.nodes_per_block,
                block_weights=spec.weights,
            )
        else:
            model = BlockModel.from_weights(
                np.array(spec.weights), spec.nodes_per_block, spec.trait
            )
    except BlockModelError as exc:
        raise ConfigError(f"config.model: {exc}") from exc
    tm = block_process_from(model)
    dec = decompose(tm)
    degrees = model.block_degrees if model.has_expansion else None
    mean_degree = model.mean_degree if model.has_expansion else None
    graph = None
    graph_y = None
    if model.has_expansion and not config.sampling.with_replacement:
        graph, assignment = expand_to_graph(model)
        graph_y = model.trait[assignment]
    if config.gls_lambda2 is not None:
        gls_lambda2, source = config.gls_lambda2, "config"
    else:
        gls_lambda2, source = dec.lambda2, "model"
    return ResolvedModel(
        tm=tm,
        dec=dec,
        y=model.trait,
        degrees=degrees,
        mean_degree=mean_degree,
        graph=graph,
        graph_y=graph_y,
        gls_lambda2=gls_lambda2,
        lambda2_source=source,
        lambda_tilde=None,
    )


def resolve_model(config):
    if config.model.kind == "edge_list":
        model = _resolve_edge_list(config.model, config)
    else:
        model = _resolve_blockmodel(config.model, config)
    degree_based = [e for e in config.estimators if e in NEEDS_DEGREES]
    if degree_based and model.degrees is None and config.sampling.with_replacement:
        raise ConfigError(
            f"config.estimators: {degree_based[0]!r} needs per-node degrees; "
            "give the model an expansion (nodes_per_block + weights) or use "
            "an edge-list model"
        )
    lambda_based = [e for e in config.estimators if e in NEEDS_LAMBDA2]
    if lambda_based and model.gls_lambda2 is None:
        raise ConfigError(
            f"config.estimators: {lambda_based[0]!r} needs a correlation "
            "decay rate; set config.gls_lambda2 (the trait is constant, so "
            "no default can be derived)"
        )
    if (
        config.sampling.seed.kind == "degree_proportional"
        and config.sampling.with_replacement
        and model.degrees is None
    ):
        raise ConfigError(
            "config.sampling.seed: degree-proportional seeding needs a model "
            "with degrees"
        )
    return model


def _effective_seed_spec(config):
    seed = config.sampling.seed
    # over a node population the degree-proportional law IS the stationary
    # law of the state chain, so the with-replacement lanes can share one path
    if config.sampling.with_replacement and seed.kind == "degree_proportional":
        return SeedSpec.stationary()
    return seed


def _build_tree(tree_spec, rng):
    if tree_spec.kind == "m_tree":
        return m_tree(tree_spec.m, tree_spec.depth)
    law = tree_spec.law.to_law()
    if tree_spec.kind == "galton_watson":
        return galton_watson(law, tree_spec.depth, rng)
    return grow_to_size(law, tree_spec.target_n, rng)


def evaluate_estimators(sample, names, mean_degree=None, gls_lambda2=None):
    """Apply the named estimators to one sample, in the given order."""
    records = []
    for name in names:
        if name == "mean":
            rec = sample_mean(sample)
        elif name == "ipw":
            rec = ipw(sample, mean_degree=mean_degree)
        elif name == "vh":
            rec = vh(sample)
        elif name == "gls":
            rec = gls_closed_form_2block(sample, gls_lambda2)
        elif name == "gls_ipw":
            rec = gls_ipw(sample, lambda2=gls_lambda2, mean_degree=mean_degree)
        elif name == "gls_vh":
            rec = gls_vh(sample, lambda2=gls_lambda2)
        elif name == "sbm_fgls":
            rec = sbm_fgls(sample)
        else:
            raise EstimatorError(f"unknown estimator {name!r}")
        records.append(rec)
    return records


def _seed_class(trait_value):
    return repr(float(trait_value))


def _run_pool(worker, replicates, threads):
    if threads <= 1:
        nested = [worker(rep) for rep in range(replicates)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            nested = list(pool.map(worker, range(replicates)))
    return [record for sub in nested for record in sub]


def run_replicates_vertex(model, config, threads=1):
    seed_spec = _effective_seed_spec(config)

    def worker(rep):
        rng = np.random.default_rng([config.master_seed, rep])
        tree = _build_tree(config.tree, rng)
        sample = walk(
            model.tm, tree, seed_spec, model.y, rng, state_degrees=model.degrees
        )
        records = evaluate_estimators(
            sample,
            config.estimators,
            mean_degree=model.mean_degree,
            gls_lambda2=model.gls_lambda2,
        )
        cls = _seed_class(sample.traits[0])
        for record in records:
            record.replicate = rep
            record.seed_class = cls
        return records

    return _run_pool(worker, config.replicates, threads)


def run_replicates_without_replacement(model, config, threads=1):
    law = config.tree.law.to_law()

    def worker(rep):
        rng = np.random.default_rng([config.master_seed, rep])
        sample = walk_without_replacement(
            model.graph,
            law,
            config.sampling.seed,
            config.tree.target_n,
            config.tree.max_restarts,
            rng,
            model.graph_y,
        )
        records = evaluate_estimators(
            sample,
            config.estimators,
            mean_degree=model.mean_degree,
            gls_lambda2=model.gls_lambda2,
        )
        cls = _seed_class(sample.traits[0])
        for record in records:
            record.replicate = rep
            record.seed_class = cls
        return records

    return _run_pool(worker, config.replicates, threads)


def _fgls_lambda2_from_transitions(transitions, y):
    """Add-one-smoothed correlation decay rate from aggregated
    parent-state to child-state counts, classes split by trait value."""
    classes = np.unique(y)
    if classes.shape[0] > 2:
        raise EstimatorError("sbm_fgls needs a binary trait")
    hi = y == classes[-1]
    lo = ~hi
    n_hi = float(transitions[hi].sum())
    n_lo = float(transitions[lo].sum())
    stay_hi = float(transitions[np.ix_(hi, hi)].sum())
    stay_lo = float(transitions[np.ix_(lo, lo)].sum())
    p_hat = (stay_hi + 1.0) / (n_hi + 2.0)
    q_hat = (stay_lo + 1.0) / (n_lo + 2.0)
    return p_hat + q_hat - 1.0, p_hat, q_hat


def estimates_from_counts(count_sample, model, names, m):
    """Estimator values from generation-level type counts on a complete
    m-ary tree. Totals use integers below 2^53, so each estimate matches
    the vertex-level computation exactly."""
    counts = count_sample.counts
    depth = counts.shape[0] - 1
    sizes = counts.sum(axis=1)
    n = int(sizes.sum())
    seed_state = count_sample.type_counts.seed_state
    y = model.y

    def weighted_total(series):
        return counts.astype(float) @ np.asarray(series, dtype=float)

    def gls_from_series(series, lam):
        per_gen = weighted_total(series)
        if depth == 0:
            return float(per_gen[0])
        root = (1.0 - lam * (m - 1.0)) * per_gen[0]
        internal = (1.0 - lam * m) * per_gen[1:depth].sum()
        leaf = per_gen[depth]
        return float((root + internal + leaf) / (n * (1.0 - lam) + 2.0 * lam))

    records = []
    for name in names:
        detail = None
        if name == "mean":
            value = float(weighted_total(y).sum() / n)
        elif name == "ipw":
            value = float(
                weighted_total(y * model.mean_degree / model.degrees).sum() / n
            )
        elif name == "vh":
            value = float(
                weighted_total(y / model.degrees).sum()
                / weighted_total(1.0 / model.degrees).sum()
            )
        elif name == "gls":
            value = gls_from_series(y, model.gls_lambda2)
        elif name == "gls_ipw":
            value = gls_from_series(
                y * model.mean_degree / model.degrees, model.gls_lambda2
            )
        elif name == "gls_vh":
            denom = gls_from_series(1.0 / model.degrees, model.gls_lambda2)
            if denom == 0:
                raise EstimatorError("degree-reciprocal series averaged to zero")
            value = gls_from_series(y / model.degrees, model.gls_lambda2) / denom
        elif name == "sbm_fgls":
            lam_hat, p_hat, q_hat = _fgls_lambda2_from_transitions(
                count_sample.transitions, y
            )
            value = gls_from_series(y, lam_hat)
            detail = {
                "lambda2_hat": lam_hat,
                "p_hat": p_hat,
                "q_hat": q_hat,
                "note": "plug-in approximation; transition fitted from this sample",
            }
        else:
            raise EstimatorError(f"unknown estimator {name!r}")
        records.append(
            EstimateRecord(
                kind=name,
                value=value,
                n=n,
                t=depth,
                seed_used=seed_state,
                detail=detail,
            )
        )
    return records


def run_replicates_counts(model, config, threads=1):
    seed_spec = _effective_seed_spec(config)
    law = OffspringLaw.deterministic(config.tree.m)
    k = model.tm.state_count

    def worker(rep):
        rng = np.random.default_rng([config.master_seed, rep])
        seed_state = draw_seed(
            seed_spec, rng, state_count=k, stationary=model.tm.stationary
        )
        count_sample = simulate_type_counts(
            model.tm, law, seed_state, config.tree.depth, rng
        )
        records = estimates_from_counts(
            count_sample, model, config.estimators, config.tree.m
        )
        cls = _seed_class(model.y[seed_state])
        for record in records:
            record.replicate = rep
            record.seed_class = cls
        return records

    return _run_pool(worker, config.replicates, threads)


def estimates_csv(records):
    lines = ["replicate,estimator,adjustment,t,n,seed_class,value"]
    for r in records:
        base, adj = KIND_TO_COLUMNS[r.kind]
        lines.append(
            f"{r.replicate},{base},{adj},{r.t},{r.n},{r.seed_class},{r.value!r}"
        )
    return "\n".join(lines) + "\n"


def _summary_entry(values):
    s = summarize(np.asarray(values))
    return {
        "count": int(len(values)),
        "mean": s.mean,
        "variance": s.variance,
        "ks_fitted_normal": s.ks_fitted_normal,
        "modes": [float(x) for x in s.mode_locations],
    }, s


def summarize_records(records):
    """Per-estimator pooled and per-seed-class summaries plus KDE and Q-Q
    export files."""
    by_kind = {}
    for r in records:
        by_kind.setdefault(r.kind, []).append(r)
    summary = {}
    files = {}
    for kind in by_kind:
        recs = by_kind[kind]
        pooled_values = [r.value for r in recs]
        pooled_entry, pooled_stats = _summary_entry(pooled_values)
        if pooled_stats.curve is not None:
            files[f"kde_{kind}.csv"] = pooled_stats.curve.to_csv()
        if pooled_stats.qq is not None:
            files[f"qq_{kind}.csv"] = qq_to_csv(*pooled_stats.qq)
        by_class = {}
        for r in recs:
            by_class.setdefault(r.seed_class, []).append(r.value)
        class_entries = {}
        for cls in sorted(by_class, key=str):
            entry, cls_stats = _summary_entry(by_class[cls])
            class_entries[str(cls)] = entry
            if cls_stats.curve is not None:
                files[f"kde_{kind}_seed_{cls}.csv"] = cls_stats.curve.to_csv()
            if cls_stats.qq is not None:
                files[f"qq_{kind}_seed_{cls}.csv"] = qq_to_csv(*cls_stats.qq)
        separation = None
        if len(by_class) >= 2 and all(len(v) >= 2 for v in by_class.values()):
            try:
                report = mixture_separation(by_class)
            except StatsError:
                report = None
            if report is not None:
                separation = {
                    "class_means": {str(k): v for k, v in report.class_means.items()},
                    "class_counts": {str(k): v for k, v in report.class_counts.items()},
                    "z_statistic": report.z_statistic,
                    "separated": report.separated,
                    "classes_compared": [str(c) for c in report.classes_compared],
                }
        summary[kind] = {
            "pooled": pooled_entry,
            "by_seed_class": class_entries,
            "separation": separation,
        }
    return summary, files


@dataclass
class ExperimentResult:
    records: list
    summary: dict
    files: dict


def run_experiment(config, threads=1):
    model = resolve_model(config)
    if not config.sampling.with_replacement:
        records = run_replicates_without_replacement(model, config, threads)
    elif config.engine == "counts":
        records = run_replicates_counts(model, config, threads)
    else:
        records = run_replicates_vertex(model, config, threads)
    estimator_summaries, stat_files = summarize_records(records)
    try:
        regime = str(classify_regime(config.tree.offspring_mean(), model.dec.lambda2))
    except SpectralError:
        regime = None
    summary = {
        "version": 1,
        "engine": config.engine,
        "replicates": config.replicates,
        "threads": int(threads),
        "master_seed": config.master_seed,
        "record_count": len(records),
        "lambda2": model.dec.lambda2,
        "gls_lambda2": model.gls_lambda2,
        "lambda2_source": model.lambda2_source,
        "lambda_tilde": model.lambda_tilde,
        "offspring_mean": config.tree.offspring_mean(),
        "regime": regime,
        "estimators": estimator_summaries,
    }
    files = dict(stat_files)
    files["estimates.csv"] = estimates_csv(records)
    files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    return ExperimentResult(records=records, summary=summary, files=files)


def run_simulate(config, threads=1):
    """Raw per-replicate output: vertex samples or generation counts."""
    model = resolve_model(config)
    files = {}
    if config.engine == "counts":
        seed_spec = _effective_seed_spec(config)
        law = OffspringLaw.deterministic(config.tree.m)
        k = model.tm.state_count

        def worker(rep):
            rng = np.random.default_rng([config.master_seed, rep])
            seed_state = draw_seed(
                seed_spec, rng, state_count=k, stationary=model.tm.stationary
            )
            cs = simulate_type_counts(model.tm, law, seed_state, config.tree.depth, rng)
            lines = ["generation,state,count"]
            for t in range(cs.counts.shape[0]):
                for j in range(k):
                    lines.append(f"{t},{j},{cs.counts[t, j]}")
            return [(f"counts_{rep:04d}.csv", "\n".join(lines) + "\n")]

    elif not config.sampling.with_replacement:
        law = config.tree.law.to_law()

        def worker(rep):
            rng = np.random.default_rng([config.master_seed, rep])
            sample = walk_without_replacement(
                model.graph,
                law,
                config.sampling.seed,
                config.tree.target_n,
                config.tree.max_restarts,
                rng,
                model.graph_y,
            )
            return [(f"sample_{rep:04d}.csv", sample.to_csv())]

    else:
        seed_spec = _effective_seed_spec(config)

        def worker(rep):
            rng = np.random.default_rng([config.master_seed, rep])
            tree = _build_tree(config.tree, rng)
            sample = walk(
                model.tm, tree, seed_spec, model.y, rng, state_degrees=model.degrees
            )
            return [(f"sample_{rep:04d}.csv", sample.to_csv())]

    pairs = _run_pool(worker, config.replicates, threads)
    files.update(pairs)
    meta = {
        "engine": config.engine,
        "replicates": config.replicates,
        "with_replacement": config.sampling.with_replacement,
        "files": sorted(files),
    }
    return meta, files


def write_bundle(files, out_dir):
    """Write every file atomically: temp file in the target directory,
    then rename over the final name."""
    os.makedirs(out_dir, exist_ok=True)
    for name in sorted(files):
        payload = files[name]
        fd, tmp_path = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp_path, os.path.join(out_dir, name))
        except BaseException:
            if os.path.exists(tmp_path):
                os.unlink(tmp_path)
            raise
