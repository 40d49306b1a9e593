"""HTTP service exposing the harness.

Every data endpoint returns JSON with a `meta` object and a `files` map of
file name to file text; callers persist the files. Keeping serialization
on the server side makes client-written output byte-stable no matter which
client asked.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .. import __version__
from ..estimators import ESTIMATOR_KINDS, DegreesUnavailable, EstimatorError
from ..graph import GraphError, build_transition, largest_connected_component, read_edge_list
from ..sampler import RdsSample, RestartExhausted, SamplerError
from ..spectral import SpectralError, bottleneck, classify_regime, decompose, decomposition_to_csv
from ..stats import StatsError
from ..tree import TreeError
from .config import ConfigError, parse_experiment_config, parse_school_spec
from .experiments import evaluate_estimators, run_experiment, run_simulate
from .synth import generate_school, school_files

CAUGHT = (
    ConfigError,
    GraphError,
    SpectralError,
    SamplerError,
    EstimatorError,
    StatsError,
    TreeError,
    ValueError,
)


class SpectrumRequest(BaseModel):
    edge_list_text: str
    traits: dict[str, float] | None = None
    offspring_mean: float | None = Field(default=None, gt=0)


class EstimateRequest(BaseModel):
    sample_csv: str
    estimators: list[str]
    with_replacement: bool = True
    lambda2: float | None = None
    mean_degree: float | None = Field(default=None, gt=0)
    degrees: dict[str, float] | None = None


class ExperimentRequest(BaseModel):
    config: dict
    threads: int = Field(default=1, ge=1)


class SchoolRequest(BaseModel):
    spec: dict


class FilesResponse(BaseModel):
    meta: dict
    files: dict[str, str]


def _spectrum_payload(req):
    graph_full = read_edge_list(req.edge_list_text)
    graph, _ = largest_connected_component(graph_full)
    dec = decompose(build_transition(graph))
    meta = {
        "nodes": graph.node_count,
        "dropped_nodes": graph_full.node_count - graph.node_count,
        "eigenvalues": [float(v) for v in dec.eigenvalues],
        "lambda2": dec.lambda2,
        "repeated_second": dec.repeated_second,
        "lambda_tilde": None,
        "regime": None,
    }
    if req.traits is not None:
        y = np.empty(graph.node_count)
        for i, label in enumerate(graph.labels):
            if label not in req.traits:
                raise ConfigError(f"traits: no value for node {label!r}")
            y[i] = req.traits[label]
        meta["lambda_tilde"] = float(bottleneck(graph, y).lambda_tilde)
    if req.offspring_mean is not None:
        meta["regime"] = str(classify_regime(req.offspring_mean, dec.lambda2))
    return FilesResponse(meta=meta, files={"spectrum.csv": decomposition_to_csv(dec)})


def _estimate_payload(req):
    degrees_by_state = None
    if req.degrees is not None:
        try:
            pairs = {int(k): float(v) for k, v in req.degrees.items()}
        except (TypeError, ValueError):
            raise ConfigError("degrees: keys must be state ids") from None
        size = max(pairs) + 1
        degrees_by_state = np.full(size, -1.0)
        for state, deg in pairs.items():
            degrees_by_state[state] = deg
    sample = RdsSample.from_csv(
        req.sample_csv,
        with_replacement=req.with_replacement,
        degrees_by_state=degrees_by_state,
    )
    for name in req.estimators:
        if name not in ESTIMATOR_KINDS:
            raise ConfigError(
                f"estimators: unknown {name!r}; valid: {', '.join(ESTIMATOR_KINDS)}"
            )
    records = evaluate_estimators(
        sample, req.estimators, mean_degree=req.mean_degree, gls_lambda2=req.lambda2
    )
    meta = {
        "n": sample.n,
        "max_generation": sample.max_generation,
        "seed_state": sample.seed_used,
        "estimates": {
            r.kind: {"value": r.value, "detail": r.detail} for r in records
        },
    }
    lines = ["estimator,value"]
    for r in records:
        lines.append(f"{r.kind},{r.value!r}")
    return FilesResponse(meta=meta, files={"estimates.csv": "\n".join(lines) + "\n"})


def create_app():
    app = FastAPI(title="rds-lab", version=__version__)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/spectrum", response_model=FilesResponse)
    def spectrum(req: SpectrumRequest):
        try:
            return _spectrum_payload(req)
        except CAUGHT as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/estimate", response_model=FilesResponse)
    def estimate(req: EstimateRequest):
        try:
            return _estimate_payload(req)
        except DegreesUnavailable as exc:
            raise HTTPException(
                status_code=400,
                detail=f"{exc} (pass degrees with the request)",
            ) from exc
        except CAUGHT as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/simulate", response_model=FilesResponse)
    def simulate(req: ExperimentRequest):
        try:
            config = parse_experiment_config(req.config)
            meta, files = run_simulate(config, threads=req.threads)
            return FilesResponse(meta=meta, files=files)
        except RestartExhausted as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except CAUGHT as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/experiment", response_model=FilesResponse)
    def experiment(req: ExperimentRequest):
        try:
            config = parse_experiment_config(req.config)
            result = run_experiment(config, threads=req.threads)
            return FilesResponse(meta=result.summary, files=result.files)
        except RestartExhausted as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except CAUGHT as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/synth-school", response_model=FilesResponse)
    def synth_school(req: SchoolRequest):
        try:
            spec = parse_school_spec(req.spec)
            network = generate_school(spec)
        except CAUGHT as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        meta = {
            "students": network.graph.node_count,
            "dropped_nodes": network.dropped_nodes,
            "lambda_tilde": network.lambda_tilde,
        }
        return FilesResponse(meta=meta, files=school_files(network))

    return app
