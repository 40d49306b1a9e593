"""Command-line interface.

Thin client over the HTTP service: every data subcommand builds a request,
posts it to either an in-process app instance or a remote server
(--server), and writes the returned files under --out. The serve
subcommand runs the service itself.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

import httpx

from .config import ConfigError
from .experiments import read_traits_table, write_bundle
from .service import create_app


class CliError(Exception):
    pass


def resolve_threads(value):
    if value is not None:
        if value < 1:
            raise CliError("--threads must be at least 1")
        return value
    env = os.environ.get("RDS_LAB_THREADS")
    if env:
        try:
            parsed = int(env)
        except ValueError:
            raise CliError(f"RDS_LAB_THREADS must be an integer, got {env!r}") from None
        if parsed < 1:
            raise CliError("RDS_LAB_THREADS must be at least 1")
        return parsed
    return 1


async def _post_in_process(path, payload):
    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(
        transport=transport, base_url="http://rds-lab", timeout=None
    ) as client:
        return await client.post(path, json=payload)


def _post(server, path, payload):
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post(path, json=payload)
    else:
        response = asyncio.run(_post_in_process(path, payload))
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise CliError(f"{path} failed ({response.status_code}): {detail}")
    return response.json()


def _load_json_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON: {exc}") from exc


def _read_text(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc


def _absolutize_model_paths(config_dict, base_dir):
    # the server validates; the client only pins relative paths to the
    # config file's directory so both in-process and remote runs agree
    model = config_dict.get("model")
    if isinstance(model, dict):
        for key in ("path", "traits_path"):
            value = model.get(key)
            if isinstance(value, str) and not os.path.isabs(value):
                model[key] = os.path.abspath(os.path.join(base_dir, value))


def _write_output(files, out_dir):
    write_bundle(files, out_dir)
    for name in sorted(files):
        print(f"wrote {os.path.join(out_dir, name)}")


def _cmd_spectrum(args):
    payload = {"edge_list_text": _read_text(args.edge_list)}
    if args.traits is not None:
        payload["traits"] = read_traits_table(
            args.traits, args.trait_column, context="traits"
        )
    if args.offspring_mean is not None:
        payload["offspring_mean"] = args.offspring_mean
    body = _post(args.server, "/spectrum", payload)
    meta = body["meta"]
    head = ", ".join(f"{v:.6g}" for v in meta["eigenvalues"][:8])
    suffix = ", ..." if len(meta["eigenvalues"]) > 8 else ""
    print(f"nodes: {meta['nodes']} (dropped {meta['dropped_nodes']})")
    print(f"eigenvalues: {head}{suffix}")
    print(f"lambda2: {meta['lambda2']:.6g}")
    if meta["lambda_tilde"] is not None:
        print(f"lambda_tilde: {meta['lambda_tilde']:.6g}")
    if meta["regime"] is not None:
        print(f"regime: {meta['regime']}")
    _write_output(body["files"], args.out)
    return 0


def _cmd_simulate(args):
    config = _load_json_file(args.config)
    if isinstance(config, dict):
        _absolutize_model_paths(config, os.path.dirname(os.path.abspath(args.config)))
        if args.seed is not None:
            config["master_seed"] = args.seed
    payload = {"config": config, "threads": resolve_threads(args.threads)}
    body = _post(args.server, "/simulate", payload)
    meta = body["meta"]
    print(f"replicates: {meta['replicates']} (engine: {meta['engine']})")
    _write_output(body["files"], args.out)
    return 0


def _cmd_estimate(args):
    payload = {
        "sample_csv": _read_text(args.sample),
        "estimators": [name.strip() for name in args.estimators.split(",") if name.strip()],
        "with_replacement": not args.no_replacement,
    }
    if args.lambda2 is not None:
        payload["lambda2"] = args.lambda2
    if args.mean_degree is not None:
        payload["mean_degree"] = args.mean_degree
    if args.degrees is not None:
        payload["degrees"] = read_traits_table(
            args.degrees, args.degree_column, context="degrees"
        )
    body = _post(args.server, "/estimate", payload)
    meta = body["meta"]
    print(f"n: {meta['n']}, generations: 0..{meta['max_generation']}")
    for kind, entry in meta["estimates"].items():
        print(f"{kind}: {entry['value']!r}")
    _write_output(body["files"], args.out)
    return 0


def _cmd_experiment(args):
    config = _load_json_file(args.config)
    if isinstance(config, dict):
        _absolutize_model_paths(config, os.path.dirname(os.path.abspath(args.config)))
        if args.seed is not None:
            config["master_seed"] = args.seed
    payload = {"config": config, "threads": resolve_threads(args.threads)}
    body = _post(args.server, "/experiment", payload)
    meta = body["meta"]
    print(
        f"replicates: {meta['replicates']}, engine: {meta['engine']}, "
        f"lambda2: {meta['lambda2']:.6g}"
    )
    for kind in sorted(meta["estimators"]):
        entry = meta["estimators"][kind]["pooled"]
        line = (
            f"{kind}: mean={entry['mean']:.6g} variance={entry['variance']:.6g} "
            f"ks={entry['ks_fitted_normal']:.4g} modes={len(entry['modes'])}"
        )
        separation = meta["estimators"][kind]["separation"]
        if separation is not None:
            flag = "separated" if separation["separated"] else "not separated"
            line += f" seed-classes: z={separation['z_statistic']:.3g} ({flag})"
        print(line)
    _write_output(body["files"], args.out)
    return 0


def _cmd_synth_school(args):
    spec = _load_json_file(args.spec)
    if isinstance(spec, dict) and args.seed is not None:
        spec["master_seed"] = args.seed
    body = _post(args.server, "/synth-school", {"spec": spec})
    meta = body["meta"]
    print(
        f"students: {meta['students']} (dropped {meta['dropped_nodes']}), "
        f"lambda_tilde: {meta['lambda_tilde']:.6g}"
    )
    _write_output(body["files"], args.out)
    return 0


def _cmd_serve(args):
    import uvicorn

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rds-lab",
        description="Referral-sampling estimators, simulators, and diagnostics.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=None, help="remote service URL (default: run in process)")
    common.add_argument("--out", default=".", help="directory for output files")
    common.add_argument("--seed", type=int, default=None, help="override the master RNG seed")
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (default: RDS_LAB_THREADS or 1)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="walk eigenvalues of an edge list")
    p.add_argument("edge_list")
    p.add_argument("--traits", default=None, help="node-trait CSV for the bottleneck value")
    p.add_argument("--trait-column", default="trait")
    p.add_argument("--offspring-mean", type=float, default=None, help="report the regime for this offspring mean")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("simulate", parents=[common], help="write raw replicate samples")
    p.add_argument("config")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="run estimators on an exported sample")
    p.add_argument("sample")
    p.add_argument("--estimators", default="mean", help="comma-separated estimator names")
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--mean-degree", type=float, default=None)
    p.add_argument("--degrees", default=None, help="state-degree CSV (column: degree)")
    p.add_argument("--degree-column", default="degree")
    p.add_argument("--no-replacement", action="store_true", help="mark the sample as drawn without replacement")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("experiment", parents=[common], help="run a replicated experiment")
    p.add_argument("config")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("synth-school", parents=[common], help="generate a synthetic school network")
    p.add_argument("spec")
    p.set_defaults(func=_cmd_synth_school)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
