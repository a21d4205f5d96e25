"""Command-line client: parse a config, call the service, write CSV results.

By default the CLI runs the HTTP app in-process (no server needed); pass
``--server URL`` to target a running instance instead. ``fedsched serve``
starts one with uvicorn.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys
from pathlib import Path

import httpx

from .config import parse_config
from .core import ConfigurationError
from .experiment import render_report, results_from_payload, write_results

EXIT_OK = 0
EXIT_REPLICATION_FAILED = 1
EXIT_CONFIG_ERROR = 2


class ServiceError(RuntimeError):
    pass


def _post_in_process(path: str, payload: dict) -> httpx.Response:
    from .service import create_app

    transport = httpx.ASGITransport(app=create_app())

    async def go() -> httpx.Response:
        async with httpx.AsyncClient(
            transport=transport, base_url="http://fedsched.local", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def call_service(server: str | None, path: str, payload: dict) -> dict:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post(path, json=payload)
    else:
        response = _post_in_process(path, payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise ServiceError(f"service returned {response.status_code}: {detail}")
    return response.json()


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as error:
        raise ConfigurationError(f"--seeds must be a comma list of integers: {text!r}") from error
    if not seeds:
        raise ConfigurationError("--seeds must name at least one seed")
    if any(seed < 0 for seed in seeds):
        raise ConfigurationError("--seeds must all be >= 0")
    return seeds


def cmd_run(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    payload = {
        "config": config.model_dump(mode="json"),
        "schedulers": [args.scheduler] if args.scheduler else None,
        "seeds": _parse_seeds(args.seeds) if args.seeds else None,
        "workload_mode": args.workload,
    }
    response = call_service(args.server, "/experiments", payload)
    results = results_from_payload(response)
    out_dir = Path(args.out) if args.out else Path(config.run.output_dir)
    paths = write_results(results, out_dir)
    print(render_report(results.report), end="")
    print(f"wrote {', '.join(str(p) for p in paths)}")
    if not results.all_ok():
        failed = [s for s in results.summaries if s.status != "ok"]
        for summary in failed:
            print(
                f"replication failed: scheduler={summary.scheduler} seed={summary.seed} "
                f"({summary.status})",
                file=sys.stderr,
            )
        return EXIT_REPLICATION_FAILED
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsched",
        description="Schedule concurrent federated-learning jobs in simulation.",
    )
    parser.add_argument(
        "--log-level", default="INFO", help="python logging level (default INFO)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scheduler x seed sweep and write CSVs")
    run.add_argument("--config", required=True, help="path to the YAML experiment config")
    run.add_argument(
        "--scheduler",
        choices=["fedact", "random", "greedy", "genetic", "sequential", "all"],
        help="override the config's scheduler (or 'all')",
    )
    run.add_argument("--seeds", help="comma list overriding the config's seeds")
    run.add_argument("--out", help="output directory (default from config.run.output_dir)")
    run.add_argument(
        "--workload", choices=["real", "surrogate"], help="override the workload mode"
    )
    run.add_argument(
        "--server",
        help="base URL of a running fedsched service; omitted = run in-process",
    )
    run.set_defaults(func=cmd_run)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigurationError as error:
        print(f"configuration error: {error}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ServiceError as error:
        print(str(error), file=sys.stderr)
        return EXIT_REPLICATION_FAILED
    except OSError as error:
        print(f"i/o error: {error}", file=sys.stderr)
        return EXIT_REPLICATION_FAILED


if __name__ == "__main__":
    sys.exit(main())
