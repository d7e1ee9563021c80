"""Thin command-line client for the experiment service.

All computation happens behind the HTTP API; by default the client talks to
an in-process instance of the app (no server needed), or to a remote one via
--server.  Exit codes: 0 pass, 2 scientific-check failure, 1 operational
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import httpx

from .config import ConfigError, parse_config
from .service.app import MODES, create_app
from .service.models import RunResponse


def reference_config_path(name: str):
    return resources.files("deltasoliton.reference").joinpath(name)


def _post_run(server: str | None, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post("/v1/run", json=payload)

    async def call():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            base_url="http://delta-soliton.local", transport=transport, timeout=None
        ) as client:
            return await client.post("/v1/run", json=payload)

    import asyncio

    return asyncio.run(call())


def _run_mode(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"error: JSON syntax error at line {exc.lineno}, column {exc.colno}: "
              f"{exc.msg}", file=sys.stderr)
        return 1
    if not isinstance(raw, dict):
        print("error: config must be a JSON object", file=sys.stderr)
        return 1
    raw["mode"] = args.mode
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.output_dir is not None:
        raw["output_dir"] = str(args.output_dir)
    # validate locally so error messages do not require a round trip
    try:
        cfg = parse_config(json.dumps(raw))
    except ConfigError as exc:
        print("error: invalid config:", file=sys.stderr)
        for msg in exc.messages:
            print(f"  - {msg}", file=sys.stderr)
        return 1

    out_dir = Path(cfg.output_dir) if cfg.output_dir else Path(f"run-{args.mode}")
    try:
        resp = _post_run(args.server, json.loads(cfg.model_dump_json()))
    except httpx.HTTPError as exc:
        print(f"error: service request failed: {exc}", file=sys.stderr)
        return 1
    if resp.status_code != 200:
        print(f"error: service returned {resp.status_code}: {resp.text}",
              file=sys.stderr)
        return 1
    result = RunResponse.model_validate(resp.json())

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(cfg.model_dump_json(indent=2) + "\n",
                                         encoding="utf-8")
    for name, payload in result.artifacts.items():
        (out_dir / name).write_bytes(payload.to_bytes())
    print(f"mode: {result.mode}")
    for key, val in result.summary.items():
        print(f"  {key}: {val}")
    print(f"artifacts: {', '.join(sorted(result.artifacts))} -> {out_dir}/")
    print(f"result: {'PASS' if result.passed else 'FAIL'}")
    return result.exit_code


def _serve(args) -> int:
    import uvicorn

    uvicorn.run("deltasoliton.service.app:app", host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="delta-soliton",
        description="Multi-soliton construction and verification for delta-NLS.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        sp = sub.add_parser(mode, help=f"run the {mode} pipeline")
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--output-dir", default=None, help="artifact directory")
        sp.add_argument("--seed", type=int, default=None, help="RNG seed override")
        sp.add_argument("--server", default=None,
                        help="base URL of a running service (default: in-process)")
        sp.set_defaults(func=_run_mode, mode=mode)
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.set_defaults(func=_serve)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
