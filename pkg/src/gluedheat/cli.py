"""Command-line client for the experiment service.

By default the CLI spins up the service in-process (no sockets); --server
points it at a remote instance instead.  All numeric report content comes
back as canonical text and is written verbatim, so re-running a config
reproduces report bodies byte for byte; timestamps live in run_meta.json
only.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time


def _set_thread_caps(n: int) -> None:
    # Effective only before numpy/scipy load their BLAS, hence set here,
    # ahead of the lazy service import.
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_raw(path: str):
    import yaml

    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise SystemExit2(f"cannot read config {path!r}: {e}")
    if path.endswith((".yaml", ".yml")):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise SystemExit2(f"{path}: invalid YAML: {e}")
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            try:
                data = yaml.safe_load(text)
            except yaml.YAMLError as e:
                raise SystemExit2(f"{path}: neither valid JSON nor YAML: {e}")
    if not isinstance(data, dict):
        raise SystemExit2(f"{path}: config root must be a mapping")
    return data


class SystemExit2(Exception):
    """Config-layer failure before the service is reached."""


def _verdict_lines(node, prefix="") -> list[str]:
    lines = []
    if isinstance(node, dict):
        for key in ("verdict", "mismatch", "both_positive", "consistent",
                    "flag", "asserted", "deviation", "occupation_tv",
                    "z_score"):
            if key in node and not isinstance(node[key], (dict, list)):
                lines.append(f"  {prefix}{key} = {node[key]}")
        for k, v in node.items():
            if isinstance(v, (dict, list)):
                lines.extend(_verdict_lines(v, f"{prefix}{k}."))
    elif isinstance(node, list):
        for i, v in enumerate(node):
            if isinstance(v, (dict, list)):
                lines.extend(_verdict_lines(v, f"{prefix}{i}."))
    return lines


def _run_in_process(payload):
    # ASGITransport only implements the async interface, so drive it with a
    # short-lived event loop instead of threading a server.
    import asyncio

    import httpx

    from .service import app

    async def _post():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://gluedheat.local", timeout=None
        ) as client:
            return await client.post("/run", json=payload)

    return asyncio.run(_post())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gluedheat",
        description="Run one configured experiment and write its reports.",
    )
    parser.add_argument("--config", required=True, help="JSON or YAML config file")
    parser.add_argument("--out", default=None,
                        help="output directory (default: config output_dir, else 'out')")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS worker threads")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service (default: in-process)")
    args = parser.parse_args(argv)

    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        _set_thread_caps(args.threads)

    started = datetime.datetime.now(datetime.timezone.utc)
    t0 = time.monotonic()

    try:
        data = _load_raw(args.config)
    except SystemExit2 as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    import httpx

    config_dir = os.path.dirname(os.path.abspath(args.config)) or "."
    payload = {"config": data, "config_dir": config_dir}
    if args.seed is not None:
        payload["seed"] = args.seed

    try:
        if args.server:
            with httpx.Client(base_url=args.server, timeout=None) as client:
                resp = client.post("/run", json=payload)
        else:
            resp = _run_in_process(payload)
    except httpx.HTTPError as e:
        print(f"error: cannot reach service: {e}", file=sys.stderr)
        return 4

    if resp.status_code == 422:
        print(f"error: malformed request: {resp.text}", file=sys.stderr)
        return 2
    if resp.status_code != 200:
        print(f"error: service returned HTTP {resp.status_code}: {resp.text}",
              file=sys.stderr)
        return 4

    body = resp.json()
    if body["status"] != "ok":
        err = body.get("error") or {}
        print(f"error [{err.get('kind', 'unknown')}]: {err.get('message', '')}",
              file=sys.stderr)
        return int(body["exit_code"])

    out_dir = args.out or data.get("output_dir") or "out"
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(body["report_json"])
    for name, content in body["files"].items():
        safe = os.path.basename(name)
        with open(os.path.join(out_dir, safe), "w", encoding="utf-8") as fh:
            fh.write(content)

    finished = datetime.datetime.now(datetime.timezone.utc)
    meta = {
        "started": started.isoformat(),
        "finished": finished.isoformat(),
        "duration_s": round(time.monotonic() - t0, 3),
        "server": args.server or "in-process",
        "threads": args.threads,
        "seed_override": args.seed,
        "config_path": os.path.abspath(args.config),
    }
    with open(os.path.join(out_dir, "run_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")

    report = body["report"]
    print(f"task {report['task']}: ok")
    print(f"  config_hash = {report['config_hash']}")
    for line in _verdict_lines(report.get("results", {})):
        print(line)
    print(f"  wrote {out_dir}/report.json"
          + (f" and {len(body['files'])} table(s)" if body["files"] else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
