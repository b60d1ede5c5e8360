"""Command-line client for the service: biased splits, training runs,
tail fits, and the gradient self-check.

By default requests are served by an in-process application instance;
--server points the same commands at a remote deployment.  Every
successful invocation materializes one run directory holding a config
echo (written before any work starts) and exactly one result document,
both in a canonical JSON layout that re-serializes byte-identically.
"""

from __future__ import annotations

import argparse
import asyncio
import hashlib
import json
import os
import sys
import time

import httpx

from .data import dump_json
from .pipeline import DATA_ROOT_VAR

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

IN_PROCESS_POLL_SEC = 0.02
REMOTE_POLL_SEC = 0.5


class CliError(Exception):
    """Configuration-level failure; maps to exit code 1."""


class RuntimeFailure(Exception):
    """Runtime failure reported by the service; maps to exit code 2."""


class Parser(argparse.ArgumentParser):
    """Raises instead of exiting so the caller owns the exit code;
    argparse's own messages already name the offending flag."""

    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# flag surface


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--out", help="run directory (default: runs/<command>-<request hash>)")
    sub.add_argument("--config", help="JSON file with request fields; explicit flags win")
    sub.add_argument("--server", help="service base URL (default: in-process)")


def _add_split_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--dataset-dir",
        dest="dataset_dir",
        help=f"dataset directory, or a bare name resolved under ${DATA_ROOT_VAR}",
    )
    sub.add_argument("--bias", choices=["nodes", "edges", "density"])
    sub.add_argument("--cmp", choices=["lt", "gt"])
    sub.add_argument("--threshold", type=float)
    sub.add_argument(
        "--qualify-count",
        dest="qualify_count",
        type=int,
        help="derive the threshold so close to this many graphs qualify",
    )
    sub.add_argument("--train-count", dest="train_count", type=int)
    sub.add_argument("--val-count", dest="val_count", type=int)
    sub.add_argument("--seed", type=int)


def _add_train_flags(sub: argparse.ArgumentParser) -> None:
    _add_split_flags(sub)
    sub.add_argument("--method", choices=["erm", "oodgmixup"])
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--batch", type=int)
    sub.add_argument("--hidden", type=int)
    sub.add_argument("--layers", type=int)
    sub.add_argument("--embed-dim", dest="embed_dim", type=int)
    sub.add_argument("--alpha", type=float)
    sub.add_argument("--beta", type=float)
    sub.add_argument("--tail", type=int)
    sub.add_argument("--patience", type=int)


SPLIT_FIELDS = (
    "dataset_dir",
    "bias",
    "cmp",
    "threshold",
    "qualify_count",
    "train_count",
    "val_count",
    "seed",
)
TRAIN_FIELDS = SPLIT_FIELDS + (
    "method",
    "epochs",
    "lr",
    "batch",
    "hidden",
    "layers",
    "embed_dim",
    "alpha",
    "beta",
    "tail",
    "patience",
)
EVT_FIELDS = ("input", "tail")
GRADCHECK_FIELDS = ("probes", "h", "seed", "tolerance")

SPLIT_DEFAULTS = {"bias": "nodes", "cmp": "lt", "seed": 0}
TRAIN_DEFAULTS = {
    **SPLIT_DEFAULTS,
    "method": "oodgmixup",
    "epochs": 200,
    "lr": 0.001,
    "batch": 32,
    "hidden": 64,
    "layers": 2,
    "embed_dim": 64,
    "alpha": 2.0,
    "beta": 2.0,
    "tail": 20,
    "patience": 20,
}
EVT_DEFAULTS = {"tail": 20}
GRADCHECK_DEFAULTS = {"probes": 30, "h": 1e-5, "seed": 0, "tolerance": 1e-4}


def build_parser() -> Parser:
    parser = Parser(prog="gmixlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    sp = sub.add_parser("split-stats", help="build a biased split and print its statistics")
    _add_split_flags(sp)
    _add_common_flags(sp)

    tp = sub.add_parser("train", help="run one training job and write its report")
    _add_train_flags(tp)
    _add_common_flags(tp)

    ep = sub.add_parser("evt-fit", help="fit a Weibull tail model to values from a file")
    ep.add_argument("--input", help="file with one real number per line")
    ep.add_argument("--tail", type=int)
    _add_common_flags(ep)

    gp = sub.add_parser("gradcheck", help="finite-difference gradient self-check")
    gp.add_argument("--probes", type=int)
    gp.add_argument("--h", type=float)
    gp.add_argument("--seed", type=int)
    gp.add_argument("--tolerance", type=float)
    _add_common_flags(gp)

    return parser


# ---------------------------------------------------------------------------
# request assembly


def _flag_name(field: str) -> str:
    return "--" + field.replace("_", "-")


def _load_config_file(path: str, allowed: tuple[str, ...]) -> dict:
    if not os.path.isfile(path):
        raise CliError(f"--config: no such file {path!r}")
    try:
        with open(path, encoding="utf-8") as fh:
            loaded = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"--config: invalid JSON in {path!r}: {exc}") from exc
    if not isinstance(loaded, dict):
        raise CliError(f"--config: {path!r} must hold a JSON object")
    unknown = sorted(set(loaded) - set(allowed))
    if unknown:
        raise CliError(f"--config: unknown keys {unknown} in {path!r}")
    return loaded


def merge_request(
    args: argparse.Namespace,
    fields: tuple[str, ...],
    defaults: dict,
) -> dict:
    """Resolve each request field: explicit flag, then --config, then default."""
    file_values = _load_config_file(args.config, fields) if args.config else {}
    resolved = {}
    for field in fields:
        flag_value = getattr(args, field, None)
        if flag_value is not None:
            resolved[field] = flag_value
        elif field in file_values:
            resolved[field] = file_values[field]
        else:
            resolved[field] = defaults.get(field)
    return resolved


def require(request: dict, fields: tuple[str, ...]) -> None:
    for field in fields:
        if request.get(field) is None:
            raise CliError(f"missing required flag {_flag_name(field)}")


def require_selector(request: dict) -> None:
    if (request.get("threshold") is None) == (request.get("qualify_count") is None):
        raise CliError("provide exactly one of --threshold / --qualify-count")


# ---------------------------------------------------------------------------
# service client


def _payload_of(response: httpx.Response):
    try:
        return response.json()
    except ValueError:
        return {"detail": response.text}


class ServiceClient:
    """HTTP client: in-process application by default, remote via --server."""

    def __init__(self, server: str | None):
        self._server = server.rstrip("/") if server else None
        self._app = None
        if self._server is None:
            from .service import create_app

            self._app = create_app()

    @property
    def poll_interval(self) -> float:
        return IN_PROCESS_POLL_SEC if self._server is None else REMOTE_POLL_SEC

    def request(self, method: str, path: str, body: dict | None = None):
        if self._server is None:
            return asyncio.run(self._request_in_process(method, path, body))
        try:
            with httpx.Client(base_url=self._server, timeout=httpx.Timeout(None)) as client:
                response = client.request(method, path, json=body)
        except httpx.HTTPError as exc:
            raise CliError(f"--server: cannot reach {self._server!r}: {exc}") from exc
        return response.status_code, _payload_of(response)

    async def _request_in_process(self, method: str, path: str, body: dict | None):
        transport = httpx.ASGITransport(app=self._app)
        async with httpx.AsyncClient(transport=transport, base_url="http://service") as client:
            response = await client.request(method, path, json=body)
        return response.status_code, _payload_of(response)


def _stringify_detail(detail) -> str:
    if isinstance(detail, str):
        return detail
    if isinstance(detail, list):  # pydantic validation errors
        parts = []
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []) if p != "body")
            msg = item.get("msg", "invalid value")
            parts.append(f"{loc}: {msg}" if loc else msg)
        return "; ".join(parts)
    return str(detail)


def check_response(status: int, payload) -> dict:
    """Map HTTP errors onto exit-code exceptions; pass 2xx through."""
    if status < 400:
        return payload
    detail = payload.get("detail") if isinstance(payload, dict) else payload
    message = _stringify_detail(detail)
    if status in (400, 404, 409, 422):
        raise CliError(message)
    raise RuntimeFailure(message)


# ---------------------------------------------------------------------------
# run directories


def default_out_dir(command: str, request: dict) -> str:
    digest = hashlib.sha256(dump_json({"command": command, **request}).encode()).hexdigest()
    return os.path.join("runs", f"{command}-{digest[:12]}")


def write_doc(out_dir: str, name: str, document: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(document))
    return path


def write_echo(out_dir: str, command: str, request: dict, server: str | None) -> str:
    return write_doc(
        out_dir,
        "config.json",
        {"command": command, "request": request, "server": server or "in-process"},
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_split_stats(args: argparse.Namespace) -> int:
    request = merge_request(args, SPLIT_FIELDS, SPLIT_DEFAULTS)
    require(request, ("dataset_dir", "train_count", "val_count"))
    require_selector(request)

    out_dir = args.out or default_out_dir("split-stats", request)
    write_echo(out_dir, "split-stats", request, args.server)

    client = ServiceClient(args.server)
    status, payload = client.request("POST", "/split-stats", request)
    manifest = check_response(status, payload)["manifest"]
    path = write_doc(out_dir, "manifest.json", manifest)

    print(f"{'partition':<10} {'count':>6} {'avg_nodes':>10} {'avg_edges':>10} {'avg_density':>12}")
    for part in ("train", "val", "test"):
        stats = manifest["stats"][part]
        print(
            f"{part:<10} {stats['count']:>6} {stats['avg_nodes']:>10.4f}"
            f" {stats['avg_edges']:>10.4f} {stats['avg_density']:>12.4f}"
        )
    if "derived_threshold" in manifest:
        derived = manifest["derived_threshold"]
        print(
            f"derived threshold {manifest['threshold']} qualifies"
            f" {derived['achieved_count']} graphs (target {derived['target_count']})"
        )
    print(f"manifest: {path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    request = merge_request(args, TRAIN_FIELDS, TRAIN_DEFAULTS)
    require(request, ("dataset_dir", "train_count", "val_count"))
    require_selector(request)

    out_dir = args.out or default_out_dir("train", request)
    write_echo(out_dir, "train", request, args.server)

    client = ServiceClient(args.server)
    status, payload = client.request("POST", "/train", request)
    job_id = check_response(status, payload)["job_id"]

    while True:
        status, payload = client.request("GET", f"/jobs/{job_id}")
        state = check_response(status, payload)
        if state["status"] in ("done", "failed"):
            break
        time.sleep(client.poll_interval)

    status, payload = client.request("GET", f"/jobs/{job_id}/report")
    outcome = check_response(status, payload)
    report = outcome.get("report")

    if outcome["status"] == "failed":
        if report is not None:
            diagnostic = write_doc(out_dir, "report.json", report)
            print(f"diagnostic report: {diagnostic}", file=sys.stderr)
        print(f"error: training failed: {outcome.get('error')}", file=sys.stderr)
        return EXIT_CONFIG if outcome.get("error_kind") == "config" else EXIT_RUNTIME

    path = write_doc(out_dir, "report.json", report)
    print(
        f"method={request['method']} best_epoch={report['best_epoch']}"
        f" val_accuracy={report['best_val_accuracy']:.4f}"
        f" test_accuracy={report['test_accuracy']:.4f}"
    )
    print(f"report: {path}")
    return EXIT_OK


def read_values(path: str) -> list[float]:
    if not os.path.isfile(path):
        raise CliError(f"--input: no such file {path!r}")
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise CliError(f"--input: {path}:{lineno}: not a number: {text!r}") from None
    if not values:
        raise CliError(f"--input: {path} holds no values")
    return values


def cmd_evt_fit(args: argparse.Namespace) -> int:
    request = merge_request(args, EVT_FIELDS, EVT_DEFAULTS)
    require(request, ("input",))
    values = read_values(request["input"])

    echo = {"input": request["input"], "tail": request["tail"], "values_count": len(values)}
    out_dir = args.out or default_out_dir("evt-fit", echo)
    write_echo(out_dir, "evt-fit", echo, args.server)

    client = ServiceClient(args.server)
    status, payload = client.request(
        "POST", "/evt-fit", {"values": values, "tail": request["tail"]}
    )
    fit = check_response(status, payload)
    path = write_doc(out_dir, "fit.json", fit)

    print(
        f"valid={fit['valid']} mu={fit['mu']:.6g} sigma={fit['sigma']:.6g}"
        f" xi={fit['xi']:.6g} tail_size={fit['tail_size']}"
    )
    print(f"fit: {path}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    request = merge_request(args, GRADCHECK_FIELDS, GRADCHECK_DEFAULTS)

    out_dir = args.out or default_out_dir("gradcheck", request)
    write_echo(out_dir, "gradcheck", request, args.server)

    client = ServiceClient(args.server)
    status, payload = client.request("POST", "/gradcheck", request)
    report = check_response(status, payload)["report"]
    path = write_doc(out_dir, "report.json", report)

    verdict = "PASS" if report["passed"] else "FAIL"
    print(
        f"max_error={report['max_error']:.3e} tolerance={report['tolerance']:.0e} {verdict}"
    )
    print(f"report: {path}")
    return EXIT_OK if report["passed"] else EXIT_RUNTIME


HANDLERS = {
    "split-stats": cmd_split_stats,
    "train": cmd_train,
    "evt-fit": cmd_evt_fit,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("error: missing subcommand", file=sys.stderr)
            return EXIT_CONFIG
        return HANDLERS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
