"""Command line front end.

The CLI never runs the engine itself: every subcommand builds a request,
sends it to the HTTP service and formats the response. By default the
service runs in-process; --server points the same client at a remote
instance. Exit codes: 0 success, 2 bad flags or inputs, 3 evaluator or
transport failure.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from typing import Optional

import httpx

from . import __version__
from .errors import MbnasError
from .fileio import align_columns, atomic_write_json, dump_json, load_json, parse_columns

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EVALUATOR = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


class Client:
    """Uniform .post/.get wrapper over in-process and remote transports."""

    def __init__(self, server: Optional[str]):
        if server:
            self._client = httpx.Client(base_url=server.rstrip("/"), timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                # the vendored test client import warns about its own httpx pin
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app)

    def request(self, method: str, path: str, payload: Optional[dict] = None) -> dict:
        try:
            if method == "GET":
                response = self._client.get(path, params=payload or {})
            else:
                response = self._client.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            raise CliError(f"service unreachable: {exc}", EXIT_EVALUATOR)
        if response.status_code == 200:
            return response.json()
        raise CliError(
            _describe_failure(response),
            EXIT_EVALUATOR if response.status_code == 502 else EXIT_USAGE,
        )

    def get(self, path: str, params: Optional[dict] = None) -> dict:
        return self.request("GET", path, params)

    def post(self, path: str, payload: dict) -> dict:
        return self.request("POST", path, payload)


def _describe_failure(response) -> str:
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, dict):
        lines = [f"{detail.get('error', 'error')}: {detail.get('message', '')}"]
        for v in detail.get("violations", []):
            lines.append(f"  - {v['kind']} at {v['location']}: {v['message']}")
        return "\n".join(lines)
    if detail is not None:
        return f"HTTP {response.status_code}: {json.dumps(detail)}"
    return f"HTTP {response.status_code}: {response.text[:200]}"


def _read_json_file(path: str, what: str) -> dict:
    try:
        return load_json(path)
    except OSError as exc:
        raise CliError(f"cannot read {what} file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} file {path} is not valid JSON: {exc}")


def _space_arg(args) -> dict:
    return _read_json_file(args.space, "space") if args.space else {}


def _profile_arg(args) -> Optional[dict]:
    return _read_json_file(args.profile, "profile") if args.profile else None


def _input_size(text: str) -> list[int]:
    try:
        h, w = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}")
    return [h, w]


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    generated = random.randrange(2**31)
    print(f"seed: {generated}", file=sys.stderr)
    return generated


def _evaluator_spec(args) -> dict:
    spec: dict = {"type": "proxy"}
    if getattr(args, "evaluator", None):
        spec = {
            "type": "external",
            "command": args.evaluator,
            "workers": args.workers,
            "timeout_s": args.eval_timeout,
            "calibrate": bool(getattr(args, "calibrate", False)),
        }
    elif getattr(args, "epsilon", 0.0):
        spec["constants"] = {"epsilon": args.epsilon}
    return spec


def _emit(args, doc: dict, summary: str) -> None:
    if getattr(args, "out", None):
        atomic_write_json(args.out, doc)
        print(summary)
    elif getattr(args, "json", False):
        sys.stdout.write(dump_json(doc))
    else:
        print(summary)


def _table(rows: list[list[str]], headers: list[str]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def fmt(cells):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def _front_summary(export: dict) -> str:
    by_id = {c["id"]: c for c in export["candidates"]}
    axis = export["objectives"]["minimize"]
    rows = []
    for cid in export["front"]:
        obj = by_id[cid]["objectives"]
        rows.append(
            [
                str(cid),
                f"{obj['score']:.2f}",
                f"{obj[axis]:.3f}",
                f"{obj['flops_g']:.3f}",
                f"{obj['params_m']:.3f}",
            ]
        )
    stats = export["stats"]
    table = _table(rows, ["id", "score", axis, "flops_g", "params_m"])
    return (
        f"front {len(export['front'])} of {stats['archive_size']} archived "
        f"({stats['evaluations']} evaluations)\n{table}"
    )


def _add_common(parser, with_profile: bool = True):
    parser.add_argument("--space", help="search space config JSON")
    if with_profile:
        parser.add_argument("--profile", help="hardware profile JSON")
    parser.add_argument("--server", help="remote service URL (default: in-process)")
    parser.add_argument("--json", action="store_true", help="print full JSON to stdout")


def _add_evaluator_flags(parser):
    parser.add_argument("--evaluator", help="external evaluator command")
    parser.add_argument("--workers", type=int, default=1, help="external worker processes")
    parser.add_argument("--eval-timeout", type=float, default=300.0, metavar="S")
    parser.add_argument("--calibrate", action="store_true", help="ask workers to calibrate")
    parser.add_argument(
        "--epsilon", type=float, default=0.0, help="proxy score noise amplitude"
    )


def _search_payload(args, seed: int, branch_count: Optional[int]) -> dict:
    params = {
        "population_size": args.pop,
        "generations": args.gens,
        "crossover_prob": args.crossover_prob,
        "minimize": args.minimize,
        "seed": seed,
        "top_k": args.top_k,
        "branch_count": branch_count,
    }
    if args.mutation_rate is not None:
        params["mutation_rate"] = args.mutation_rate
    if args.latency_cap is not None:
        params["latency_cap_ms"] = args.latency_cap
    if args.score_min is not None:
        params["score_min"] = args.score_min
    return {
        "space": _space_arg(args),
        "profile": _profile_arg(args),
        "params": params,
        "evaluator": _evaluator_spec(args),
        "input_size": args.input,
    }


def cmd_search(args) -> int:
    client = Client(args.server)
    if args.replay:
        manifest = _read_json_file(args.replay, "manifest")
        if manifest.get("schema") != "run-manifest/1" or manifest.get("kind") not in (
            "search",
            "search-set",
        ):
            raise CliError(f"{args.replay} is not a search manifest")
        requests = manifest["requests"]
    else:
        seed = _resolve_seed(args.seed)
        if args.branches == "all":
            requests = [
                _search_payload(args, seed * 4 + bc, bc) for bc in (1, 2, 3)
            ]
        else:
            branch = None if args.branches == "mixed" else int(args.branches)
            requests = [_search_payload(args, seed, branch)]

    exports = [client.post("/api/search", payload) for payload in requests]
    if len(exports) == 1:
        doc = exports[0]
        summary = _front_summary(doc)
    else:
        doc = {
            "schema": "front-export-set/1",
            "engine_version": __version__,
            "runs": [
                {"branch_count": req["params"]["branch_count"], "export": export}
                for req, export in zip(requests, exports)
            ],
        }
        summary = "\n\n".join(
            f"branches={run['branch_count']}\n{_front_summary(run['export'])}"
            for run in doc["runs"]
        )
    _emit(args, doc, summary)
    if args.manifest:
        atomic_write_json(
            args.manifest,
            {
                "schema": "run-manifest/1",
                "engine_version": __version__,
                "kind": "search" if len(requests) == 1 else "search-set",
                "requests": requests,
            },
        )
    return EXIT_OK


def cmd_cost(args) -> int:
    client = Client(args.server)
    payload = {
        "space": _space_arg(args),
        "profile": _profile_arg(args),
        "genome": _read_json_file(args.genome, "genome"),
        "input_size": args.input,
    }
    doc = client.post("/api/cost", payload)
    memory = doc["memory"]
    budget = "none" if memory["budget_mb"] is None else f"{memory['budget_mb']:.1f} MB"
    summary = "\n".join(
        [
            f"flops      {doc['flops']:>16d}  ({doc['flops_g']:.3f} G)",
            f"params     {doc['params']:>16d}  ({doc['params_m']:.3f} M)",
            f"latency    {doc['latency_ms']:>16.3f}  ms",
            f"peak act   {doc['peak_act_mem']:>16d}  elements",
            f"memory     {'ok' if memory['passed'] else 'OVER BUDGET':>16s}  "
            f"({memory['required_mb']:.1f} MB required, budget {budget})",
        ]
    )
    _emit(args, doc, summary)
    return EXIT_OK


def cmd_table1(args) -> int:
    client = Client(args.server)
    doc = client.get("/api/table1", {"attention_bottleneck": args.bottleneck})
    rows = [
        [
            row["operation"],
            str(row["flops"]),
            str(row["params"]),
            f"{row['flops_g']:.2f}",
            f"{row['params_m']:.2f}",
            row["scaling"],
        ]
        for row in doc["rows"]
    ]
    summary = _table(rows, ["operator", "flops", "params", "gflops", "mparams", "scaling"])
    _emit(args, doc, summary)
    return EXIT_OK


def cmd_sample(args) -> int:
    client = Client(args.server)
    payload = {
        "space": _space_arg(args),
        "n": args.n,
        "seed": _resolve_seed(args.seed),
        "branch_count": args.branch,
        "with_cost": args.with_cost,
        "profile": _profile_arg(args),
        "input_size": args.input,
    }
    doc = client.post("/api/space/sample", payload)
    summary = f"sampled {len(doc['genomes'])} genomes (seed {doc['seed']})"
    _emit(args, doc, summary)
    return EXIT_OK


def cmd_validate(args) -> int:
    client = Client(args.server)
    payload = {"space": _space_arg(args), "genome": _read_json_file(args.genome, "genome")}
    doc = client.post("/api/space/validate", payload)
    if doc["valid"]:
        summary = "valid"
    else:
        lines = [f"invalid ({len(doc['violations'])} violations)"]
        lines.extend(
            f"  - {v['kind']} at {v['location']}: {v['message']}" for v in doc["violations"]
        )
        summary = "\n".join(lines)
    _emit(args, doc, summary)
    return EXIT_OK


def cmd_baseline(args) -> int:
    client = Client(args.server)
    seed = _resolve_seed(args.seed)
    common = {
        "space": _space_arg(args),
        "profile": _profile_arg(args),
        "seed": seed,
        "minimize": args.minimize,
        "branch_count": args.branch,
        "evaluator": _evaluator_spec(args),
        "input_size": args.input,
    }
    if args.kind == "random":
        doc = client.post("/api/baseline/random", {**common, "n": args.n})
    else:
        doc = client.post(
            "/api/baseline/local",
            {
                **common,
                "seeds": args.seeds,
                "iterations": args.iterations,
                "neighbors_per_iter": args.neighbors,
            },
        )
    stats = doc["stats"]
    summary = (
        f"{args.kind} baseline: front {len(doc['front'])} "
        f"of {stats['evaluations']} evaluations"
    )
    _emit(args, doc, summary)
    return EXIT_OK


def cmd_correlate(args) -> int:
    client = Client(args.server)
    try:
        with open(args.x, "r", encoding="utf-8") as handle:
            col_x = parse_columns(handle.read())
        with open(args.y, "r", encoding="utf-8") as handle:
            col_y = parse_columns(handle.read())
        x, y = align_columns(col_x, col_y)
    except OSError as exc:
        raise CliError(f"cannot read column file: {exc}")
    except (MbnasError, ValueError) as exc:
        raise CliError(str(exc))
    doc = client.post("/api/correlate", {"x": x, "y": y})
    summary = (
        f"n {doc['n']}  kendall_tau {doc['kendall_tau']:.4f}  "
        f"pearson_r {doc['pearson_r']:.4f}"
    )
    _emit(args, doc, summary)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mbnas",
        description="Multi-branch architecture search over analytic cost models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the multi-objective search")
    _add_common(p)
    _add_evaluator_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--pop", type=int, default=40, help="population size")
    p.add_argument("--gens", type=int, default=20, help="generations")
    p.add_argument("--crossover-prob", type=float, default=0.9)
    p.add_argument("--mutation-rate", type=float, help="default: 1/n_var")
    p.add_argument("--latency-cap", type=float, metavar="MS")
    p.add_argument("--score-min", type=float)
    p.add_argument(
        "--minimize",
        choices=["latency_ms", "flops_g", "params_m"],
        default="latency_ms",
    )
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument(
        "--branches",
        choices=["1", "2", "3", "all", "mixed"],
        default="mixed",
        help="pin branch count, sweep all three, or sample it (mixed)",
    )
    p.add_argument("--input", type=_input_size, default=[256, 512], metavar="HxW")
    p.add_argument("--out", help="write the front export JSON here")
    p.add_argument("--manifest", help="write a replayable run manifest here")
    p.add_argument("--replay", help="re-run the requests stored in a manifest")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("cost", help="analytic costs for one genome")
    _add_common(p)
    p.add_argument("--genome", required=True, help="genome JSON file")
    p.add_argument("--input", type=_input_size, default=[256, 512], metavar="HxW")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("table1", help="per-operator reference costs")
    _add_common(p, with_profile=False)
    p.add_argument("--bottleneck", type=int, default=48)
    p.add_argument("--out")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("sample", help="draw valid genomes from the space")
    _add_common(p)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--branch", type=int, choices=[1, 2, 3])
    p.add_argument("--with-cost", action="store_true")
    p.add_argument("--input", type=_input_size, default=[256, 512], metavar="HxW")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("validate", help="check a genome against the constraints")
    _add_common(p, with_profile=False)
    p.add_argument("--genome", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("baseline", help="comparison searches")
    baseline_sub = p.add_subparsers(dest="kind", required=True)
    for kind in ("random", "local"):
        q = baseline_sub.add_parser(kind)
        _add_common(q)
        _add_evaluator_flags(q)
        q.add_argument("--seed", type=int)
        q.add_argument(
            "--minimize",
            choices=["latency_ms", "flops_g", "params_m"],
            default="latency_ms",
        )
        q.add_argument("--branch", type=int, choices=[1, 2, 3])
        q.add_argument("--input", type=_input_size, default=[256, 512], metavar="HxW")
        q.add_argument("--out")
        if kind == "random":
            q.add_argument("--n", type=int, default=800)
        else:
            q.add_argument("--seeds", type=int, default=5)
            q.add_argument("--iterations", type=int, default=32)
            q.add_argument("--neighbors", type=int, default=5)
        q.set_defaults(func=cmd_baseline)

    p = sub.add_parser("correlate", help="rank agreement between two score columns")
    _add_common(p, with_profile=False)
    p.add_argument("--x", required=True, help="column file: id value per line")
    p.add_argument("--y", required=True, help="column file: id value per line")
    p.add_argument("--out")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
