"""Command-line front end.

Runs the service handlers in-process by default; with ``--server URL`` the
same payloads are POSTed to a running instance instead.  Reports go to
stdout as a short text summary and, with ``--out``, to disk as JSON.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import __version__

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EXCLUDED = 2

_NEGATIVE_VERDICTS = {"ExcludedAtLevel2", "Unfaithful"}


def _add_common(sp, levels=True):
    sp.add_argument("--tol", type=float, default=None,
                    help="solver feasibility/gap tolerance")
    sp.add_argument("--out", default=None, help="write the JSON report here")
    sp.add_argument("--server", default=None,
                    help="POST to a running service instead of in-process")
    sp.add_argument("--seed", type=int, default=0)
    if levels:
        sp.add_argument("--levels", default="1,2",
                        help="comma list: 1, 2, or party counts >= 2")
        sp.add_argument("--ppt", choices=("on", "off"), default="on")
        sp.add_argument("--field", choices=("real", "complex", "both"),
                        default=None)


def _add_graph(sp):
    sp.add_argument("--graph6", default=None)
    sp.add_argument("--edges", default=None,
                    help="JSON file with n_vertices and an edge list")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rankhier",
        description="Certified bounds for rank-constrained semidefinite "
                    "programs.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("maxcut", help="Max-Cut upper bounds plus brute force")
    _add_graph(sp)
    sp.add_argument("--no-brute", action="store_true")
    _add_common(sp)

    sp = sub.add_parser("boolean", help="pseudo-Boolean / least-squares bounds")
    sp.add_argument("--problem", required=True,
                    help="JSON file: {q, c, sense} or {a, b} for "
                         "least squares")
    _add_common(sp)

    sp = sub.add_parser("theta", help="Lovasz theta number")
    _add_graph(sp)
    _add_common(sp, levels=False)

    sp = sub.add_parser("orthrep", help="orthonormal representation check")
    _add_graph(sp)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--contextuality", action="store_true",
                    help="orthogonality on edges of the input graph "
                         "(complement convention)")
    sp.add_argument("--field", choices=("real", "complex", "both"),
                    default="both")
    _add_common(sp, levels=False)

    sp = sub.add_parser("unfaithful", help="fidelity-witness detectability")
    sp.add_argument("--state", default=None,
                    help="JSON file with re (and optionally im) entries")
    sp.add_argument("--reference", action="store_true",
                    help="use the built-in 4x4 regression state")
    sp.add_argument("--starts", type=int, default=32)
    _add_common(sp)

    sp = sub.add_parser("mixed-unitary", help="mixed-unitary channel check")
    sp.add_argument("--choi", required=True,
                    help="JSON file with re (and optionally im) entries")
    _add_common(sp, levels=False)

    sp = sub.add_parser("purestate", help="pure-state optimization bound")
    sp.add_argument("--problem", required=True,
                    help="JSON file: {x, measurements, field}")
    _add_common(sp)

    sp = sub.add_parser("solve", help="solve a serialized conic program")
    sp.add_argument("--problem", required=True)
    _add_common(sp, levels=False)

    sp = sub.add_parser("sweep-k", help="bound as a function of the rank cap")
    sp.add_argument("--problem", required=True,
                    help="serialized rank-constrained problem")
    sp.add_argument("--ks", required=True, help="comma list of rank caps")
    _add_common(sp, levels=False)

    sp = sub.add_parser("bench", help="batch runner with JSON-lines cache")
    sp.add_argument("--problems", required=True,
                    help="JSON-lines file: {subcommand, request} per line")
    sp.add_argument("--jobs", type=int, default=os.cpu_count())
    sp.add_argument("--out", default="bench_results.jsonl")
    sp.add_argument("--server", default=None)
    return ap


def _load_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _run_request(subcommand: str, request: dict, server: str | None) -> dict:
    if server:
        import httpx
        r = httpx.post(server.rstrip("/") + "/" + subcommand,
                       json=request, timeout=3600.0)
        r.raise_for_status()
        return r.json()
    from . import service
    table = {
        "maxcut": (service.MaxcutRequest, service.maxcut_handler),
        "boolean": (service.BooleanRequest, service.boolean_handler),
        "theta": (service.ThetaRequest, service.theta_handler),
        "orthrep": (service.OrthrepRequest, service.orthrep_handler),
        "unfaithful": (service.UnfaithfulRequest, service.unfaithful_handler),
        "mixed-unitary": (service.MixedUnitaryRequest,
                          service.mixed_unitary_handler),
        "purestate": (service.PureStateRequest, service.purestate_handler),
        "solve": (service.SolveRequest, service.solve_handler),
        "sweep-k": (service.SweepRequest, service.sweep_handler),
    }
    model, handler = table[subcommand]
    return handler(model.model_validate(request))


def _graph_payload(args) -> dict:
    if args.graph6 is not None:
        return {"graph6": args.graph6}
    if args.edges is not None:
        d = _load_json(args.edges)
        return {"n_vertices": d["n_vertices"], "edges": d["edges"]}
    raise SystemExit("provide --graph6 or --edges")


def _run_payload(args) -> dict:
    return {"levels": args.levels.split(","), "ppt": args.ppt == "on",
            "tol": args.tol,
            "field": None if args.field in (None, "both") else args.field}


def _build_request(args) -> dict:
    sc = args.subcommand
    if sc == "maxcut":
        return {"graph": _graph_payload(args), "run": _run_payload(args),
                "brute": not args.no_brute}
    if sc == "boolean":
        d = _load_json(args.problem)
        req = {"run": _run_payload(args)}
        if "a" in d:
            req.update(q=[[0.0]], c=[0.0], least_squares=True,
                       a=d["a"], b=d["b"])
        else:
            req.update(q=d["q"], c=d["c"], sense=d.get("sense", "max"))
        return req
    if sc == "theta":
        return {"graph": _graph_payload(args)}
    if sc == "orthrep":
        return {"graph": _graph_payload(args), "k": args.k,
                "field": args.field, "contextuality": args.contextuality}
    if sc == "unfaithful":
        req = {"run": _run_payload(args), "sample_starts": args.starts,
               "seed": args.seed}
        if args.reference:
            req["reference"] = True
        elif args.state:
            req["rho"] = _load_json(args.state)
        else:
            raise SystemExit("provide --state or --reference")
        return req
    if sc == "mixed-unitary":
        return {"choi": _load_json(args.choi)}
    if sc == "purestate":
        d = _load_json(args.problem)
        return {"x": d["x"], "measurements": d.get("measurements", []),
                "field": d.get("field", "complex"),
                "run": _run_payload(args), "seed": args.seed}
    if sc == "solve":
        return {"program": _load_json(args.problem), "tol": args.tol}
    if sc == "sweep-k":
        return {"problem": _load_json(args.problem),
                "ks": [float(k) for k in args.ks.split(",")],
                "tol": args.tol}
    raise SystemExit(f"unhandled subcommand {sc}")


def _collect_verdicts(node, out: list):
    if isinstance(node, dict):
        for key, val in node.items():
            if key == "verdict" and isinstance(val, str):
                out.append(val)
            else:
                _collect_verdicts(val, out)
    elif isinstance(node, list):
        for val in node:
            _collect_verdicts(val, out)
    elif isinstance(node, str) and node in _NEGATIVE_VERDICTS:
        out.append(node)


def _summarize(report: dict) -> str:
    lines = []
    inst = report.get("instance")
    if inst:
        lines.append(f"instance: {inst}")
    for name, entry in (report.get("levels") or {}).items():
        if not isinstance(entry, dict):
            continue
        val = entry.get("value", entry.get("xi2t"))
        cert = entry.get("certified")
        bits = [f"level {name}: value={val:.6g}" if val is not None
                else f"level {name}:"]
        if isinstance(cert, float):
            bits.append(f"certified={cert:.6g}")
        if entry.get("verdict"):
            bits.append(f"verdict={entry['verdict']}")
        if entry.get("status"):
            bits.append(f"status={entry['status']}")
        lines.append("  " + " ".join(bits))
    for name, val in (report.get("oracles") or {}).items():
        lines.append(f"  oracle {name}: {val}")
    for name, val in (report.get("verdicts") or {}).items():
        if isinstance(val, dict):
            lines.append(f"  verdict[{name}]: {val.get('verdict')} "
                         f"(margin {val.get('margin'):.3g})")
        else:
            lines.append(f"  verdict[{name}]: {val}")
    if "values" in report:
        for k, v in report["values"]:
            lines.append(f"  k={k:g}: {v:.8g}")
    if "status" in report and "levels" not in report:
        lines.append(f"status: {report['status']} "
                     f"value={report.get('primal_value')}")
    return "\n".join(lines) or json.dumps(report)[:400]


def _instance_hash(subcommand: str, request: dict) -> str:
    blob = json.dumps({"subcommand": subcommand, "request": request},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _bench(args) -> int:
    with open(args.problems) as fh:
        jobs = [json.loads(line) for line in fh if line.strip()]
    done = set()
    if os.path.exists(args.out):
        with open(args.out) as fh:
            for line in fh:
                try:
                    done.add(json.loads(line)["instance_hash"])
                except (ValueError, KeyError):
                    pass
    todo = []
    for job in jobs:
        h = _instance_hash(job["subcommand"], job["request"])
        if h not in done:
            todo.append((h, job))
    print(f"bench: {len(jobs)} instances, {len(jobs) - len(todo)} cached, "
          f"{len(todo)} to run")
    if not todo:
        return EXIT_OK
    from concurrent.futures import ProcessPoolExecutor, as_completed
    n_jobs = max(1, args.jobs or 1)
    failures = 0
    with open(args.out, "a") as sink:
        if n_jobs == 1 or args.server:
            results = ((h, _bench_one(job, args.server)) for h, job in todo)
            for h, res in results:
                failures += _bench_write(sink, h, res)
        else:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                futs = {pool.submit(_bench_one, job, None): h
                        for h, job in todo}
                for fut in as_completed(futs):
                    failures += _bench_write(sink, futs[fut], fut.result())
    print(f"bench: done, {failures} failures")
    return EXIT_ERROR if failures else EXIT_OK


def _bench_one(job: dict, server: str | None) -> dict:
    try:
        return {"ok": True,
                "report": _run_request(job["subcommand"], job["request"],
                                       server)}
    except Exception as exc:  # worker boundary: report, don't crash the pool
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _bench_write(sink, h: str, res: dict) -> int:
    rec = {"instance_hash": h, **res}
    sink.write(json.dumps(rec) + "\n")
    sink.flush()
    return 0 if res["ok"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.subcommand == "bench":
        return _bench(args)
    try:
        request = _build_request(args)
        report = _run_request(args.subcommand, request, args.server)
    except SystemExit as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(_summarize(report))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
        print(f"report written to {args.out}")
    verdicts: list = []
    _collect_verdicts(report, verdicts)
    if any(v in _NEGATIVE_VERDICTS for v in verdicts):
        return EXIT_EXCLUDED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
