"""Command-line entry point: ``rpg-fuzz run | replay | graph | serve-fixture``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import RpgFuzzError
from .orchestrator import ABLATIONS, RunConfig, parse_duration, parse_header, run
from .report import load_replay, replay, write_atomic
from .rpg import build_initial_rpg
from .seqgen import generate_call_sequences
from .spec_model import load_spec

EXIT_OK, EXIT_ERROR, EXIT_BUGS = 0, 1, 2


def _headers(values) -> dict:
    return dict(parse_header(v) for v in values or ())


def _target(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--base-url", help="root URL of the service under test")
    group.add_argument("--fixture", action="store_true", help="use the in-process Petstore fixture")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rpg-fuzz", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="fuzz a service until the budget runs out")
    p.add_argument("--spec", help="OpenAPI document (YAML or JSON); defaults to the fixture's own with --fixture")
    _target(p)
    p.add_argument("--budget", default="8h", help="wall-clock budget, e.g. 60s, 10m, 8h (default 8h)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", type=int, default=5, help="consecutive bound-input failures before an edge is dropped")
    p.add_argument("--p-reuse", type=float, default=0.8)
    p.add_argument("--p-spec", type=float, default=0.8)
    p.add_argument("--max-sequence-length", type=int, default=5)
    p.add_argument("--sequences-per-round", type=int, default=200)
    p.add_argument("--rounds", type=int, help="stop after this many rounds (fixture default 25)")
    p.add_argument("--header", action="append", metavar="NAME:VALUE", help="static header for every request")
    p.add_argument("--ablation", choices=ABLATIONS, default="full")
    p.add_argument("--timeout", type=float, default=10.0, help="per-request timeout in seconds")
    p.add_argument("--out", default="rpgfuzz-out", help="output directory")
    p.add_argument("--no-fail-on-bugs", action="store_true", help="exit 0 even when bugs were found")

    p = sub.add_parser("replay", help="re-send a replay file and compare statuses")
    p.add_argument("--file", required=True)
    _target(p)
    p.add_argument("--header", action="append", metavar="NAME:VALUE")
    p.add_argument("--timeout", type=float, default=10.0)

    p = sub.add_parser("graph", help="build the initial graph from a spec and write it out")
    p.add_argument("--spec", help="OpenAPI document; defaults to the bundled Petstore")
    p.add_argument("--out", required=True, help="target file; .json writes JSON, anything else DOT")
    p.add_argument("--sequences", help="also write the generated call sequences as a JSON array")

    p = sub.add_parser("serve-fixture", help="serve the Petstore fixture on a loopback socket")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    return parser


def _cmd_run(args) -> int:
    cfg = RunConfig(
        spec_path=args.spec,
        base_url=args.base_url,
        fixture=args.fixture,
        budget=parse_duration(args.budget),
        seed=args.seed,
        theta=args.theta,
        p_reuse=args.p_reuse,
        p_spec=args.p_spec,
        max_sequence_length=args.max_sequence_length,
        sequences_per_round=args.sequences_per_round,
        max_rounds=args.rounds,
        headers=_headers(args.header),
        ablation=args.ablation,
        out_dir=args.out,
        timeout=args.timeout,
        fail_on_bugs=not args.no_fail_on_bugs,
    )
    result = run(cfg)
    metrics = result.report["metrics"]
    print(
        f"rounds {metrics['rounds_completed']}  requests {metrics['total_requests']}  "
        f"SRO {metrics['sro_count']}/{metrics['operation_count']}  bugs {result.report['bug_count']}"
    )
    print(f"report: {result.path('report')}")
    return result.exit_code


def _cmd_replay(args) -> int:
    from .executor import FixtureTransport, HttpTransport

    lines = load_replay(args.file)
    if args.fixture:
        transport = FixtureTransport()
    else:
        transport = HttpTransport(args.base_url, args.timeout, _headers(args.header))
    results = replay(lines, transport)
    mismatches = [r for r in results if not r.matches]
    for r in mismatches:
        line = r.line
        print(f"{line.get('seq_id')}:{line.get('step')} {line['method']} {line['url']}: "
              f"recorded {line.get('observed_status')}, got {r.status}")
    print(f"{len(results) - len(mismatches)}/{len(results)} statuses match")
    return EXIT_OK if not mismatches else EXIT_BUGS


def _cmd_graph(args) -> int:
    if args.spec:
        spec = load_spec(args.spec)
    else:
        from .fixture import SPEC_PATH

        spec = load_spec(SPEC_PATH)
    rpg = build_initial_rpg(spec)
    out = Path(args.out)
    write_atomic(out, rpg.dumps() + "\n" if out.suffix == ".json" else rpg.to_dot())
    if args.sequences:
        seqs = generate_call_sequences(rpg)
        write_atomic(args.sequences, json.dumps(seqs.to_json(), indent=1) + "\n")
    for note in spec.diagnostics:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .fixture import serve

    server = serve(host=args.host, port=args.port)
    print(f"Petstore fixture on http://{args.host}:{server.server_address[1]}/v2", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which here means "bugs found"
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "replay": _cmd_replay, "graph": _cmd_graph, "serve-fixture": _cmd_serve}
    try:
        return handlers[args.command](args)
    except (RpgFuzzError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
