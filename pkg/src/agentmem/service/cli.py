"""Command-line interface.

Human-readable tables by default, JSON with --json. Exit codes: 1 for
usage errors, 2 for operation errors (message on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..config import EngineConfig
from ..engine import MemoryEngine
from ..errors import MemoryEngineError
from ..store import AgentContext

DEFAULT_AGENT = "cli-user"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="agentmem", description=__doc__)
    parser.add_argument("--data", default="agentmem-data", help="data directory")
    parser.add_argument("--config", default=None, help="config file (JSON or key=value)")
    parser.add_argument("--json", action="store_true", help="JSON output")
    parser.add_argument("--agent", default=DEFAULT_AGENT, help="acting agent id")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("remember", help="store a memory")
    p.add_argument("content")
    p.add_argument("--tags", default="", help="comma-separated tags")
    p.add_argument("--importance", type=int, default=5)
    p.add_argument("--parent", type=int, default=None)

    p = sub.add_parser("recall", help="search memories")
    p.add_argument("query")
    p.add_argument("--limit", type=int, default=10)

    p = sub.add_parser("get", help="fetch one memory")
    p.add_argument("id", type=int)

    p = sub.add_parser("delete", help="tombstone a memory")
    p.add_argument("id", type=int)

    p = sub.add_parser("useful", help="record a cli_useful feedback signal")
    p.add_argument("memory_id", type=int)
    p.add_argument("--query", default="")

    p = sub.add_parser("learning", help="learning-store maintenance")
    p.add_argument("action", choices=["reset"])

    sub.add_parser("patterns", help="show pattern-learning states")
    sub.add_parser("agents", help="show registered agents and trust")

    p = sub.add_parser("graph", help="knowledge-graph maintenance")
    p.add_argument("action", choices=["rebuild"])

    p = sub.add_parser("events", help="event log")
    p.add_argument("action", choices=["tail"])
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--types", default=None, help="comma-separated filter")

    p = sub.add_parser("serve", help="run the REST+SSE service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)

    sub.add_parser("rpc", help="stdio JSON-RPC loop for tool integration")

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument(
        "suite", choices=["latency", "concurrency", "graph", "ablation", "trust", "all"]
    )
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--json-out", default=None, help="write suite JSON here")
    p.add_argument("--out", default="bench-out", help="report directory")
    p.add_argument("--full", action="store_true", help="include the 5k graph build")

    p = sub.add_parser("export", help="export all memories to JSON")
    p.add_argument("dest")

    p = sub.add_parser("import", help="import memories from a JSON export")
    p.add_argument("src")

    sub.add_parser("compact", help="purge tombstoned records")
    sub.add_parser("status", help="engine summary")
    return parser


def _open(args) -> MemoryEngine:
    config = EngineConfig.load(args.config)
    if args.data:
        data = Path(args.data)
        config.data_dir = data
        config.store_path = data / "memory.db"
        config.learning_path = data / "learning.db"
        config.events_path = data / "events.db"
    return MemoryEngine(config)


def _emit(args, payload, human: str = "") -> None:
    if args.json:
        print(json.dumps(payload, indent=1, default=str))
    else:
        print(human if human else json.dumps(payload, indent=1, default=str))


def _record_line(record, score=None) -> str:
    tags = ",".join(sorted(record.tags)) or "-"
    head = f"#{record.id} [imp {record.importance}] ({tags})"
    if score is not None:
        head += f" score={score:.4f}"
    return f"{head} {record.content}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ctx = AgentContext(args.agent, "CLI")

    if args.command == "bench":
        # bench owns its own throwaway engines
        from ..bench.report import print_report, write_outputs
        from ..bench.suites import run_suite

        reports = run_suite(args.suite, seed=args.seed, full=args.full)
        for report in reports:
            print_report(report)
            paths = write_outputs(
                report,
                args.out,
                json_path=args.json_out if len(reports) == 1 else None,
            )
            print("wrote: " + " ".join(str(p) for p in paths))
        return 0

    engine = _open(args)
    try:
        return _run(args, engine, ctx)
    except MemoryEngineError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    finally:
        engine.close()


def _run(args, engine: MemoryEngine, ctx: AgentContext) -> int:
    if args.command == "remember":
        tags = {t.strip() for t in args.tags.split(",") if t.strip()}
        record = engine.remember(
            args.content, tags, args.importance, parent=args.parent, agent_ctx=ctx
        )
        _emit(args, record.to_dict(), f"stored {_record_line(record)}")
        return 0

    if args.command == "recall":
        results = engine.recall(args.query, limit=args.limit, agent_ctx=ctx)
        payload = []
        lines = []
        for record, score in results:
            d = record.to_dict()
            d["score"] = score
            payload.append(d)
            lines.append(_record_line(record, score))
        _emit(args, payload, "\n".join(lines) if lines else "(no results)")
        return 0

    if args.command == "get":
        record = engine.get(args.id)
        _emit(args, record.to_dict(), _record_line(record))
        return 0

    if args.command == "delete":
        engine.delete(args.id, ctx)
        _emit(args, {"deleted": args.id}, f"deleted #{args.id}")
        return 0

    if args.command == "useful":
        engine.register_agent(ctx.agent, ctx.protocol)
        engine.record_feedback("cli_useful", args.memory_id, args.query)
        _emit(args, {"recorded": True}, f"recorded useful signal for #{args.memory_id}")
        return 0

    if args.command == "learning":
        engine.learning_reset()
        _emit(args, {"reset": True, "phase": engine.ranker.phase()}, "learning store reset (phase 0)")
        return 0

    if args.command == "patterns":
        snapshot = engine.patterns.snapshot()
        lines = [
            f"{s['pattern_kind']}/{s['category']}: k={s['k']} N={s['n']}"
            f" confidence={s['confidence']:.3f}"
            for s in snapshot
        ]
        _emit(args, snapshot, "\n".join(lines) if lines else "(no patterns)")
        return 0

    if args.command == "agents":
        rows = []
        for profile in engine.registry.all_profiles():
            d = profile.to_dict()
            d["trust"] = engine.trust.trust(profile.agent)
            rows.append(d)
        lines = [
            f"{r['agent']} [{r['protocol']}] writes={r['write_count']}"
            f" recalls={r['recall_count']} trust={r['trust']:.3f}"
            for r in rows
        ]
        _emit(args, rows, "\n".join(lines) if lines else "(no agents)")
        return 0

    if args.command == "graph":
        stats = engine.rebuild_graph()
        payload = {
            "nodes": stats.nodes,
            "edges": stats.edges,
            "communities": stats.communities,
            "modularity": stats.modularity,
            "duration_s": stats.duration_s,
        }
        _emit(
            args,
            payload,
            f"graph rebuilt: {stats.nodes} nodes, {stats.edges} edges,"
            f" communities per level {stats.communities}"
            f" in {stats.duration_s:.2f}s",
        )
        return 0

    if args.command == "events":
        types = set(args.types.split(",")) if args.types else None
        events = engine.bus.recent(args.count, types)
        payload = [e.to_dict() for e in events]
        lines = [
            f"{e.seq:>6} {e.type:<18} {e.agent or '-':<12} {json.dumps(e.payload)}"
            for e in events
        ]
        _emit(args, payload, "\n".join(lines) if lines else "(no events)")
        return 0

    if args.command == "serve":
        from .rest import serve

        serve(engine, args.host, args.port)
        return 0

    if args.command == "rpc":
        from .rpc import serve_rpc

        serve_rpc(engine)
        return 0

    if args.command == "export":
        count = engine.export_json(args.dest)
        _emit(args, {"exported": count}, f"exported {count} records to {args.dest}")
        return 0

    if args.command == "import":
        count = engine.import_json(args.src)
        _emit(args, {"imported": count}, f"imported {count} records from {args.src}")
        return 0

    if args.command == "compact":
        purged = engine.compact()
        _emit(args, {"purged": purged}, f"purged {len(purged)} tombstoned records")
        return 0

    if args.command == "status":
        _emit(args, engine.status())
        return 0

    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
