"""REST + SSE service on the standard-library HTTP server.

Purely local: listens on a socket, never opens outbound connections.
Mutating requests identify their caller with the X-Agent-Id header; the
agent is auto-registered under the REST protocol.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlparse

from ..errors import (
    InvalidImportance,
    MemoryEngineError,
    NotFound,
    SelfFlag,
    TrustDenied,
    UnknownAgent,
    UnknownParent,
)
from ..store import AgentContext

logger = logging.getLogger(__name__)

_MEMORY_PATH = re.compile(r"^/memories/(\d+)$")
_TRUST_PATH = re.compile(r"^/agents/([^/]+)/trust$")


def _record_dict(record, score: Optional[float] = None) -> dict:
    d = record.to_dict()
    if score is not None:
        d["score"] = score
    return d


class _Handler(BaseHTTPRequestHandler):
    engine = None  # set by make_server
    protocol_version = "HTTP/1.1"

    # -- plumbing ---------------------------------------------------------

    def log_message(self, fmt, *args):
        logger.debug("rest: " + fmt, *args)

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        data = json.loads(raw)
        if not isinstance(data, dict):
            raise ValueError("body must be a JSON object")
        return data

    def _agent_ctx(self, required: bool = True) -> Optional[AgentContext]:
        agent = self.headers.get("X-Agent-Id")
        if not agent:
            if required:
                raise PermissionError("X-Agent-Id header required")
            return None
        return AgentContext(agent, "REST")

    def _dispatch(self, method: str) -> None:
        parsed = urlparse(self.path)
        try:
            self._route(method, parsed.path, parse_qs(parsed.query))
        except TrustDenied as exc:
            self._error(403, str(exc))
        except (NotFound, UnknownAgent) as exc:
            self._error(404, str(exc))
        except PermissionError as exc:
            self._error(400, str(exc))
        except (
            ValueError,
            KeyError,
            TypeError,
            json.JSONDecodeError,
            InvalidImportance,
            UnknownParent,
            SelfFlag,
        ) as exc:
            self._error(400, str(exc))
        except MemoryEngineError as exc:
            self._error(400, str(exc))
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception as exc:  # pragma: no cover
            logger.exception("rest handler failure")
            self._error(500, str(exc))

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_DELETE(self):
        self._dispatch("DELETE")

    # -- routes ------------------------------------------------------------

    def _route(self, method: str, path: str, query: dict) -> None:
        engine = self.engine

        if method == "POST" and path == "/memories":
            ctx = self._agent_ctx()
            body = self._body()
            record = engine.remember(
                content=body["content"],
                tags=body.get("tags", []),
                importance=int(body.get("importance", 5)),
                parent=body.get("parent_id"),
                agent_ctx=ctx,
                entity_vector=body.get("entity_vector"),
            )
            self._send_json(201, _record_dict(record))
            return

        if method == "GET" and (m := _MEMORY_PATH.match(path)):
            record = engine.get(int(m.group(1)))
            self._send_json(200, _record_dict(record))
            return

        if method == "DELETE" and (m := _MEMORY_PATH.match(path)):
            ctx = self._agent_ctx()
            engine.delete(int(m.group(1)), ctx)
            self._send_json(200, {"deleted": int(m.group(1))})
            return

        if method == "GET" and path == "/search":
            q = (query.get("q") or [""])[0]
            limit = int((query.get("limit") or ["10"])[0])
            ctx = self._agent_ctx(required=False)
            results = engine.recall(q, limit=limit, agent_ctx=ctx)
            self._send_json(
                200, [_record_dict(rec, score) for rec, score in results]
            )
            return

        if method == "POST" and path == "/feedback":
            ctx = self._agent_ctx()
            body = self._body()
            engine.register_agent(ctx.agent, ctx.protocol)
            engine.record_feedback(
                body.get("channel", "dashboard_click"),
                int(body["memory_id"]),
                body.get("query", ""),
            )
            self._send_json(200, {"recorded": True})
            return

        if method == "GET" and path == "/agents":
            profiles = engine.registry.all_profiles()
            out = []
            for p in profiles:
                d = p.to_dict()
                try:
                    d["trust"] = engine.trust.trust(p.agent)
                except UnknownAgent:
                    d["trust"] = None
                out.append(d)
            self._send_json(200, out)
            return

        if method == "GET" and (m := _TRUST_PATH.match(path)):
            agent = m.group(1)
            state = engine.trust.state_of(agent)
            self._send_json(
                200,
                {
                    "agent": agent,
                    "posterior": state.posterior_mean,
                    "incremental": state.t_inc,
                    "signals": state.n,
                    "threshold": engine.trust.threshold,
                    "mode": engine.trust.mode,
                },
            )
            return

        if method == "GET" and path == "/graph/communities":
            self._send_json(200, engine.graph.export_dict())
            return

        if method == "POST" and path == "/learning/reset":
            engine.learning_reset()
            self._send_json(200, {"reset": True, "phase": engine.ranker.phase()})
            return

        if method == "GET" and path == "/events/stream":
            self._stream_events(query)
            return

        if method == "GET" and path == "/status":
            self._send_json(200, engine.status())
            return

        self._error(404, f"no route for {method} {path}")

    # -- SSE ------------------------------------------------------------------

    def _stream_events(self, query: dict) -> None:
        types_param = (query.get("types") or [None])[0]
        types = set(types_param.split(",")) if types_param else None
        replay = (query.get("replay") or ["false"])[0].lower() in ("1", "true", "yes")
        sub = self.engine.bus.subscribe(types=types, replay_buffer=replay)
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            while not sub.closed:
                event = sub.get(timeout=0.5)
                if event is None:
                    # keep-alive comment so dead clients surface quickly
                    self.wfile.write(b": ping\n\n")
                    self.wfile.flush()
                    continue
                frame = (
                    f"id: {event.seq}\n"
                    f"event: {event.type}\n"
                    f"data: {json.dumps(event.payload)}\n\n"
                )
                self.wfile.write(frame.encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.engine.bus.unsubscribe(sub)


class RestServer:
    """Owns the HTTP server thread; use as a context manager in tests."""

    def __init__(self, engine, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundHandler", (_Handler,), {"engine": engine})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.host, self.port = self.httpd.server_address[:2]
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "RestServer":
        self._thread = threading.Thread(
            target=self.httpd.serve_forever, name="rest-server", daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=10)

    def __enter__(self) -> "RestServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(engine, host: str = "127.0.0.1", port: int = 8765) -> None:
    """Blocking serve loop for the CLI ``serve`` subcommand."""
    server = RestServer(engine, host, port)
    logger.info("serving on http://%s:%s", server.host, server.port)
    print(f"listening on http://{server.host}:{server.port}")
    try:
        server.httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.httpd.server_close()
