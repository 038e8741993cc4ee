"""Line-delimited JSON-RPC 2.0 loop over stdio for agent/tool integration.

Methods: remember, recall, memory_used, status. Each request declares its
agent identity (``agent`` param, default "tool-client"), registered under
the MCP protocol. memory_used(memory_id, query) records a tool_used
feedback signal -- the primary implicit-feedback channel.
"""

from __future__ import annotations

import json
import sys
from typing import IO, Optional

from ..errors import MemoryEngineError, NotFound, TrustDenied
from ..store import AgentContext

INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
APPLICATION_ERROR = -32000

METHODS = ("remember", "recall", "memory_used", "status")


def _error(req_id, code: int, message: str, data=None) -> dict:
    err = {"code": code, "message": message}
    if data is not None:
        err["data"] = data
    return {"jsonrpc": "2.0", "id": req_id, "error": err}


def _result(req_id, result) -> dict:
    return {"jsonrpc": "2.0", "id": req_id, "result": result}


def handle_line(engine, line: str) -> Optional[dict]:
    """One request in, one response dict out (None for notifications)."""
    line = line.strip()
    if not line:
        return None
    try:
        request = json.loads(line)
    except json.JSONDecodeError:
        return _error(None, INVALID_REQUEST, "malformed JSON")
    if not isinstance(request, dict) or request.get("jsonrpc") != "2.0":
        return _error(None, INVALID_REQUEST, "not a JSON-RPC 2.0 request")
    method = request.get("method")
    req_id = request.get("id")
    notification = "id" not in request
    if not isinstance(method, str):
        return None if notification else _error(req_id, INVALID_REQUEST, "missing method")
    if method not in METHODS:
        return None if notification else _error(
            req_id, METHOD_NOT_FOUND, f"unknown method {method!r}"
        )
    params = request.get("params") or {}
    if not isinstance(params, dict):
        return None if notification else _error(
            req_id, INVALID_PARAMS, "params must be an object"
        )

    agent = params.get("agent") or "tool-client"
    ctx = AgentContext(str(agent), "MCP")
    try:
        result = _invoke(engine, method, params, ctx)
    except (KeyError, TypeError, ValueError) as exc:
        return None if notification else _error(
            req_id, INVALID_PARAMS, f"invalid params: {exc}"
        )
    except NotFound as exc:
        return None if notification else _error(
            req_id, INVALID_PARAMS, "invalid params", data={"NotFound": str(exc)}
        )
    except TrustDenied as exc:
        return None if notification else _error(
            req_id, APPLICATION_ERROR, str(exc), data={"TrustDenied": True}
        )
    except MemoryEngineError as exc:
        return None if notification else _error(req_id, APPLICATION_ERROR, str(exc))
    return None if notification else _result(req_id, result)


def _invoke(engine, method: str, params: dict, ctx: AgentContext):
    if method == "remember":
        record = engine.remember(
            content=params["content"],
            tags=params.get("tags", []),
            importance=int(params.get("importance", 5)),
            parent=params.get("parent_id"),
            agent_ctx=ctx,
        )
        return record.to_dict()
    if method == "recall":
        results = engine.recall(
            params["query"], limit=int(params.get("limit", 10)), agent_ctx=ctx
        )
        out = []
        for record, score in results:
            d = record.to_dict()
            d["score"] = score
            out.append(d)
        return out
    if method == "memory_used":
        engine.register_agent(ctx.agent, ctx.protocol)
        engine.record_feedback(
            "tool_used", int(params["memory_id"]), params.get("query", "")
        )
        return {"recorded": True}
    if method == "status":
        engine.register_agent(ctx.agent, ctx.protocol)
        return engine.status()
    raise AssertionError(method)


def serve_rpc(engine, stdin: Optional[IO] = None, stdout: Optional[IO] = None) -> None:
    """Read requests line by line until EOF; malformed lines never stop the loop."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        response = handle_line(engine, line)
        if response is not None:
            stdout.write(json.dumps(response) + "\n")
            stdout.flush()
