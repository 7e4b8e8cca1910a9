"""Line-delimited JSON recall service over TCP.

One request object per line, one response line per request, UTF-8, no
other framing. A malformed line answers {"ok": false, "error":
"BAD_REQUEST"} and the connection stays usable; unknown IDs answer
NOT_FOUND. Stores are immutable after load, so handlers share them
across threads without locks and identical requests always get
identical responses.
"""

from __future__ import annotations

import json
import socketserver
import threading

from .recall import NotFoundError, RecallService

BAD_REQUEST = "BAD_REQUEST"
NOT_FOUND = "NOT_FOUND"


def _positive_int(value, default: int) -> int:
    if value is None:
        return default
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError("expected a positive integer")
    return value


def handle_request(service: RecallService, line: str) -> dict:
    """Resolve one request line to one response object."""
    try:
        req = json.loads(line)
    except json.JSONDecodeError:
        return {"ok": False, "error": BAD_REQUEST, "detail": "malformed JSON"}
    if not isinstance(req, dict) or "op" not in req:
        return {"ok": False, "error": BAD_REQUEST, "detail": "missing op"}
    op = req["op"]
    try:
        if op == "health":
            return {"ok": True, "status": "up"}
        if op == "u2i":
            pairs = service.u2i(str(req["user"]), _positive_int(req.get("k"), 10))
            return {"ok": True, "items": [{"item": i, "score": s} for i, s in pairs]}
        if op == "u2i2i":
            pairs = service.u2i2i(
                str(req["user"]),
                _positive_int(req.get("m"), 3),
                _positive_int(req.get("k"), 10),
            )
            return {"ok": True, "items": [{"item": i, "score": s} for i, s in pairs]}
        if op == "item_neighbors":
            pairs = service.item_neighbors(str(req["item"]), _positive_int(req.get("k"), 10))
            return {"ok": True, "items": [{"item": i, "score": s} for i, s in pairs]}
        if op == "user_embedding":
            vec = service.users.vector(str(req["user"]))
            return {"ok": True, "vector": [float(x) for x in vec]}
        if op == "item_embedding":
            vec = service.items.vector(str(req["item"]))
            return {"ok": True, "vector": [float(x) for x in vec]}
        if op == "rank_features":
            feats = service.rank_features(str(req["user"]), str(req["item"]))
            return {"ok": True, **feats}
        return {"ok": False, "error": BAD_REQUEST, "detail": f"unknown op {op!r}"}
    except NotFoundError as exc:
        return {"ok": False, "error": NOT_FOUND, "detail": str(exc.args[0])}
    except (KeyError, TypeError, ValueError) as exc:
        return {"ok": False, "error": BAD_REQUEST, "detail": str(exc)}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            response = handle_request(self.server.service, line)
            payload = json.dumps(response) + "\n"
            try:
                self.wfile.write(payload.encode("utf-8"))
                self.wfile.flush()
            except BrokenPipeError:
                return


class RecallServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], service: RecallService):
        super().__init__(address, _Handler)
        self.service = service


def serve(host: str, port: int, service: RecallService) -> RecallServer:
    """Start serving on a background thread; caller owns shutdown()."""
    server = RecallServer((host, port), service)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
