"""Minimal read-only HTTP query service over a loaded index bundle.

GET  /health                     liveness probe
GET  /shapes                     database shape ids
GET  /query?id=X&top_k=10        query with a database shape's stored views
POST /query?top_k=10             query with an uploaded ASCII mesh body
                                 (OFF by default; OBJ if the body has no OFF
                                 header but contains `v`/`f` records)

The bundle is immutable, so concurrent requests need no locking.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .errors import BindError, ShapeSearchError
from .index import IndexBundle, query, query_by_id
from .mesh import parse_obj, parse_off


def _rank_payload(results, timings):
    return {
        "results": [
            {"id": sid, "score": score, "label": label} for sid, score, label in results
        ],
        "timings_ms": {k: round(v * 1000.0, 3) for k, v in timings.items()},
    }


class _Handler(BaseHTTPRequestHandler):
    bundle: IndexBundle = None  # set by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, code: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _bad_request(self, message: str):
        self._send(400, {"error": message})

    def do_GET(self):
        url = urlparse(self.path)
        params = parse_qs(url.query)
        if url.path == "/health":
            self._send(200, {"status": "ok", "shapes": self.bundle.n_shapes})
            return
        if url.path == "/shapes":
            self._send(200, {"ids": list(self.bundle.shape_ids)})
            return
        if url.path == "/query":
            shape_id = params.get("id", [None])[0]
            if shape_id is None:
                self._bad_request("missing 'id' parameter")
                return
            try:
                top_k = int(params.get("top_k", ["10"])[0])
                results, timings = query_by_id(self.bundle, shape_id, top_k=top_k)
            except (ShapeSearchError, ValueError) as exc:
                self._bad_request(str(exc))
                return
            self._send(200, _rank_payload(results, timings))
            return
        self._send(404, {"error": "not found"})

    def do_POST(self):
        url = urlparse(self.path)
        params = parse_qs(url.query)
        if url.path != "/query":
            self._send(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            text = self.rfile.read(length).decode("utf-8")
        except (ValueError, UnicodeDecodeError):
            self._bad_request("body must be an ASCII mesh")
            return
        try:
            top_k = int(params.get("top_k", ["10"])[0])
            if text.lstrip().startswith("OFF"):
                mesh = parse_off(text, "upload")
            else:
                mesh = parse_obj(text, "upload")
            results, timings = query(self.bundle, mesh, top_k=top_k)
        except (ShapeSearchError, ValueError) as exc:
            self._bad_request(str(exc))
            return
        self._send(200, _rank_payload(results, timings))


def make_server(bundle: IndexBundle, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Bind the query service; port 0 picks a free port."""
    handler = type("BoundHandler", (_Handler,), {"bundle": bundle})
    try:
        return ThreadingHTTPServer((host, port), handler)
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}") from exc


def serve(bundle: IndexBundle, host: str, port: int) -> None:
    server = make_server(bundle, host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
