"""Request handling and the stdio/http serve loops."""

from __future__ import annotations

from dataclasses import dataclass

from .detector import CascadeDetector, ModelLoadError, TemplateRecognizer
from .echo import EchoBackend
from .protocol import (
    BadRequest,
    ProtocolFatal,
    check_hello,
    is_hello,
    parse_message,
    parse_scoring_request,
    render_detections_response,
    render_error_response,
    render_hello_reply,
)


@dataclass
class ServerConfig:
    """How one oracle process presents itself.

    ``score_mapping`` documents how the backend's raw output becomes a
    [0,1] confidence: the cascade detector uses the fraction of scale
    sweeps that re-found a box, the recognizer clamps a correlation.
    """

    kind: str = "fd"
    model: str | None = None
    transport: str = "stdio"
    port: int = 8473
    echo: str | None = None
    score_mapping: str = "default"

    def __post_init__(self):
        if self.kind not in ("fd", "fr"):
            raise ValueError(f"kind {self.kind!r} must be fd or fr")
        if self.transport not in ("stdio", "http"):
            raise ValueError(f"transport {self.transport!r} must be stdio or http")
        if self.transport == "http" and not 1024 <= self.port <= 65535:
            raise ValueError(f"port {self.port} outside [1024, 65535]")


class RequestCore:
    """Transport-independent request handling: one line in, one line out."""

    def __init__(self, kind: str, backend=None, echo: EchoBackend | None = None):
        self.kind = echo.kind if echo is not None else kind
        self.backend = backend
        self.echo = echo
        self._last_id = -1

    def handle_line(self, raw: bytes) -> bytes:
        message = parse_message(raw)
        if self.echo is not None:
            return self.echo.next_response(message)
        if is_hello(message):
            check_hello(message)
            return render_hello_reply(self.kind)
        try:
            request_id, pixels = parse_scoring_request(message)
        except BadRequest as exc:
            return render_error_response(exc.request_id, str(exc))
        if request_id <= self._last_id:
            raise ProtocolFatal(
                f"request ids must increase within a connection "
                f"(got {request_id} after {self._last_id})"
            )
        self._last_id = request_id
        try:
            detections = self.backend.detections(pixels)
        except Exception as exc:  # inference failure: answer, stay up
            return render_error_response(request_id, f"inference failed: {exc}")
        return render_detections_response(request_id, detections)


def build_core(config: ServerConfig) -> RequestCore:
    """Instantiate backends up front so model problems fail at startup."""
    if config.echo:
        return RequestCore(config.kind, echo=EchoBackend(config.echo))
    if config.kind == "fd":
        return RequestCore("fd", backend=CascadeDetector(config.model))
    if not config.model:
        raise ModelLoadError("fr oracle needs --model pointing at an enrollment directory")
    return RequestCore("fr", backend=TemplateRecognizer(config.model))


def serve_stdio(core: RequestCore, stdin=None, stdout=None) -> int:
    import sys

    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    for raw in stdin:
        if not raw.strip():
            continue
        try:
            response = core.handle_line(raw)
        except ProtocolFatal as exc:
            print(f"oracle-server: protocol violation: {exc}", file=sys.stderr)
            return 1
        stdout.write(response)
        stdout.flush()
    return 0


def serve_http(core: RequestCore, port: int) -> int:
    import sys
    from http.server import BaseHTTPRequestHandler, HTTPServer

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                response = core.handle_line(raw)
                status = 200
            except ProtocolFatal as exc:
                response = f"protocol violation: {exc}\n".encode()
                status = 400
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(response)))
            self.end_headers()
            self.wfile.write(response)

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", port), Handler)
    print(f"oracle-server: listening on 127.0.0.1:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0
