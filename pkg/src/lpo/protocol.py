"""Wire protocol for external scoring oracles, plus subprocess/HTTP clients.

Messages are single-line JSON texts, newline-delimited, exchanged over a
child process's standard streams or as HTTP POST bodies:

    client -> {"hello": {"protocol": 1}}
    server -> {"hello": {"protocol": 1, "kind": "fd"|"fr"}}
    client -> {"id": N, "image_png_b64": "<base64 PNG>"}
    server -> {"id": N, "detections": [{"box": [x1,y1,x2,y2],
               "confidence": C, "label": "..."?}]}
    server -> {"id": N, "error": "message"}            (per-request failure)

Exactly one response per request; ids are assigned by the client and are
strictly increasing within a connection. Confidences outside [0,1] are
rejected here at the boundary and never propagated.
"""

from __future__ import annotations

import base64
import json
import os
import queue
import shlex
import subprocess
import threading
import urllib.error
import urllib.request

from .oracle import Detection, OracleError, OracleHandle
from .raster import FaceBox, ImageRaster, RasterError, encode_png

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 30_000
TIMEOUT_ENV_VAR = "LPO_ORACLE_TIMEOUT_MS"


class OracleTransportError(OracleError):
    """Transport-level failure (timeout, dead process, unreachable host).

    Usually transient: retrying against a fresh connection may succeed.
    """


class OracleProtocolError(OracleError):
    """The peer violated the wire protocol. Fatal for the connection."""


def resolve_timeout_ms(explicit: int | None = None) -> int:
    if explicit is not None:
        return explicit
    env = os.environ.get(TIMEOUT_ENV_VAR)
    if env:
        try:
            return int(env)
        except ValueError:
            raise OracleError(f"{TIMEOUT_ENV_VAR}={env!r} is not an integer") from None
    return DEFAULT_TIMEOUT_MS


# --- codec -------------------------------------------------------------------

def encode_hello() -> bytes:
    return _encode({"hello": {"protocol": PROTOCOL_VERSION}})


def encode_request(request_id: int, image: ImageRaster) -> bytes:
    png = base64.b64encode(encode_png(image)).decode("ascii")
    return _encode({"id": request_id, "image_png_b64": png})


def _encode(obj: dict) -> bytes:
    return (json.dumps(obj, separators=(",", ":"), sort_keys=True) + "\n").encode("utf-8")


def decode_hello_reply(line: bytes) -> str:
    msg = _decode(line)
    hello = msg.get("hello")
    if not isinstance(hello, dict) or hello.get("protocol") != PROTOCOL_VERSION:
        raise OracleProtocolError(f"bad handshake reply: {line!r}")
    kind = hello.get("kind")
    if kind not in ("fd", "fr"):
        raise OracleProtocolError(f"handshake missing oracle kind: {line!r}")
    return kind


def decode_response(line: bytes, expect_id: int) -> list[Detection]:
    msg = _decode(line)
    if msg.get("id") != expect_id:
        raise OracleProtocolError(
            f"response id {msg.get('id')!r} does not match request id {expect_id}"
        )
    if "error" in msg:
        raise OracleTransportError(f"oracle reported error: {msg['error']}")
    raw = msg.get("detections")
    if not isinstance(raw, list):
        raise OracleProtocolError(f"response has no detections list: {line!r}")
    detections = []
    for entry in raw:
        detections.append(_decode_detection(entry))
    return detections


def _decode_detection(entry) -> Detection:
    if not isinstance(entry, dict):
        raise OracleProtocolError(f"detection is not an object: {entry!r}")
    box = entry.get("box")
    conf = entry.get("confidence")
    if not (isinstance(box, list) and len(box) == 4):
        raise OracleProtocolError(f"detection box must be [x1,y1,x2,y2]: {entry!r}")
    if not isinstance(conf, (int, float)) or not 0.0 <= conf <= 1.0:
        raise OracleProtocolError(f"confidence {conf!r} outside [0,1]")
    x1, y1, x2, y2 = (int(v) for v in box)
    # tolerate slightly out-of-range detector output; reject inverted boxes
    x1, y1 = max(0, x1), max(0, y1)
    try:
        face = FaceBox(x1, y1, max(x2, x1), max(y2, y1), float(conf))
    except RasterError as exc:
        raise OracleProtocolError(f"unusable detection box {box}: {exc}") from exc
    label = entry.get("label")
    if label is not None and not isinstance(label, str):
        raise OracleProtocolError(f"label must be a string: {label!r}")
    return Detection(face, float(conf), label)


def _decode(line: bytes) -> dict:
    try:
        msg = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise OracleProtocolError(f"response is not JSON: {line!r}") from exc
    if not isinstance(msg, dict):
        raise OracleProtocolError(f"response is not an object: {line!r}")
    return msg


# --- subprocess client --------------------------------------------------------

class _SubprocessBackend:
    """Client for an oracle living behind a child process's stdio.

    A reader thread feeds a queue so queries can time out without killing the
    pipe. Strictly one in-flight request; stdio oracles are not parallel-safe.
    """

    def __init__(self, command: str, timeout_ms: int | None = None):
        self.command = command
        self.timeout = resolve_timeout_ms(timeout_ms) / 1000.0
        self._proc = None
        self._thread = None
        self._lines: queue.Queue = queue.Queue()
        self._next_id = 0
        self._lock = threading.Lock()
        self.kind = None

    def _ensure_started(self):
        if self._proc is not None:
            if self._proc.poll() is not None:
                raise OracleTransportError(
                    f"oracle process exited with code {self._proc.returncode}"
                )
            return
        try:
            self._proc = subprocess.Popen(
                shlex.split(self.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise OracleTransportError(f"cannot start oracle {self.command!r}: {exc}") from exc
        self._thread = threading.Thread(target=self._pump, args=(self._proc,), daemon=True)
        self._thread.start()
        self._send(encode_hello())
        self.kind = decode_hello_reply(self._read_line())

    def _pump(self, proc):
        try:
            for line in proc.stdout:
                self._lines.put(line)
        except ValueError:  # pipe closed under us during shutdown
            pass
        self._lines.put(None)

    def _send(self, data: bytes):
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise OracleTransportError(f"oracle process pipe closed: {exc}") from exc

    def _read_line(self) -> bytes:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise OracleTransportError(
                f"oracle did not respond within {self.timeout:.1f}s"
            ) from None
        if line is None:
            raise OracleTransportError("oracle process closed its output")
        return line

    def query(self, image: ImageRaster) -> list[Detection]:
        with self._lock:
            self._ensure_started()
            request_id = self._next_id
            self._next_id += 1
            self._send(encode_request(request_id, image))
            return decode_response(self._read_line(), request_id)

    def close(self):
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()
        if self._thread is not None:
            self._thread.join(timeout=2)
        if proc.stdout is not None:
            proc.stdout.close()


# --- HTTP client ---------------------------------------------------------------

class _HttpBackend:
    """Client for an oracle behind an HTTP endpoint, one message per POST."""

    def __init__(self, url: str, timeout_ms: int | None = None):
        self.url = url
        self.timeout = resolve_timeout_ms(timeout_ms) / 1000.0
        self._next_id = 0
        self._lock = threading.Lock()
        self.kind = None

    def _post(self, payload: bytes) -> bytes:
        req = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read().splitlines()[0]
        except urllib.error.HTTPError as exc:
            raise OracleTransportError(f"oracle HTTP error {exc.code}") from exc
        except (urllib.error.URLError, OSError, IndexError) as exc:
            raise OracleTransportError(f"oracle unreachable at {self.url}: {exc}") from exc

    def _ensure_handshake(self):
        if self.kind is None:
            self.kind = decode_hello_reply(self._post(encode_hello()))

    def query(self, image: ImageRaster) -> list[Detection]:
        with self._lock:
            self._ensure_handshake()
            request_id = self._next_id
            self._next_id += 1
        return decode_response(
            self._post(encode_request(request_id, image)), request_id
        )

    def close(self):
        pass


def open_subprocess_oracle(command: str, timeout_ms: int | None = None) -> OracleHandle:
    return OracleHandle(
        kind="subprocess",
        endpoint=command,
        parallel_safe=False,
        backend=_SubprocessBackend(command, timeout_ms),
    )


def open_http_oracle(url: str, timeout_ms: int | None = None) -> OracleHandle:
    return OracleHandle(
        kind="http",
        endpoint=url,
        parallel_safe=False,
        backend=_HttpBackend(url, timeout_ms),
    )


def open_oracle(spec: str, timeout_ms: int | None = None) -> OracleHandle:
    """Open a handle from the CLI grammar ``cmd:...`` | ``http:...`` | ``synthetic:...``."""
    from .oracle import make_synthetic, parse_synthetic_spec

    head, sep, rest = spec.partition(":")
    if not sep:
        raise OracleError(f"oracle spec {spec!r} must look like kind:endpoint")
    if head == "cmd":
        return open_subprocess_oracle(rest, timeout_ms)
    if head == "http":
        # accept both http:<host:port/path> and a full http://... URL
        return open_http_oracle(spec if rest.startswith("//") else f"http://{rest}",
                                timeout_ms)
    if head == "https":
        return open_http_oracle(spec, timeout_ms)
    if head == "synthetic":
        return make_synthetic(parse_synthetic_spec(rest))
    raise OracleError(f"unknown oracle spec kind {head!r} (want cmd:, http:, synthetic:)")
