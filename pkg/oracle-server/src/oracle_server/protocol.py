"""Server side of the scoring wire protocol.

Newline-delimited JSON: a hello exchange, then one response per request.
Requests carry a base64 PNG; responses carry detections whose confidences
must lie in [0,1]. Anything the server emits goes through
:func:`render_detections_response`, which clamps confidences, so an
out-of-range value can never reach the wire regardless of what a model
backend produces.
"""

from __future__ import annotations

import base64
import binascii
import io
import json

import numpy as np
from PIL import Image, UnidentifiedImageError

PROTOCOL_VERSION = 1


class ProtocolFatal(Exception):
    """Unrecoverable protocol violation; the connection must close."""


class BadRequest(Exception):
    """Malformed request that still carries a usable id."""

    def __init__(self, request_id, message):
        super().__init__(message)
        self.request_id = request_id


def parse_message(raw: bytes) -> dict:
    try:
        message = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolFatal(f"not a JSON message: {raw!r}") from exc
    if not isinstance(message, dict):
        raise ProtocolFatal(f"message is not an object: {raw!r}")
    return message


def is_hello(message: dict) -> bool:
    return "hello" in message


def check_hello(message: dict) -> None:
    hello = message.get("hello")
    if not isinstance(hello, dict) or hello.get("protocol") != PROTOCOL_VERSION:
        raise ProtocolFatal(f"unsupported handshake: {message!r}")


def render_hello_reply(kind: str) -> bytes:
    return _line({"hello": {"protocol": PROTOCOL_VERSION, "kind": kind}})


def parse_scoring_request(message: dict) -> tuple[int, np.ndarray]:
    """Returns (id, RGBA pixel array); raises BadRequest/ProtocolFatal."""
    request_id = message.get("id")
    if not isinstance(request_id, int) or request_id < 0:
        raise ProtocolFatal(f"request has no usable id: {message!r}")
    payload = message.get("image_png_b64")
    if not isinstance(payload, str):
        raise BadRequest(request_id, "missing image_png_b64")
    try:
        blob = base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError):
        raise BadRequest(request_id, "image_png_b64 is not valid base64") from None
    try:
        with Image.open(io.BytesIO(blob)) as im:
            pixels = np.asarray(im.convert("RGBA"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError):
        raise BadRequest(request_id, "payload is not a decodable image") from None
    return request_id, pixels


def render_detections_response(request_id: int, detections: list[dict]) -> bytes:
    body = []
    for det in detections:
        entry = {
            "box": [int(v) for v in det["box"]],
            "confidence": min(1.0, max(0.0, float(det["confidence"]))),
        }
        if det.get("label") is not None:
            entry["label"] = str(det["label"])
        body.append(entry)
    return _line({"id": request_id, "detections": body})


def render_error_response(request_id: int, message: str) -> bytes:
    return _line({"id": request_id, "error": message})


def _line(obj: dict) -> bytes:
    return (json.dumps(obj, separators=(",", ":"), sort_keys=True) + "\n").encode("utf-8")


def validate_response_line(raw: bytes) -> None:
    """Shape-check a recorded response line (hello reply or scoring response)."""
    message = parse_message(raw)
    if is_hello(message):
        hello = message["hello"]
        if not isinstance(hello, dict) or hello.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolFatal(f"bad hello reply: {message!r}")
        if hello.get("kind") not in ("fd", "fr"):
            raise ProtocolFatal(f"hello reply missing kind: {message!r}")
        return
    if not isinstance(message.get("id"), int):
        raise ProtocolFatal(f"response missing id: {message!r}")
    if "error" in message:
        if not isinstance(message["error"], str):
            raise ProtocolFatal(f"error field must be a string: {message!r}")
        return
    detections = message.get("detections")
    if not isinstance(detections, list):
        raise ProtocolFatal(f"response missing detections: {message!r}")
    for det in detections:
        if not isinstance(det, dict):
            raise ProtocolFatal(f"detection is not an object: {det!r}")
        box = det.get("box")
        if not (isinstance(box, list) and len(box) == 4):
            raise ProtocolFatal(f"detection box must be [x1,y1,x2,y2]: {det!r}")
        conf = det.get("confidence")
        if not isinstance(conf, (int, float)) or not 0.0 <= conf <= 1.0:
            raise ProtocolFatal(f"confidence {conf!r} outside [0,1]")
