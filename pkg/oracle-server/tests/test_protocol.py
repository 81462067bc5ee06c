import json

import pytest
from PIL import Image

from oracle_server.protocol import ProtocolFatal
from oracle_server.server import RequestCore, ServerConfig

from conftest import HELLO, encode_request


class _FixedBackend:
    def __init__(self, detections):
        self._detections = detections

    def detections(self, pixels):
        return self._detections


def core_with(detections):
    return RequestCore("fd", backend=_FixedBackend(detections))


def test_handshake_reply_is_fixed():
    core = RequestCore("fd", backend=_FixedBackend([]))
    assert core.handle_line(HELLO) == b'{"hello":{"kind":"fd","protocol":1}}\n'
    core = RequestCore("fr", backend=_FixedBackend([]))
    assert core.handle_line(HELLO) == b'{"hello":{"kind":"fr","protocol":1}}\n'


def test_response_carries_request_id():
    core = core_with([{"box": [1, 2, 3, 4], "confidence": 0.5}])
    reply = json.loads(core.handle_line(encode_request(7, Image.new("RGB", (4, 4)))))
    assert reply["id"] == 7


def test_confidence_clamped_regardless_of_model_output():
    core = core_with([
        {"box": [0, 0, 4, 4], "confidence": 17.5},
        {"box": [0, 0, 2, 2], "confidence": -3.0},
    ])
    reply = json.loads(core.handle_line(encode_request(0, Image.new("RGB", (4, 4)))))
    confs = [d["confidence"] for d in reply["detections"]]
    assert confs == [1.0, 0.0]


def test_ids_must_increase_within_connection():
    core = core_with([])
    img = Image.new("RGB", (4, 4))
    core.handle_line(encode_request(3, img))
    with pytest.raises(ProtocolFatal, match="must increase"):
        core.handle_line(encode_request(3, img))


def test_malformed_request_with_id_gets_error_response():
    core = core_with([])
    reply = json.loads(core.handle_line(b'{"id":5,"image_png_b64":"@@@not-base64@@@"}\n'))
    assert reply["id"] == 5
    assert "error" in reply


def test_undecodable_payload_gets_error_response():
    import base64

    payload = base64.b64encode(b"not a png").decode()
    core = core_with([])
    reply = json.loads(core.handle_line(
        json.dumps({"id": 1, "image_png_b64": payload}).encode() + b"\n"
    ))
    assert reply["id"] == 1
    assert "error" in reply


def test_request_without_id_is_protocol_fatal():
    core = core_with([])
    with pytest.raises(ProtocolFatal, match="no usable id"):
        core.handle_line(b'{"image_png_b64":"aaaa"}\n')
    with pytest.raises(ProtocolFatal, match="not a JSON message"):
        core.handle_line(b"garbage\n")


def test_inference_failure_keeps_server_up():
    class Exploding:
        def detections(self, pixels):
            raise RuntimeError("model fell over")

    core = RequestCore("fd", backend=Exploding())
    img = Image.new("RGB", (4, 4))
    reply = json.loads(core.handle_line(encode_request(0, img)))
    assert "inference failed" in reply["error"]
    reply = json.loads(core.handle_line(encode_request(1, img)))
    assert reply["id"] == 1  # still serving


def test_server_config_validation():
    with pytest.raises(ValueError):
        ServerConfig(kind="both")
    with pytest.raises(ValueError):
        ServerConfig(transport="carrier-pigeon")
    with pytest.raises(ValueError):
        ServerConfig(transport="http", port=80)


def test_http_transport_round_trip():
    import threading
    import urllib.request

    from oracle_server.server import serve_http

    core = core_with([{"box": [0, 0, 4, 4], "confidence": 0.7}])
    # pick a free port by binding first
    import socket

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    thread = threading.Thread(target=serve_http, args=(core, port), daemon=True)
    thread.start()
    import time

    deadline = time.time() + 5
    url = f"http://127.0.0.1:{port}/"
    while True:
        try:
            reply = urllib.request.urlopen(
                urllib.request.Request(url, data=HELLO), timeout=1
            ).read()
            break
        except OSError:
            if time.time() > deadline:
                raise
            time.sleep(0.05)
    assert json.loads(reply)["hello"]["kind"] == "fd"
    scored = urllib.request.urlopen(
        urllib.request.Request(url, data=encode_request(0, Image.new("RGB", (4, 4))))
    ).read()
    assert json.loads(scored)["detections"][0]["confidence"] == 0.7
