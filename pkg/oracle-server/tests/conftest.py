import base64
import io
import json
from importlib import resources

import pytest
from PIL import Image


def data_path(name: str):
    return resources.files("oracle_server").joinpath(f"data/{name}")


@pytest.fixture
def portrait_path(tmp_path):
    blob = data_path("portrait.png").read_bytes()
    path = tmp_path / "portrait.png"
    path.write_bytes(blob)
    return path


def transcript_path(name: str, tmp_path):
    blob = data_path(f"transcripts/{name}").read_bytes()
    path = tmp_path / name
    path.write_bytes(blob)
    return path


def encode_request(request_id: int, image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    payload = base64.b64encode(buf.getvalue()).decode("ascii")
    doc = {"id": request_id, "image_png_b64": payload}
    return (json.dumps(doc, separators=(",", ":"), sort_keys=True) + "\n").encode()


HELLO = b'{"hello":{"protocol":1}}\n'
