import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpo.oracle import (
    ConstantSpec,
    Detection,
    GaussianWellSpec,
    NoFaceError,
    OracleError,
    OracleHandle,
    PlantedMinSpec,
    best_face,
    detection_score,
    make_synthetic,
    parse_synthetic_spec,
    query,
)
from lpo.protocol import (
    OracleProtocolError,
    OracleTransportError,
    decode_hello_reply,
    decode_response,
    encode_request,
    open_oracle,
    open_subprocess_oracle,
)
from lpo.raster import FaceBox

from conftest import detections_response, solid_image


class TestSyntheticOracles:
    def test_constant_oracle_contract(self):
        handle = make_synthetic(ConstantSpec(0.8))
        img = solid_image(30, 20)
        dets = query(handle, img)
        assert len(dets) == 1
        assert dets[0].confidence == 0.8
        assert dets[0].box.as_list() == [0, 0, 30, 20]
        assert handle.parallel_safe

    def test_constant_one_everywhere(self):
        handle = make_synthetic(ConstantSpec(1.0))
        for _ in range(3):
            assert detection_score(query(handle, solid_image(4, 4))) == 1.0

    def test_planted_minimum_hit_scores_floor(self):
        handle = make_synthetic(PlantedMinSpec((60, 40), radius=25, floor=0.2, baseline=0.99))
        img = solid_image(100, 100)
        dets = query(handle, img, placement=((60, 40),))
        assert dets[0].confidence == pytest.approx(0.2)

    def test_planted_minimum_far_away_is_baseline(self):
        spec = PlantedMinSpec((60, 40), radius=10, floor=0.2, baseline=0.99)
        handle = make_synthetic(spec)
        dets = query(handle, solid_image(100, 100), placement=((5, 95),))
        assert dets[0].confidence == pytest.approx(0.99)
        assert query(handle, solid_image(100, 100))[0].confidence == pytest.approx(0.99)

    def test_gaussian_confidence_decreases_toward_center(self):
        spec = GaussianWellSpec(components=((50, 50, 0.8, 20),), baseline=1.0)
        near = spec.field_at((55, 50))
        far = spec.field_at((90, 50))
        assert near < far < 1.0

    def test_queries_are_pure(self):
        handle = make_synthetic(GaussianWellSpec(((10, 10, 0.5, 5),)))
        img = solid_image(20, 20)
        a = query(handle, img, placement=((12, 10),))
        b = query(handle, img, placement=((12, 10),))
        assert a == b

    def test_spec_validation(self):
        with pytest.raises(OracleError):
            ConstantSpec(1.5)
        with pytest.raises(OracleError):
            PlantedMinSpec((0, 0), radius=-1, floor=0.2)
        with pytest.raises(OracleError):
            GaussianWellSpec(())

    def test_spec_grammar_round_trips(self):
        for text in (
            "constant:0.8",
            "planted:60,40,25,0.2,0.99",
            "gaussians:120,80,0.8,40@1",
            "gaussians:1,2,0.3,4;5,6,0.1,8@0.9",
        ):
            spec = parse_synthetic_spec(text)
            again = parse_synthetic_spec(make_synthetic(spec).endpoint)
            assert spec == again

    def test_bad_spec_strings(self):
        for text in ("constant:2", "planted:1,2", "mystery:1", "gaussians:1,2,3"):
            with pytest.raises(OracleError):
                parse_synthetic_spec(text)


class TestBestFace:
    def test_single_detection(self):
        det = Detection(FaceBox(1, 2, 5, 6, 0.7), 0.7)
        assert best_face([det]).as_list() == [1, 2, 5, 6]

    def test_argmax(self):
        low = Detection(FaceBox(0, 0, 4, 4, 0.7), 0.7)
        high = Detection(FaceBox(5, 5, 9, 9, 0.9), 0.9)
        assert best_face([low, high]).confidence == 0.9

    def test_tie_breaks_on_topmost_box(self):
        a = Detection(FaceBox(3, 10, 8, 20, 0.9), 0.9)
        b = Detection(FaceBox(7, 5, 12, 15, 0.9), 0.9)
        assert best_face([a, b]).y1 == 5

    def test_empty_list_names_the_view(self):
        with pytest.raises(NoFaceError, match="left"):
            best_face([], view="left")

    @given(st.permutations(list(range(6))))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariant(self, order):
        dets = [
            Detection(FaceBox(i + 1, 2 * i + 1, i + 10, 2 * i + 12, 0.5 + 0.05 * (i % 3)), 0.5 + 0.05 * (i % 3))
            for i in range(6)
        ]
        shuffled = [dets[i] for i in order]
        assert best_face(shuffled) == best_face(dets)


class TestProtocolCodec:
    def test_request_round_trip_bit_exact(self, make_image):
        img = make_image(6, 4)
        line = encode_request(7, img)
        msg = json.loads(line)
        assert msg["id"] == 7
        import base64

        from lpo.raster import decode_image

        assert decode_image(base64.b64decode(msg["image_png_b64"])) == img
        # loopback: re-encoding the decoded message reproduces the wire bytes
        again = (json.dumps(msg, separators=(",", ":"), sort_keys=True) + "\n").encode()
        assert again == line

    def test_golden_response_decodes(self):
        line = (
            b'{"id":0,"detections":[{"box":[428,189,652,584],'
            b'"confidence":0.9993,"label":"attacker"}]}\n'
        )
        dets = decode_response(line, 0)
        assert dets[0].box.as_list() == [428, 189, 652, 584]
        assert dets[0].confidence == 0.9993
        assert dets[0].label == "attacker"

    def test_out_of_range_confidence_rejected_at_boundary(self):
        line = b'{"id":0,"detections":[{"box":[0,0,5,5],"confidence":1.2}]}\n'
        with pytest.raises(OracleProtocolError, match="outside"):
            decode_response(line, 0)

    def test_mismatched_id_rejected(self):
        line = b'{"id":3,"detections":[]}\n'
        with pytest.raises(OracleProtocolError, match="id"):
            decode_response(line, 2)

    def test_error_response_raises_transport_error(self):
        with pytest.raises(OracleTransportError, match="boom"):
            decode_response(b'{"id":1,"error":"boom"}\n', 1)

    def test_handshake_decode(self):
        assert decode_hello_reply(b'{"hello":{"protocol":1,"kind":"fr"}}\n') == "fr"
        with pytest.raises(OracleProtocolError):
            decode_hello_reply(b'{"hello":{"protocol":2,"kind":"fd"}}\n')
        with pytest.raises(OracleProtocolError):
            decode_hello_reply(b"garbage\n")

    def test_negative_box_coords_clamped(self):
        line = b'{"id":0,"detections":[{"box":[-3,-2,5,5],"confidence":0.5}]}\n'
        det = decode_response(line, 0)[0]
        assert det.box.as_list() == [0, 0, 5, 5]


class TestSubprocessOracle:
    def test_canned_reference_detection(self, write_script):
        cmd = write_script(
            [detections_response(((428, 189, 652, 584), 0.9993, None))], kind="fd"
        )
        with open_subprocess_oracle(cmd) as oracle:
            dets = query(oracle, solid_image(16, 16))
        assert len(dets) == 1
        assert dets[0].box.as_list() == [428, 189, 652, 584]
        assert dets[0].confidence == 0.9993
        assert not oracle.parallel_safe

    def test_sequential_ids_served_in_order(self, write_script):
        cmd = write_script(
            [
                detections_response(((0, 0, 2, 2), 0.1, None)),
                detections_response(((0, 0, 2, 2), 0.2, None)),
                detections_response(((0, 0, 2, 2), 0.3, None)),
            ]
        )
        img = solid_image(4, 4)
        with open_subprocess_oracle(cmd) as oracle:
            scores = [detection_score(query(oracle, img)) for _ in range(3)]
        assert scores == [0.1, 0.2, 0.3]

    def test_out_of_range_confidence_from_process(self, write_script):
        cmd = write_script([detections_response(((0, 0, 2, 2), 1.7, None))])
        with open_subprocess_oracle(cmd) as oracle:
            with pytest.raises(OracleProtocolError, match="outside"):
                query(oracle, solid_image(4, 4))

    def test_malformed_response_is_protocol_error(self, write_script):
        cmd = write_script([{"raw": "this is not json"}])
        with open_subprocess_oracle(cmd) as oracle:
            with pytest.raises(OracleProtocolError):
                query(oracle, solid_image(4, 4))

    def test_timeout_is_transient_transport_error(self, write_script, monkeypatch):
        monkeypatch.setenv("LPO_ORACLE_TIMEOUT_MS", "200")
        cmd = write_script([detections_response(((0, 0, 2, 2), 0.5, None))])
        with open_subprocess_oracle(cmd + " --delay 5") as oracle:
            with pytest.raises(OracleTransportError, match="respond within"):
                query(oracle, solid_image(4, 4))

    def test_dead_command_is_transport_error(self):
        with open_subprocess_oracle("/definitely/not/a/real/binary") as oracle:
            with pytest.raises(OracleTransportError):
                query(oracle, solid_image(4, 4))


class _LoopbackHttpOracle(threading.Thread):
    """Minimal in-process HTTP peer for client tests."""

    def __init__(self, responses):
        super().__init__(daemon=True)
        from http.server import BaseHTTPRequestHandler, HTTPServer

        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                msg = json.loads(body)
                if "hello" in msg:
                    reply = {"hello": {"protocol": 1, "kind": "fd"}}
                else:
                    reply = dict(outer.responses.pop(0))
                    reply["id"] = msg["id"]
                data = (json.dumps(reply) + "\n").encode()
                self.send_response(200)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.responses = list(responses)
        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.port = self.server.server_address[1]

    def run(self):
        self.server.serve_forever()

    def stop(self):
        self.server.shutdown()


def test_http_oracle_round_trip():
    peer = _LoopbackHttpOracle([detections_response(((1, 2, 9, 9), 0.42, None))])
    peer.start()
    try:
        with open_oracle(f"http:127.0.0.1:{peer.port}/score") as oracle:
            dets = query(oracle, solid_image(8, 8))
        assert dets[0].confidence == 0.42
    finally:
        peer.stop()


def test_open_oracle_spec_grammar(write_script):
    synthetic = open_oracle("synthetic:constant:0.6")
    assert synthetic.kind == "synthetic"
    assert detection_score(query(synthetic, solid_image(2, 2))) == 0.6
    with pytest.raises(OracleError):
        open_oracle("nonsense")
    with pytest.raises(OracleError):
        open_oracle("ftp:somewhere")
    cmd = write_script([detections_response(((0, 0, 1, 1), 0.5, None))])
    handle = open_oracle(f"cmd:{cmd}")
    assert handle.kind == "subprocess"
    handle.close()


def test_handle_validation():
    with pytest.raises(OracleError):
        OracleHandle(kind="carrier-pigeon", endpoint="coop", parallel_safe=False)
    with pytest.raises(OracleError):
        OracleHandle(kind="subprocess", endpoint="", parallel_safe=False)
