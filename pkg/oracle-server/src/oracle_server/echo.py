"""Echo backend: replays recorded responses instead of running a model.

A transcript is a text file of alternating client/server lines, starting
with the hello exchange. Echo mode serves the recorded response for the
i-th request verbatim, after validating both sides, which makes
cross-component integration tests fully deterministic and model-free.
"""

from __future__ import annotations

from pathlib import Path

from .protocol import (
    ProtocolFatal,
    is_hello,
    parse_message,
    validate_response_line,
)


class TranscriptError(Exception):
    """A transcript line failed validation; carries its 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def load_transcript(path) -> list[bytes]:
    raw = Path(path).read_bytes()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    return [line + b"\n" for line in lines]


class EchoBackend:
    """Serves a transcript's response lines in order, checking conformance."""

    def __init__(self, transcript_path):
        lines = load_transcript(transcript_path)
        if len(lines) % 2 != 0:
            raise TranscriptError(len(lines), "transcript truncated mid-exchange")
        self.responses: list[bytes] = []
        self.kind = None
        for index in range(1, len(lines), 2):
            line = lines[index]
            try:
                validate_response_line(line)
            except ProtocolFatal as exc:
                raise TranscriptError(index + 1, str(exc)) from exc
            message = parse_message(line)
            if is_hello(message):
                self.kind = message["hello"]["kind"]
            self.responses.append(line)
        if self.kind is None:
            raise TranscriptError(2, "transcript has no hello reply")
        self._cursor = 0

    def next_response(self, request_message: dict) -> bytes:
        if self._cursor >= len(self.responses):
            raise ProtocolFatal("transcript exhausted")
        line = self.responses[self._cursor]
        self._cursor += 1
        reply = parse_message(line)
        if is_hello(request_message) != is_hello(reply):
            raise ProtocolFatal("request/response kinds do not line up")
        if not is_hello(request_message) and reply.get("id") != request_message.get("id"):
            raise ProtocolFatal(
                f"recorded response id {reply.get('id')!r} does not match "
                f"request id {request_message.get('id')!r}"
            )
        return line
