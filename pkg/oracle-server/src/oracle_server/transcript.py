"""Golden-transcript conformance checking.

A transcript records a full conversation: alternating request/response
lines beginning with the hello exchange. The check validates every line,
then replays the requests through the echo-mode request core and demands
byte-identical responses. The first offending line is reported with its
1-based number.
"""

from __future__ import annotations

from dataclasses import dataclass

from .echo import EchoBackend, TranscriptError, load_transcript
from .protocol import ProtocolFatal, is_hello, parse_message
from .server import RequestCore


@dataclass
class TranscriptResult:
    ok: bool
    exchanges: int = 0
    failed_line: int | None = None
    reason: str | None = None

    def render(self) -> str:
        if self.ok:
            return f"PASS ({self.exchanges} exchanges replayed byte-exactly)\n"
        return f"FAIL at line {self.failed_line}: {self.reason}\n"


def golden_transcript_check(transcript_path) -> TranscriptResult:
    lines = load_transcript(transcript_path)
    if not lines:
        return TranscriptResult(ok=False, failed_line=1, reason="transcript is empty")
    if len(lines) % 2 != 0:
        return TranscriptResult(
            ok=False, failed_line=len(lines), reason="transcript truncated mid-exchange"
        )

    try:
        core = RequestCore(kind="fd", echo=EchoBackend(transcript_path))
    except TranscriptError as exc:
        return TranscriptResult(ok=False, failed_line=exc.line_number, reason=str(exc))

    last_id = -1
    for index in range(0, len(lines), 2):
        request_line, response_line = lines[index], lines[index + 1]
        request_number = index + 1
        try:
            request = parse_message(request_line)
        except ProtocolFatal as exc:
            return TranscriptResult(ok=False, failed_line=request_number, reason=str(exc))
        if not is_hello(request):
            request_id = request.get("id")
            if not isinstance(request_id, int):
                return TranscriptResult(
                    ok=False, failed_line=request_number,
                    reason=f"request has no usable id: {request!r}",
                )
            if request_id <= last_id:
                return TranscriptResult(
                    ok=False, failed_line=request_number,
                    reason=f"request ids must increase (got {request_id} after {last_id})",
                )
            last_id = request_id
        try:
            replayed = core.handle_line(request_line)
        except ProtocolFatal as exc:
            return TranscriptResult(ok=False, failed_line=request_number, reason=str(exc))
        if replayed != response_line:
            return TranscriptResult(
                ok=False, failed_line=index + 2,
                reason="replayed response differs from the recorded line",
            )
    return TranscriptResult(ok=True, exchanges=len(lines) // 2)
