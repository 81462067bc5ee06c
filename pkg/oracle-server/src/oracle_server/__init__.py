"""Reference face-scoring oracle speaking the lpo wire protocol."""

from .server import RequestCore, ServerConfig, build_core
from .transcript import golden_transcript_check

__version__ = "0.1.0"

__all__ = ["RequestCore", "ServerConfig", "build_core", "golden_transcript_check"]
