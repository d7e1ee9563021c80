"""Request/response models for the HTTP service."""

from __future__ import annotations

import base64
from typing import Literal

from pydantic import BaseModel

from ..pipelines import RunOutcome


class ArtifactPayload(BaseModel):
    kind: Literal["text", "binary"]
    data: str  # text content, or base64 for binary

    def to_bytes(self) -> bytes:
        if self.kind == "text":
            return self.data.encode("utf-8")
        return base64.b64decode(self.data)


class RunResponse(BaseModel):
    mode: str
    passed: bool
    exit_code: int
    summary: dict
    artifacts: dict[str, ArtifactPayload]

    @classmethod
    def from_outcome(cls, outcome: RunOutcome) -> "RunResponse":
        payloads = {}
        for name, content in outcome.artifacts.items():
            if isinstance(content, bytes):
                payloads[name] = ArtifactPayload(
                    kind="binary", data=base64.b64encode(content).decode("ascii")
                )
            else:
                payloads[name] = ArtifactPayload(kind="text", data=content)
        return cls(
            mode=outcome.mode,
            passed=outcome.passed,
            exit_code=outcome.exit_code,
            summary=_jsonable(outcome.summary),
            artifacts=payloads,
        )


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


class HealthResponse(BaseModel):
    status: str
    version: str
