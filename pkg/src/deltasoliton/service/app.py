"""FastAPI service wrapping the experiment pipelines.

One endpoint runs a validated config synchronously (runs can take minutes;
deploy behind a generous timeout).  The CLI is a thin client of this app,
either over the network or through an in-process transport.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ExperimentConfig
from ..pipelines import run
from .models import HealthResponse, RunResponse

MODES = ["groundstate", "spectrum", "evolve", "shoot", "norm-equiv", "verify"]


def create_app() -> FastAPI:
    app = FastAPI(
        title="delta-soliton service",
        version=__version__,
        description=(
            "Constructs and verifies multi-soliton states of the 1-D NLS "
            "equation with a repulsive delta potential."
        ),
    )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/v1/modes")
    def modes() -> list[str]:
        return MODES

    @app.post("/v1/run", response_model=RunResponse)
    def run_experiment(config: ExperimentConfig) -> RunResponse:
        try:
            outcome = run(config)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return RunResponse.from_outcome(outcome)

    return app


app = create_app()
