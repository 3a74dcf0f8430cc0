"""HTTP facade over the task runners.

The CLI drives this app in-process by default; `uvicorn gluedheat.service:app`
serves the same API over the network.  Responses carry the canonical report
text verbatim so clients can write byte-stable report files without
re-serializing.
"""

from __future__ import annotations

import json
from typing import Literal, Optional

from fastapi import FastAPI
from pydantic import BaseModel, ConfigDict

from .config import canonical_json, config_hash, resolved_config, validate_config
from .errors import GluedHeatError
from .tasks import run_task

API_VERSION = "1"

_STATUS = {
    2: "config-error",
    3: "hypothesis-violation",
    4: "numeric-failure",
}


class ErrorInfo(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: str
    message: str


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict
    seed: Optional[int] = None
    config_dir: str = "."


class RunResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")
    status: Literal["ok", "config-error", "hypothesis-violation",
                    "numeric-failure"]
    exit_code: int
    error: Optional[ErrorInfo] = None
    report: Optional[dict] = None
    report_json: Optional[str] = None       # canonical bytes for report.json
    files: dict[str, str] = {}


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict


class ValidateResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")
    status: Literal["ok", "config-error"]
    error: Optional[ErrorInfo] = None
    resolved: Optional[dict] = None
    config_hash: Optional[str] = None


app = FastAPI(title="gluedheat", version=API_VERSION)


def _error_response(e: GluedHeatError) -> RunResponse:
    code = e.exit_code
    return RunResponse(
        status=_STATUS.get(code, "numeric-failure"),
        exit_code=code if code in _STATUS else 4,
        error=ErrorInfo(kind=type(e).__name__, message=str(e)),
    )


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "api_version": API_VERSION}


@app.post("/validate", response_model=ValidateResponse)
def validate(req: ValidateRequest) -> ValidateResponse:
    try:
        cfg = validate_config(req.config)
    except GluedHeatError as e:
        return ValidateResponse(
            status="config-error",
            error=ErrorInfo(kind=type(e).__name__, message=str(e)),
        )
    return ValidateResponse(status="ok", resolved=resolved_config(cfg),
                            config_hash=config_hash(cfg))


@app.post("/run", response_model=RunResponse)
def run(req: RunRequest) -> RunResponse:
    try:
        cfg = validate_config(req.config)
        result = run_task(cfg, seed=req.seed, config_dir=req.config_dir)
    except GluedHeatError as e:
        return _error_response(e)
    body = canonical_json(result.report)
    return RunResponse(
        status="ok",
        exit_code=0,
        report=json.loads(body),
        report_json=body,
        files=result.files,
    )
