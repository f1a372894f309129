import os
from typing import List, Optional

import uvicorn
from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field, ValidationError

from ..core.config import ScenarioConfig
from ..core.errors import ConfigError, NumericalError, TrialFailure, UnknownPreset
from ..experiments import PRESETS, ResultTable, run_scenario
from ..loader.config_loader import resolve_config
from ..utils.logger import LogCategory, logger

load_dotenv()

app = FastAPI(
    title="Near/Far-Field Codebook API",
    description="Scenario presets and Monte Carlo runs for the codebook simulator",
    version="1.0.0",
)


class RunRequest(BaseModel):
    """Request model for the run endpoint"""
    preset: str
    desk: bool = True
    seed: Optional[int] = None
    trials: Optional[int] = Field(default=None, ge=1)
    workers: Optional[int] = Field(default=None, ge=1)


class PresetListResponse(BaseModel):
    presets: List[str]


def _resolve(name: str, desk: bool, **overrides) -> ScenarioConfig:
    try:
        return resolve_config(name, desk=desk, **overrides)
    except UnknownPreset as e:
        raise HTTPException(status_code=404, detail=str(e))
    except (ConfigError, ValidationError) as e:
        raise HTTPException(status_code=422, detail=str(e))


@app.get("/health")
async def health():
    return {"status": "ok"}


@app.get("/presets", response_model=PresetListResponse)
async def list_presets():
    return PresetListResponse(presets=sorted(PRESETS))


@app.get("/presets/{name}", response_model=ScenarioConfig)
async def get_preset(name: str, desk: bool = Query(default=False)):
    """Resolved scenario configuration of a preset"""
    return _resolve(name, desk)


@app.post("/run", response_model=ResultTable)
def run(request: RunRequest):
    """
    Run a preset scenario and return the aggregated result rows

    Args:
        request: RunRequest naming the preset and optional overrides

    Returns:
        ResultTable with one row per (method, SNR, metric)
    """
    cfg = _resolve(request.preset, request.desk, seed=request.seed, trials=request.trials, workers=request.workers)
    try:
        return run_scenario(cfg)
    except TrialFailure as e:
        status = 422 if isinstance(e.cause, ConfigError) else 500
        raise HTTPException(status_code=status, detail=str(e))
    except NumericalError as e:
        logger.error(f"Run failed: {e}", LogCategory.EXPERIMENT)
        raise HTTPException(status_code=500, detail=str(e))


def main():
    """Main function to run the API server"""
    uvicorn.run(
        app,
        host=os.getenv("NFC_API_HOST", "0.0.0.0"),
        port=int(os.getenv("NFC_API_PORT", 2026)),
        reload=False,
    )


if __name__ == "__main__":
    main()
