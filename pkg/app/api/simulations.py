from fastapi import APIRouter, HTTPException, Query
from fastapi.concurrency import run_in_threadpool
from typing import Any, Dict, List
import json
import logging
from sse_starlette.sse import EventSourceResponse

from ..core.errors import ConfigError, InvariantViolation, UnknownPresetError
from ..models.metrics import PresetInfo, PresetRunRequest, PresetRunResponse
from ..models.simulation import SimConfig, SimulationReport
from ..services.preset_service import PresetService
from ..services.simulation_service import run_simulation, stream_simulation

logger = logging.getLogger(__name__)
router = APIRouter(prefix="/api/simulations", tags=["simulations"])

MAX_STREAM_EPOCHS = 1000


@router.get("/presets", response_model=List[PresetInfo])
async def list_presets():
    """Available experiment presets and the CSV series each one writes"""
    return PresetService.list_presets()


@router.post("/run", response_model=SimulationReport)
async def run(values: Dict[str, Any]):
    """
    Run one simulation. The body holds any subset of the SimConfig fields;
    missing fields take their defaults.
    """
    try:
        config = SimConfig.build(**values)
        logger.info(f"Simulation requested: N={config.N} epochs={config.epochs} seed={config.rng_seed}")
        return await run_in_threadpool(run_simulation, config)
    except ConfigError as e:
        logger.error(f"Invalid simulation config: {str(e)}")
        raise HTTPException(status_code=422, detail=f"Configuración inválida: {str(e)}")
    except InvariantViolation as e:
        logger.error(f"Invariant violated during run: {str(e)}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Invariant violation: {str(e)}")


@router.post("/presets/{name}", response_model=PresetRunResponse)
async def run_preset(name: str, request: PresetRunRequest):
    """Run a preset and return its aggregated rows"""
    try:
        service = PresetService()
        result = await run_in_threadpool(
            service.run, name, request.trials, request.seed, request.overrides,
        )
        return PresetRunResponse(
            preset=result.name,
            trials=result.trials,
            seed=result.seed,
            files={series: str(path) for series, path in result.files.items()},
            rows={series: json.loads(df.to_json(orient="records"))
                  for series, df in result.frames.items()},
        )
    except UnknownPresetError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except ConfigError as e:
        logger.error(f"Invalid preset overrides: {str(e)}")
        raise HTTPException(status_code=422, detail=f"Configuración inválida: {str(e)}")
    except InvariantViolation as e:
        logger.error(f"Invariant violated in preset {name}: {str(e)}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Invariant violation: {str(e)}")


@router.get("/stream")
async def stream(
    epochs: int = Query(default=1, ge=0, le=MAX_STREAM_EPOCHS),
    seed: int = Query(default=0, ge=0),
    overrides: List[str] = Query(default=[]),
):
    """
    Stream a simulation using Server-Sent Events: one `epoch_complete`
    event per epoch, then `simulation_complete`.
    """
    try:
        config = SimConfig.build(epochs=epochs, rng_seed=seed).with_overrides(overrides)
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=f"Configuración inválida: {str(e)}")

    async def event_stream():
        try:
            async for event in stream_simulation(config):
                yield {"event": event["event"], "data": json.dumps(event["data"], default=str)}
        except Exception as e:
            logger.error(f"Error in simulation stream: {str(e)}", exc_info=True)
            yield {"event": "error", "data": json.dumps({"error": str(e)})}

    return EventSourceResponse(event_stream())
