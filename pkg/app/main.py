import logging
import uvicorn
from contextlib import asynccontextmanager
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
import time

from .core.config import get_settings
from .core.errors import ConfigError, InvariantViolation, UnknownPresetError
from .core.logging_setup import setup_logging
from .services.crypto_service import get_backend
from .api.simulations import router as simulations_router

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan events"""
    settings = get_settings()
    setup_logging(settings.log_level)
    logger.info("Starting BLOWN Simulator API...")

    backend = get_backend(settings.crypto_backend)
    logger.info(f"Crypto backend ready: {backend.name}")
    logger.info("BLOWN Simulator API started successfully")

    yield

    logger.info("BLOWN Simulator API shut down")


settings = get_settings()

app = FastAPI(
    title="BLOWN Simulator API",
    description="""
    🚀 **BLOWN - Simulador de blockchain inalámbrica**

    Simulador a nivel de ronda de un protocolo de consenso Proof-of-Channel
    sobre un canal de radio compartido con modelo SINR.

    ## Características principales:

    * **📡 Canal SINR**: Resolución física de cada slot (idle, éxito, colisión)
    * **🎲 Sortición VRF**: Elección de líderes ponderada por stake
    * **🔗 Ledger**: Bloques firmados, cadena por nodo y métricas de consistencia
    * **📶 Jammers**: Adversarios (T, 1-ε)-acotados, aleatorios o en ráfaga
    * **👥 Sybil**: Identidades adversarias que retienen o falsifican bloques
    * **⚡ Streaming en tiempo real**: Server-Sent Events por época
    * **📊 Presets**: Barridos de tamaño, densidad, ε y Sybil con salida CSV

    ## Flujo de uso:

    1. **GET /api/simulations/presets** - Listar experimentos disponibles
    2. **POST /api/simulations/run** - Ejecutar una simulación
    3. **GET /api/simulations/stream** - Seguir una simulación época por época
    4. **POST /api/simulations/presets/{name}** - Ejecutar un preset completo

    ## Ejemplo de entrada:

    ```json
    {
      "N": 100,
      "density": 1.0,
      "epochs": 5,
      "jammer": "random",
      "epsilon": 0.3,
      "rng_seed": 7
    }
    ```
    """,
    version=settings.app_version,
    lifespan=lifespan,
    docs_url="/docs",
    redoc_url="/redoc"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=True,
    allow_methods=["GET", "POST"],
    allow_headers=["*"],
)


@app.middleware("http")
async def log_requests(request: Request, call_next):
    start_time = time.time()
    logger.info(f"🔥 {request.method} {request.url}")

    response = await call_next(request)

    process_time = time.time() - start_time
    logger.info(f"🔥 Response status: {response.status_code} (took {process_time:.2f}s)")
    return response


app.include_router(simulations_router)


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    try:
        backend = get_backend(settings.crypto_backend)
        return {
            "status": "healthy",
            "crypto_backend": backend.name,
            "version": settings.app_version,
            "environment": settings.app_env
        }
    except Exception as e:
        logger.error(f"Health check failed: {str(e)}")
        return JSONResponse(
            status_code=503,
            content={
                "status": "unhealthy",
                "error": str(e)
            }
        )


@app.get("/")
async def root():
    """Root endpoint with API information"""
    return {
        "message": "🚀 BLOWN Simulator API - Simulador de blockchain inalámbrica",
        "version": settings.app_version,
        "docs": "/docs",
        "health": "/health",
        "features": [
            "Canal SINR por slot",
            "Elección de líder Proof-of-Channel",
            "Jammers y nodos Sybil",
            "Streaming de épocas en tiempo real",
            "Presets de experimentos con salida CSV"
        ]
    }


@app.exception_handler(Exception)
async def global_exception_handler(request, exc):
    """Global exception handler for unhandled errors"""
    logger.error(f"Unhandled exception: {str(exc)}", exc_info=True)

    return JSONResponse(
        status_code=500,
        content={
            "error": "Internal server error",
            "message": "An unexpected error occurred. Please try again later.",
            "request_id": str(id(request))
        }
    )


@app.exception_handler(HTTPException)
async def http_exception_handler(request, exc):
    """Handler for HTTP exceptions"""
    return JSONResponse(
        status_code=exc.status_code,
        content={
            "error": exc.detail,
            "status_code": exc.status_code
        }
    )


@app.exception_handler(UnknownPresetError)
async def unknown_preset_handler(request, exc):
    return JSONResponse(status_code=404, content={"error": str(exc), "status_code": 404})


@app.exception_handler(ConfigError)
async def config_error_handler(request, exc):
    return JSONResponse(status_code=422, content={"error": str(exc), "status_code": 422})


@app.exception_handler(InvariantViolation)
async def invariant_violation_handler(request, exc):
    logger.error(f"Invariant violation: {str(exc)}", exc_info=True)
    return JSONResponse(status_code=500, content={"error": str(exc), "status_code": 500})


if __name__ == "__main__":
    uvicorn.run(
        "app.main:app",
        host=settings.host,
        port=settings.port,
        reload=settings.is_development(),
        log_level=settings.log_level.lower()
    )
