from typing import List, Literal
from pydantic import Field
from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    # Application
    app_name: str = "BLOWN Simulator API"
    app_version: str = "1.0.0"
    app_env: str = Field(default="development", env="APP_ENV")

    # HTTP surface
    host: str = Field(default="0.0.0.0", env="HOST")
    port: int = Field(default=8000, env="PORT")
    cors_origins: List[str] = Field(default=["*"], env="CORS_ORIGINS")

    # Experiment output
    output_dir: str = Field(default="results", env="OUTPUT_DIR")
    default_trials: int = Field(default=100, env="DEFAULT_TRIALS")  # "average of 100 runs"
    workers: int = Field(default=1, env="WORKERS")

    # Simulation guards
    round_cap: int = Field(default=1_000_000, env="ROUND_CAP")
    convergence_window: int = Field(default=500, env="CONVERGENCE_WINDOW")

    # Crypto
    crypto_backend: Literal["ed25519", "hmac"] = Field(default="ed25519", env="CRYPTO_BACKEND")
    bench_repeats: int = Field(default=1000, env="BENCH_REPEATS")

    # Logging
    log_level: str = Field(default="INFO", env="LOG_LEVEL")

    class Config:
        env_file = ".env"
        case_sensitive = False

    def is_development(self) -> bool:
        return self.app_env.lower() == "development"


@lru_cache()
def get_settings() -> Settings:
    return Settings()
