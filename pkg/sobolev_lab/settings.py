from functools import lru_cache

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class LabSettings(BaseSettings):
    """Process-level knobs read from the environment (or a .env file)."""

    model_config = SettingsConfigDict(env_prefix="SOBOLEV_LAB_", extra="ignore")

    workers: int = Field(default=1, ge=1, description="Worker count for integration and check jobs")
    chunk_size: int = Field(default=16384, ge=256, description="Nodes per integration chunk (fixed reduction tree)")
    log_level: str = Field(default="INFO", description="Default log level for the CLI")
    seed: int = Field(default=20240917, description="Seed for quasi-random sampling")


@lru_cache(maxsize=1)
def get_settings() -> LabSettings:
    return LabSettings()
