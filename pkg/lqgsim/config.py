from pydantic import AliasChoices, Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache
import os


_PROJECT_ROOT = os.environ.get("PROJECT_ROOT", os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
_OUTPUT_DIR = os.path.join(_PROJECT_ROOT, "runs")


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="LQG_",
        env_file=os.path.join(os.path.dirname(__file__), "..", "config", ".env"),
        env_file_encoding="utf-8",
        extra="ignore",
        populate_by_name=True,
    )

    threads: int = Field(default=1, ge=1, validation_alias=AliasChoices("LQG_THREADS", "THREADS"))
    output_dir: str = _OUTPUT_DIR
    memory_limit_bytes: int = 4 * 1024**3
    log_level: str = "INFO"
    default_grid_size: int = 256
    default_slices: int = 4


@lru_cache
def get_settings() -> Settings:
    return Settings()
