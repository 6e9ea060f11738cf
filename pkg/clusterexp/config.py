"""
Configuration Management
Loads and validates process-level settings using Pydantic Settings.
Run-level (per experiment) configuration lives in models/run_config.py.
"""

import os
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process settings loaded from environment variables.
    Uses .env file in development, environment variables otherwise.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        populate_by_name=True,
        extra="ignore",
    )

    # Application
    app_name: str = Field(default="clusterexp", alias="CLUSTEREXP_APP_NAME")
    environment: str = Field(default="development", alias="CLUSTEREXP_ENVIRONMENT")
    log_level: str = Field(default="INFO", alias="CLUSTEREXP_LOG_LEVEL")

    # Execution
    workers: Optional[int] = Field(default=None, alias="CLUSTEREXP_WORKERS")
    seed: int = Field(default=20240521, alias="CLUSTEREXP_SEED")
    output_dir: str = Field(default="output", alias="CLUSTEREXP_OUTPUT_DIR")

    # Enumeration caps
    partition_cap: int = Field(default=8, alias="CLUSTEREXP_PARTITION_CAP")
    tree_cap: int = Field(default=7, alias="CLUSTEREXP_TREE_CAP")
    ursell_cap: int = Field(default=6, alias="CLUSTEREXP_URSELL_CAP")
    kruskal_edge_cap: int = Field(default=8, alias="CLUSTEREXP_KRUSKAL_EDGE_CAP")
    spanning_count_cap: int = Field(default=12, alias="CLUSTEREXP_SPANNING_COUNT_CAP")
    bkar_site_cap: int = Field(default=4, alias="CLUSTEREXP_BKAR_SITE_CAP")
    large_field_site_cap: int = Field(default=4, alias="CLUSTEREXP_LARGE_FIELD_SITE_CAP")

    # Integration caps
    cubature_dimension_cap: int = Field(default=8, alias="CLUSTEREXP_CUBATURE_DIM_CAP")
    qmc_dimension_cap: int = Field(default=16, alias="CLUSTEREXP_QMC_DIM_CAP")
    cubature_node_budget: int = Field(
        default=4_000_000,
        alias="CLUSTEREXP_CUBATURE_NODE_BUDGET"
    )

    @field_validator("log_level")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        """Accept lower-case level names from the environment"""
        level = v.upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown log level: {v}")
        return level

    @property
    def effective_workers(self) -> int:
        """Configured worker count, or the available parallelism."""
        return self.workers or os.cpu_count() or 1


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """
    Accessor for the settings instance.
    Services take caps from here unless a caller passes explicit limits.
    """
    return settings
