"""
Configuration settings for the Cross-View Localization Engine
"""

import os

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings"""

    model_config = SettingsConfigDict(env_prefix="BEVPF_", env_file=".env", extra="ignore")

    # API Settings
    api_v1_prefix: str = "/api/v1"
    project_name: str = "Cross-View Localization Engine"
    version: str = "1.0.0"

    # Server Settings
    host: str = "0.0.0.0"
    port: int = 8000
    reload: bool = False

    # Logging (BEVPF_LOG)
    log: str = "INFO"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # Runtime Settings
    threads: int = os.cpu_count() or 1
    output_dir: str = "out"


# Create settings instance
settings = Settings()
