"""
Logging setup shared by the CLI, the API server and the tests
"""

import logging
from typing import Optional

from core.config import settings


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging once; `level` overrides BEVPF_LOG."""
    resolved = (level or settings.log).upper()
    numeric = logging.getLevelName(resolved)
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(level=numeric, format=settings.log_format, force=True)
