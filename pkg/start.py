#!/usr/bin/env python3
"""
Startup script for the Cross-View Localization API
"""

import os

import uvicorn

from core.config import settings

if __name__ == "__main__":
    # PORT wins over BEVPF_PORT for hosted deployments
    port = int(os.environ.get("PORT", settings.port))

    print(f"Starting {settings.project_name}...")
    print(f"API available at: http://{settings.host}:{port}")
    print(f"API documentation at: http://{settings.host}:{port}/docs")
    print("=" * 50)

    uvicorn.run(
        "main:app",
        host=settings.host,
        port=port,
        reload=settings.reload,
        log_level=settings.log.lower(),
    )
