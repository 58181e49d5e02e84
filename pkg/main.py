"""
FastAPI Backend for the Cross-View Localization Engine
"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from api.routes import localization_router
from core.config import settings
from core.logging_config import configure_logging

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan events"""
    configure_logging()
    logger.info("Starting %s", settings.project_name)
    yield
    logger.info("Shutting down %s", settings.project_name)


# Create FastAPI app
app = FastAPI(
    title=settings.project_name,
    description="Particle-filter localization against aerial feature maps: simulation, evaluation and losses",
    version=settings.version,
    lifespan=lifespan,
)

# Configure CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include API routes
app.include_router(localization_router, prefix=settings.api_v1_prefix)


@app.get("/")
async def root():
    """Health check endpoint"""
    return {
        "message": f"{settings.project_name} is running!",
        "version": settings.version,
        "docs": "/docs",
    }


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy", "service": "cross-view-localization"}


# Note: Use start.py to run the application
# python start.py
