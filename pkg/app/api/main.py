"""
FastAPI Service for Boolean Matrix Factorization
Thin wrapper mounting the v1 routes.
"""

from fastapi import FastAPI

from app.api.routes import router

app = FastAPI(
    title="Boolean Matrix Factorization API",
    description="Noisy-OR factorization and matrix completion service",
    version="1.0.0",
)

app.include_router(router, prefix="/api/v1")


@app.get("/")
def root():
    """Root endpoint with service info."""
    return {
        "service": "Boolean Matrix Factorization API",
        "version": "1.0.0",
        "docs": "/docs",
    }
