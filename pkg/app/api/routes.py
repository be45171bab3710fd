"""
API Routes - REST interface for factorization and completion.
Uses dependency injection, no business logic in handlers.
"""

import logging
from typing import Optional

from fastapi import APIRouter, Depends, HTTPException
from pydantic import BaseModel, Field

from app.core.config_loader import ConfigLoader
from app.core.engine import FitResult
from app.core.exceptions import NumericalDomainError
from app.core.models import ConfigurationSchema
from app.core.settings import get_settings
from app.core.validators import MatrixValidator
from app.services.factorization_service import FactorizationReport, FactorizationService

logger = logging.getLogger(__name__)

router = APIRouter()


class FactorizeRequest(BaseModel):
    """Matrix plus EM hyperparameters."""

    rows: list[list[Optional[int]]] = Field(
        ...,
        description="Matrix rows of 0, 1 or null (missing)",
        min_length=1,
    )
    rank: int = Field(..., ge=1, description="Latent rank L")
    alpha: Optional[float] = Field(None, gt=0, description="Beta prior alpha")
    beta: Optional[float] = Field(None, gt=0, description="Beta prior beta")
    eps_tolerance: Optional[float] = Field(None, gt=0, description="EM tolerance on epsilon")
    max_outer_iters: Optional[int] = Field(None, ge=1, description="EM iteration cap")
    seed: Optional[int] = Field(None, ge=0, description="Initialization seed")

    model_config = {
        "json_schema_extra": {
            "examples": [
                {"rows": [[1, 1, 0], [1, 1, 0], [0, 0, 1]], "rank": 2},
                {"rows": [[1, None, 0], [1, 1, None], [0, 0, 1]], "rank": 2, "seed": 7},
            ]
        }
    }


class FactorizeResponse(BaseModel):
    """Fitted factors, reconstruction and run summary."""

    mu: list[list[float]] = Field(..., description="Row factor probabilities (N x L)")
    zeta: list[list[float]] = Field(..., description="Column factor probabilities (M x L)")
    reconstruction: list[list[int]] = Field(..., description="Denoised binary reconstruction")
    report: FactorizationReport


class CompleteResponse(FactorizeResponse):
    """Factorization response plus the imputed missing cells."""

    completed: list[list[int]] = Field(..., description="Denoised matrix with missing cells imputed")
    imputed_cells: int = Field(..., description="Number of cells that were missing")


# Dependency injection
def get_config() -> ConfigurationSchema:
    """Get configuration instance."""
    try:
        return ConfigLoader.get_instance()
    except RuntimeError:
        return ConfigLoader.load(get_settings().config_path)


def get_factorization_service(
    config: ConfigurationSchema = Depends(get_config),
) -> FactorizationService:
    return FactorizationService(config)


def _fit(request: FactorizeRequest, service: FactorizationService) -> tuple[FitResult, FactorizationReport]:
    x = MatrixValidator.from_rows(request.rows)
    em_config = service.em_config(
        rank=request.rank,
        alpha=request.alpha,
        beta=request.beta,
        eps_tolerance=request.eps_tolerance,
        max_outer_iters=request.max_outer_iters,
        seed=request.seed,
    )
    return service.fit(x, em_config)


def _run(request: FactorizeRequest, service: FactorizationService) -> tuple[FitResult, FactorizationReport]:
    try:
        return _fit(request, service)

    except NumericalDomainError as e:
        logger.warning(f"Numerical failure at rank {request.rank}: {e}")
        raise HTTPException(status_code=422, detail=str(e))

    except ValueError as e:
        logger.warning(f"Invalid matrix input: {e}")
        raise HTTPException(status_code=400, detail=str(e))

    except Exception as e:
        logger.error(f"Factorization error: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail="Internal server error")


# Routes
@router.post(
    "/factorize",
    response_model=FactorizeResponse,
    status_code=200,
    summary="Factorize Binary Matrix",
    description="""Fit a noisy-OR factorization with EM noise estimation.

    Missing cells (null) are ignored by the fit. Returns the factor
    probabilities, the binary reconstruction and a run report.
    """,
    responses={
        400: {"description": "Malformed matrix or hyperparameters"},
        422: {"description": "Numerical failure during the fit"},
        500: {"description": "Internal server error"},
    },
)
async def factorize(
    request: FactorizeRequest,
    service: FactorizationService = Depends(get_factorization_service),
) -> FactorizeResponse:
    """Factorize a matrix given as rows."""
    result, report = _run(request, service)
    return FactorizeResponse(
        mu=result.mu.tolist(),
        zeta=result.zeta.tolist(),
        reconstruction=result.reconstruction.astype(int).tolist(),
        report=report,
    )


@router.post(
    "/complete",
    response_model=CompleteResponse,
    status_code=200,
    summary="Complete Binary Matrix",
    description="Impute missing (null) cells and denoise observed ones with the reconstruction.",
    responses={
        400: {"description": "Malformed matrix or hyperparameters"},
        422: {"description": "Numerical failure during the fit"},
        500: {"description": "Internal server error"},
    },
)
async def complete(
    request: FactorizeRequest,
    service: FactorizationService = Depends(get_factorization_service),
) -> CompleteResponse:
    """Every cell reports the denoised reconstruction, observed cells included."""
    result, report = _run(request, service)

    reconstruction = result.reconstruction.astype(int).tolist()
    imputed = sum(cell is None for row in request.rows for cell in row)
    return CompleteResponse(
        mu=result.mu.tolist(),
        zeta=result.zeta.tolist(),
        reconstruction=reconstruction,
        report=report,
        completed=reconstruction,
        imputed_cells=imputed,
    )


@router.get(
    "/health",
    status_code=200,
    summary="Health Check",
    description="Check if the API service is running and healthy.",
)
async def health_check() -> dict:
    """Health check endpoint."""
    return {"status": "healthy"}
