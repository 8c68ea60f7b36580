"""FastAPI application factory.

Endpoints are plain (non-async) functions so the framework runs them on
its worker threadpool; the backend's inference lock is the only point of
serialization. Every failure path is normalized to {"error": str}: 400
for malformed requests, 500 for inference faults, framework defaults
(404, 405, schema validation) rewritten to the same shape.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from .backend import BackendError, BadImageError, decode_image
from .schemas import EmbedRequest, EmbedResponse, InfoResponse, ScoresRequest, ScoresResponse


def create_app(backend) -> FastAPI:
    app = FastAPI(title="ir-encoder-server", docs_url=None, redoc_url=None)

    @app.get("/info", response_model=InfoResponse)
    def info() -> InfoResponse:
        return InfoResponse(feature_dim=backend.feature_dim, model=backend.model_name)

    @app.post("/embed", response_model=EmbedResponse)
    def embed(req: EmbedRequest) -> EmbedResponse:
        z = backend.embed(decode_image(req.image_png_b64))
        return EmbedResponse(id=req.id, dim=len(z), values=z.tolist())

    @app.post("/scores", response_model=ScoresResponse)
    def scores(req: ScoresRequest) -> ScoresResponse:
        s = backend.scores(decode_image(req.image_png_b64), list(req.labels))
        return ScoresResponse(id=req.id, scores=s.tolist())

    @app.exception_handler(RequestValidationError)
    async def on_validation(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(BadImageError)
    async def on_bad_image(request: Request, exc: BadImageError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(StarletteHTTPException)
    async def on_http(request: Request, exc: StarletteHTTPException):
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc.detail)})

    @app.exception_handler(BackendError)
    async def on_backend(request: Request, exc: BackendError):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def on_crash(request: Request, exc: Exception):
        return JSONResponse(
            status_code=500,
            content={"error": f"inference failure: {type(exc).__name__}: {exc}"},
        )

    return app
