"""Wire schemas for the embedding service.

Request/response pairs are matched by the client-chosen "id" string, which
the server must echo verbatim. Every non-200 response carries a JSON body
with a single "error" field.
"""

from pydantic import BaseModel, Field


class InfoResponse(BaseModel):
    feature_dim: int = Field(ge=1)
    model: str


class EmbedRequest(BaseModel):
    id: str
    image_png_b64: str


class EmbedResponse(BaseModel):
    id: str
    dim: int = Field(ge=1)
    values: list[float]


class ScoresRequest(BaseModel):
    id: str
    image_png_b64: str
    labels: list[str] = Field(min_length=1)


class ScoresResponse(BaseModel):
    id: str
    scores: list[float]


class ErrorResponse(BaseModel):
    error: str
