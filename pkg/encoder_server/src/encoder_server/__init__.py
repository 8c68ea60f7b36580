"""HTTP embedding service for infrared imagery.

Wraps a CLIP-family vision tower behind three JSON endpoints: GET /info
reports the feature dimension and model identity, POST /embed returns an
L2-normalized pooled image feature, POST /scores returns temperature-scaled
cosine logits against text prompts built from a configurable template.
Grayscale payloads (16-bit PNG from thermal sensors) are replicated to
three channels before standard CLIP preprocessing, so clients never need
model-specific resizing.
"""

from .app import create_app
from .backend import BackendError, BadImageError, ClipBackend, decode_image
from .schemas import (
    EmbedRequest,
    EmbedResponse,
    ErrorResponse,
    InfoResponse,
    ScoresRequest,
    ScoresResponse,
)

__all__ = [
    "BackendError",
    "BadImageError",
    "ClipBackend",
    "EmbedRequest",
    "EmbedResponse",
    "ErrorResponse",
    "InfoResponse",
    "ScoresRequest",
    "ScoresResponse",
    "create_app",
    "decode_image",
]
