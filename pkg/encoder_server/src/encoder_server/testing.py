"""Test support: a tiny randomly initialized CLIP stack and payload helpers.

The tiny model keeps the full architecture (text tower, vision tower,
projections, logit scale) at toy widths with a character-level tokenizer,
so protocol tests exercise the identical inference path as a real
checkpoint without weights or network access. Nothing here is needed at
serving time.
"""

from __future__ import annotations

import base64
import io
import json
import os
import string
import tempfile

import numpy as np
import torch
from PIL import Image

from .backend import ClipBackend

TINY_DIM = 16


def write_char_tokenizer(dirpath: str) -> tuple[str, str]:
    """Write a character-level CLIP vocab/merges pair, return the paths.

    Every ascii letter and digit appears both mid-word and word-final
    (the "</w>" form), so any alphanumeric prompt tokenizes without
    unknown tokens and without BPE merges.
    """
    tokens = ["<|startoftext|>", "<|endoftext|>"]
    for ch in string.ascii_lowercase + string.digits:
        tokens.append(ch)
        tokens.append(ch + "</w>")
    vocab = {t: i for i, t in enumerate(tokens)}
    vocab_path = os.path.join(dirpath, "vocab.json")
    merges_path = os.path.join(dirpath, "merges.txt")
    with open(vocab_path, "w") as f:
        json.dump(vocab, f)
    with open(merges_path, "w") as f:
        f.write("#version: 0.2\n")
    return vocab_path, merges_path


def tiny_backend(cache_dir: str | None = None, seed: int = 1,
                 template: str | None = None) -> ClipBackend:
    """Randomly initialized CLIP backend with projection dim 16."""
    from transformers import (
        CLIPConfig,
        CLIPImageProcessor,
        CLIPModel,
        CLIPProcessor,
        CLIPTextConfig,
        CLIPTokenizer,
        CLIPVisionConfig,
    )

    if cache_dir is None:
        cache_dir = tempfile.mkdtemp(prefix="tiny_clip_")
    vocab_path, merges_path = write_char_tokenizer(cache_dir)
    tokenizer = CLIPTokenizer(vocab_path, merges_path)
    vocab = tokenizer.get_vocab()

    text_cfg = CLIPTextConfig(
        vocab_size=len(vocab), hidden_size=32, intermediate_size=64,
        num_hidden_layers=2, num_attention_heads=2,
        max_position_embeddings=77, projection_dim=TINY_DIM,
        bos_token_id=vocab["<|startoftext|>"],
        eos_token_id=vocab["<|endoftext|>"],
        pad_token_id=vocab["<|endoftext|>"],
    )
    vision_cfg = CLIPVisionConfig(
        hidden_size=32, intermediate_size=64, num_hidden_layers=2,
        num_attention_heads=2, image_size=32, patch_size=8,
        projection_dim=TINY_DIM,
    )
    cfg = CLIPConfig(text_config=text_cfg.to_dict(),
                     vision_config=vision_cfg.to_dict(),
                     projection_dim=TINY_DIM)
    torch.manual_seed(seed)
    model = CLIPModel(cfg)
    processor = CLIPProcessor(
        image_processor=CLIPImageProcessor(
            size={"shortest_edge": 32}, crop_size={"height": 32, "width": 32},
        ),
        tokenizer=tokenizer,
    )
    kwargs = {} if template is None else {"template": template}
    return ClipBackend(model, processor, "tiny-clip [stock weights]", **kwargs)


def png_b64(data: np.ndarray, bit_depth: int = 16) -> str:
    """Encode a float image in [0, 1] as a base64 PNG payload.

    2D arrays become grayscale (8- or 16-bit per bit_depth); HxWx3 arrays
    become 8-bit RGB.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 3:
        q = np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)
    elif bit_depth == 16:
        q = np.round(np.clip(data, 0.0, 1.0) * 65535.0).astype(np.uint16)
    elif bit_depth == 8:
        q = np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)
    else:
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    buf = io.BytesIO()
    Image.fromarray(q).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")
