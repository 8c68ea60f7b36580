"""Run configuration: one JSON file drives every pipeline command.

Every section is optional except the seed; omitted sections fall back to
the shipped defaults (5x5 grid, 0.40 curvature limit, 0.20 line width,
black patch, 0.25 side ratio, population 50, 100 generations, topology
weight 0.12, budget weight 0.03). Unknown keys are rejected so typos fail
loudly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any

from .compose import PasteConfig
from .encoders import DEFAULT_LABELS, Encoder, RemoteEncoder, ToyEncoder
from .errors import ConfigError
from .grid import GridConfig
from .objective import ObjectiveWeights
from .search import DeConfig
from .synth import SynthConfig
from .transforms import AugmentConfig

_TUPLE_FIELDS = {
    PasteConfig: ("boundary_band",),
    AugmentConfig: ("blur_sigma", "noise_sigma", "quantize_levels", "contrast"),
    DeConfig: ("f_range", "cr_range"),
}


def _build_section(cls, doc: Any, name: str):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    kwargs = dict(doc)
    for tf in _TUPLE_FIELDS.get(cls, ()):
        if tf in kwargs and isinstance(kwargs[tf], list):
            kwargs[tf] = tuple(kwargs[tf])
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"config section '{name}': {e}") from e
    except ValueError as e:
        raise ConfigError(f"config section '{name}': {e}") from e


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out: str | None = None
    dataset: str | None = None
    clean: str | None = None
    reference: str | None = None
    k: int = 8
    n_eot: int = 4
    encoder: dict = field(default_factory=lambda: {"kind": "toy"})
    grid: GridConfig = field(default_factory=GridConfig)
    paste: PasteConfig = field(default_factory=PasteConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    search: DeConfig = field(default_factory=DeConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    sweep: dict | None = None

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.n_eot < 1:
            raise ConfigError(f"n_eot must be >= 1, got {self.n_eot}")
        if self.grid.curvature_limit >= 0.5:
            raise ConfigError(
                f"curvature_limit {self.grid.curvature_limit} >= 0.5 is not deployable: "
                "edge curves may self-intersect"
            )


_KNOWN_KEYS = {
    "seed", "out", "dataset", "clean", "reference", "k", "n_eot",
    "encoder", "grid", "paste", "augment", "weights", "search", "synth", "sweep",
}


def load_run_config(path: str) -> RunConfig:
    """Parse and validate a config file. Path problems surface per-command."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"config {path} has unknown keys: {sorted(unknown)}")
    if "seed" not in doc:
        raise ConfigError(f"config {path} must set an explicit seed")

    base = os.path.dirname(os.path.abspath(path))

    def _resolve(p):
        if p is None:
            return None
        if not isinstance(p, str) or not p:
            raise ConfigError(f"config {path}: paths must be non-empty strings, got {p!r}")
        return p if os.path.isabs(p) else os.path.join(base, p)

    sweep = doc.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict):
            raise ConfigError(f"config {path}: 'sweep' must be an object")
        ds = sweep.get("datasets")
        encs = sweep.get("encoders")
        if not isinstance(ds, list) or not ds or not isinstance(encs, list) or not encs:
            raise ConfigError(
                f"config {path}: sweep needs non-empty 'datasets' and 'encoders' lists"
            )
        sweep = {"datasets": [_resolve(p) for p in ds], "encoders": encs}

    encoder = doc.get("encoder", {"kind": "toy"})
    if not isinstance(encoder, dict):
        raise ConfigError(f"config {path}: 'encoder' must be an object")

    return RunConfig(
        seed=doc["seed"],
        out=_resolve(doc.get("out")),
        dataset=_resolve(doc.get("dataset")),
        clean=_resolve(doc.get("clean")),
        reference=_resolve(doc.get("reference")),
        k=doc.get("k", 8),
        n_eot=doc.get("n_eot", 4),
        encoder=encoder,
        grid=_build_section(GridConfig, doc.get("grid"), "grid"),
        paste=_build_section(PasteConfig, doc.get("paste"), "paste"),
        augment=_build_section(AugmentConfig, doc.get("augment"), "augment"),
        weights=_build_section(ObjectiveWeights, doc.get("weights"), "weights"),
        search=_build_section(DeConfig, doc.get("search"), "search"),
        synth=_build_section(SynthConfig, doc.get("synth"), "synth"),
        sweep=sweep,
    )


def build_encoder(spec: dict) -> Encoder:
    """Instantiate an encoder from its config object."""
    if not isinstance(spec, dict):
        raise ConfigError(f"encoder spec must be an object, got {spec!r}")
    kind = spec.get("kind")
    known = dict(spec)
    known.pop("kind", None)
    if kind == "toy":
        allowed = {"seed", "feature_dim", "labels"}
        extra = set(known) - allowed
        if extra:
            raise ConfigError(f"toy encoder spec has unknown keys: {sorted(extra)}")
        labels = known.get("labels", list(DEFAULT_LABELS))
        if not isinstance(labels, (list, tuple)) or not all(isinstance(x, str) for x in labels):
            raise ConfigError("toy encoder labels must be a list of strings")
        try:
            return ToyEncoder(
                seed=known.get("seed", 0),
                feature_dim=known.get("feature_dim", 32),
                labels=tuple(labels),
            )
        except ValueError as e:
            raise ConfigError(f"toy encoder spec: {e}") from e
    if kind == "remote":
        allowed = {"url", "labels", "timeout", "max_inflight"}
        extra = set(known) - allowed
        if extra:
            raise ConfigError(f"remote encoder spec has unknown keys: {sorted(extra)}")
        url = known.get("url")
        if not isinstance(url, str) or not url:
            raise ConfigError("remote encoder spec needs a non-empty 'url'")
        labels = known.get("labels")
        return RemoteEncoder(
            base_url=url,
            labels=tuple(labels) if labels else None,
            timeout=known.get("timeout", 30.0),
            max_inflight=known.get("max_inflight", 8),
        )
    raise ConfigError(f"unknown encoder kind {kind!r} (expected 'toy' or 'remote')")


def default_config_doc(seed: int, dataset: str, clean: str, out: str,
                       encoder: dict | None = None) -> dict:
    """Full config dict with every default written out explicitly."""
    return {
        "seed": seed,
        "out": out,
        "dataset": dataset,
        "clean": clean,
        "k": 8,
        "n_eot": 4,
        "encoder": encoder or {"kind": "toy", "seed": 0, "feature_dim": 32},
        "grid": {
            "grid_dim": 5,
            "curvature_limit": 0.40,
            "line_width_ratio": 0.20,
            "patch_intensity": 0.0,
            "supersample": 4,
        },
        "paste": {
            "patch_side_ratio": 0.25,
            "anchor_ratio": 0.30,
            "ring_width_ratio": 0.15,
            "support_threshold": 0.05,
            "boundary_band": [0.05, 0.95],
        },
        "augment": {
            "scale_jitter": 0.10,
            "rotation_deg": 5.0,
            "corner_jitter": 0.03,
            "translate_px": 4.0,
            "tps_points": 9,
            "tps_disp": 0.05,
            "blur_sigma": [0.0, 1.5],
            "noise_sigma": [0.0, 0.03],
            "quantize_levels": [32, 256],
            "brightness": 0.08,
            "contrast": [0.9, 1.1],
        },
        "weights": {"lambda_topo": 0.12, "lambda_budget": 0.03},
        "search": {"population": 50, "generations": 100},
        "synth": {"n_images": 32, "height": 96, "width": 96},
    }
