"""Physically plausible adversarial patches for thermal imagery.

A patch is a curved grid: cell gates select which edges are drawn, and each
drawn edge bends along a quadratic curve. The package renders such patches,
pastes them onto image regions under simulated capture conditions, and
searches the gate/curvature genome with a self-adaptive evolution strategy
so that an encoder's view of the region leaves the clean feature manifold.
"""

from .compose import ContextStats, PasteConfig, PasteResult, context_stats, paste
from .config import RunConfig, build_encoder, default_config_doc, load_run_config
from .core import (
    Dataset,
    DatasetItem,
    IrImage,
    LoadedSample,
    Roi,
    crop,
    load_image,
    load_manifest,
    load_samples,
    save_image,
    save_manifest,
    unit_normalize,
)
from .encoders import DEFAULT_LABELS, Encoder, RemoteEncoder, ToyEncoder, area_resize
from .errors import (
    ConfigError,
    EncoderError,
    ImageReadError,
    IrPatchError,
    ManifestError,
    MissingInputError,
    PasteError,
    ReferenceError_,
    RemoteProtocolError,
    RoiError,
    SearchError,
    StatsError,
    TopologyError,
    UnsupportedImageError,
)
from .grid import (
    GridConfig,
    PatchParams,
    RenderedPatch,
    check_topology,
    decode,
    export_vector,
    genome_dim,
    load_patch,
    render,
    save_patch,
)
from .metrics import (
    AttackOutcome,
    MetricSummary,
    SweepCell,
    eval_sample,
    summarize,
    transfer_sweep,
    write_outcomes_csv,
    write_summary_json,
    write_sweep_csv,
    write_sweep_json,
)
from .objective import (
    BudgetTerms,
    EvalSetup,
    FitnessReport,
    ObjectiveWeights,
    evaluate_candidate,
    loss_budget,
    loss_subspace,
    loss_topology,
)
from .reference import (
    CleanReference,
    build_reference,
    load_reference,
    neighborhood_distribution,
    save_reference,
    subspace_residual,
)
from .search import DeConfig, GenRecord, RunResult, SearchProblem, run
from .synth import SynthConfig, generate_dataset, synth_image
from .transforms import (
    AugmentConfig,
    TransformSpec,
    apply,
    expected_loss,
    identity_augment_config,
    sample_transform,
    tps_fit,
    tps_warp,
)

__version__ = "0.1.0"

__all__ = [
    "AttackOutcome",
    "AugmentConfig",
    "BudgetTerms",
    "GridConfig",
    "CleanReference",
    "ConfigError",
    "ContextStats",
    "Dataset",
    "DatasetItem",
    "DeConfig",
    "DEFAULT_LABELS",
    "Encoder",
    "EncoderError",
    "EvalSetup",
    "FitnessReport",
    "GenRecord",
    "ImageReadError",
    "IrImage",
    "IrPatchError",
    "LoadedSample",
    "ManifestError",
    "MetricSummary",
    "MissingInputError",
    "ObjectiveWeights",
    "PasteConfig",
    "PasteError",
    "PasteResult",
    "PatchParams",
    "ReferenceError_",
    "RemoteEncoder",
    "RemoteProtocolError",
    "RenderedPatch",
    "Roi",
    "RoiError",
    "RunConfig",
    "RunResult",
    "SearchError",
    "SearchProblem",
    "StatsError",
    "SweepCell",
    "SynthConfig",
    "TopologyError",
    "ToyEncoder",
    "TransformSpec",
    "UnsupportedImageError",
    "apply",
    "area_resize",
    "build_encoder",
    "build_reference",
    "check_topology",
    "context_stats",
    "crop",
    "decode",
    "default_config_doc",
    "eval_sample",
    "evaluate_candidate",
    "expected_loss",
    "export_vector",
    "generate_dataset",
    "genome_dim",
    "identity_augment_config",
    "load_image",
    "load_manifest",
    "load_patch",
    "load_reference",
    "load_run_config",
    "load_samples",
    "loss_budget",
    "loss_subspace",
    "loss_topology",
    "neighborhood_distribution",
    "paste",
    "render",
    "run",
    "sample_transform",
    "save_image",
    "save_manifest",
    "save_patch",
    "save_reference",
    "subspace_residual",
    "summarize",
    "synth_image",
    "tps_fit",
    "tps_warp",
    "transfer_sweep",
    "unit_normalize",
    "write_outcomes_csv",
    "write_summary_json",
    "write_sweep_csv",
    "write_sweep_json",
]
