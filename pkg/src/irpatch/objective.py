"""Representation-space attack objective.

Three terms, all computed from encoder features and paste statistics with
no access to model internals:

- subspace departure: negated mean squared residual of adversarial features
  outside the clean top-k subspace (lower is better for the attacker);
- neighborhood disruption: negated KL divergence between the clean affinity
  graph (restricted to the batch) and the adversarial one built with the
  frozen clean kernel scale;
- stealth budget: thermal contrast against the background ring, boundary
  gradient excess, and squared area fraction, which keeps patches
  manufacturable and inconspicuous.

evaluate_candidate runs the full pipeline for one genome over a sample
batch: decode, paste, simulate capture conditions, encode, aggregate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compose import PasteConfig, PasteResult, context_stats, paste
from .core import LoadedSample, crop
from .encoders import Encoder
from .errors import SearchError, StatsError
from .grid import GridConfig, decode, render
from .reference import CleanReference, Q_FLOOR, neighborhood_distribution
from .transforms import AugmentConfig, apply, sample_transform


@dataclass(frozen=True)
class ObjectiveWeights:
    lambda_topo: float = 0.12
    lambda_budget: float = 0.03

    def __post_init__(self):
        if self.lambda_topo < 0 or self.lambda_budget < 0:
            raise ValueError("objective weights must be >= 0")


@dataclass(frozen=True)
class BudgetTerms:
    """Stealth budget decomposition; total is the sum of the three parts."""

    therm: float
    edge: float
    area: float

    @property
    def total(self) -> float:
        return self.therm + self.edge + self.area


@dataclass(frozen=True)
class FitnessReport:
    """One candidate's losses over a batch. Lower total is a stronger attack."""

    l_subspace: float
    l_topo: float
    l_budget: BudgetTerms
    total: float
    per_sample_residuals: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "l_subspace": self.l_subspace,
            "l_topo": self.l_topo,
            "l_budget": {
                "therm": self.l_budget.therm,
                "edge": self.l_budget.edge,
                "area": self.l_budget.area,
                "total": self.l_budget.total,
            },
            "total": self.total,
            "per_sample_residuals": list(self.per_sample_residuals),
        }


@dataclass(frozen=True)
class EvalSetup:
    """Configuration bundle for candidate evaluation."""

    grid: GridConfig
    paste: PasteConfig
    augment: AugmentConfig
    weights: ObjectiveWeights
    n_eot: int = 4

    def __post_init__(self):
        if self.n_eot < 1:
            raise ValueError(f"n_eot must be >= 1, got {self.n_eot}")


def loss_subspace(ref: CleanReference, feats: np.ndarray) -> float:
    """Negated mean squared residual outside the clean subspace."""
    x = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    v = x - ref.mean
    proj = v @ ref.basis
    residuals = np.maximum((v * v).sum(axis=1) - (proj * proj).sum(axis=1), 0.0)
    return -float(residuals.mean())


def loss_topology(
    ref: CleanReference,
    adv_feats: np.ndarray,
    indices: tuple[int, ...] | None = None,
) -> float:
    """Negated KL(P || Q) between clean and adversarial affinity graphs.

    P is the reference distribution restricted to `indices` (renormalized);
    Q is built from the adversarial features with the frozen clean kernel
    scale, floored at 1e-12. Zero P entries contribute nothing.
    """
    adv = np.atleast_2d(np.asarray(adv_feats, dtype=np.float64))
    if indices is None:
        if adv.shape[0] != ref.n:
            raise ValueError(
                f"adversarial count {adv.shape[0]} != reference count {ref.n}; pass indices"
            )
        p = ref.p_matrix
    else:
        idx = np.asarray(indices, dtype=int)
        if len(idx) != adv.shape[0]:
            raise ValueError(f"got {adv.shape[0]} features for {len(idx)} indices")
        if len(idx) < 2:
            raise ValueError("topology term needs at least 2 samples")
        sub = ref.p_matrix[np.ix_(idx, idx)]
        total = sub.sum()
        if total <= 0.0:
            raise ValueError("reference affinity mass is zero on this batch")
        p = sub / total
    q = np.maximum(neighborhood_distribution(adv, ref.kernel_scale), Q_FLOOR)
    mask = p > 0.0
    kl = float((p[mask] * np.log(p[mask] / q[mask])).sum())
    return -kl


def loss_budget(r: PasteResult, cfg: PasteConfig) -> BudgetTerms:
    """Stealth penalty of one paste: thermal contrast, edge excess, area.

    A patch that draws nothing (or too faintly to anchor a background
    ring) adds no material to the scene, so the contrast and edge terms
    vanish; only the area term survives, and it is zero for empty alpha.
    The fitness stays finite everywhere in the genome box this way.
    """
    area = (float(r.alpha.sum()) / r.roi.area) ** 2
    try:
        s = context_stats(r, cfg)
    except StatsError:
        return BudgetTerms(therm=0.0, edge=0.0, area=float(area))
    therm = (s.mu_patch - s.mu_ring) ** 2 + (s.sigma_patch - s.sigma_ring) ** 2
    edge = max(0.0, s.grad_edge - s.grad_ring)
    return BudgetTerms(therm=float(therm), edge=float(edge), area=float(area))


def evaluate_candidate(
    genome: np.ndarray,
    samples: list[LoadedSample],
    indices: tuple[int, ...],
    ref: CleanReference,
    setup: EvalSetup,
    encoder: Encoder,
    seed: int,
) -> FitnessReport:
    """Full pipeline for one genome over a batch of sample indices.

    Samples must align index-for-index with the reference feature list (the
    topology term pairs batch rows against the matching reference rows).
    Each sample is pasted, its ROI crop passed through n_eot seeded capture
    transforms and encoded; subspace residuals average over every draw,
    topology compares per-sample mean features, budget terms average over
    the untransformed pastes. Deterministic in (genome, batch, seed).
    """
    if len(indices) < 2:
        raise SearchError("batch must contain at least 2 samples")
    if len(samples) != ref.n:
        raise SearchError(
            f"dataset size {len(samples)} != reference size {ref.n}; "
            "the optimization set must be the reference set"
        )
    p = decode(np.asarray(genome, dtype=np.float64), setup.grid)
    render_cache: dict[int, object] = {}

    per_sample_resid = []
    mean_feats = []
    therm_sum = edge_sum = area_sum = 0.0
    for idx in indices:
        s = samples[idx]
        side = int(round(s.roi.h * setup.paste.patch_side_ratio))
        rp = render_cache.get(side)
        if rp is None:
            rp = render(p, setup.grid, side)
            render_cache[side] = rp
        pr = paste(s.image, p, setup.grid, s.roi, setup.paste, prerendered=rp)
        bud = loss_budget(pr, setup.paste)
        therm_sum += bud.therm
        edge_sum += bud.edge
        area_sum += bud.area

        adv_crop = crop(pr.image, s.roi)
        feats = []
        for t in range(setup.n_eot):
            spec = sample_transform(setup.augment, seed + idx * setup.n_eot + t)
            feats.append(encoder.encode(apply(spec, adv_crop)))
        feats = np.stack(feats)
        resid = -loss_subspace(ref, feats)  # mean residual of this sample's draws
        per_sample_resid.append(resid)
        mean_feats.append(feats.mean(axis=0))

    b = len(indices)
    l_sub = -float(np.mean(per_sample_resid))
    l_topo = loss_topology(ref, np.stack(mean_feats), indices)
    l_bud = BudgetTerms(therm=therm_sum / b, edge=edge_sum / b, area=area_sum / b)
    total = l_sub + setup.weights.lambda_topo * l_topo + setup.weights.lambda_budget * l_bud.total
    return FitnessReport(
        l_subspace=l_sub,
        l_topo=l_topo,
        l_budget=l_bud,
        total=total,
        per_sample_residuals=tuple(per_sample_resid),
    )
