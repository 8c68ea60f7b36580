"""Attack evaluation: per-sample outcomes, summaries, transfer sweeps.

Evaluation scores ROI crops, clean versus pasted, through the encoder's
class scores. Success means the adversarial top-1 moved off the target
category (argmax ties resolve to the earlier label). Alongside the attack
success rate the summary tracks how far the detector's target evidence
dropped, how much the strongest competing category gained, and the final
margin between them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .compose import PasteConfig, paste
from .core import IrImage, Roi, crop
from .encoders import Encoder
from .grid import GridConfig, PatchParams


@dataclass(frozen=True)
class AttackOutcome:
    sample_id: str
    target: str
    labels: tuple[str, ...]
    clean_scores: tuple[float, ...]
    adv_scores: tuple[float, ...]
    clean_top1: str
    adv_top1: str
    success: bool
    ds_target: float  # competing-category score gain under attack
    m_adv: float  # adversarial margin: competitor minus target, post-attack


@dataclass(frozen=True)
class MetricSummary:
    n: int
    asr: float  # percent of samples whose adv top-1 left the target
    clean_acc: float  # fraction of clean top-1 == target
    adv_acc: float
    rel_drop: float | None  # percent drop of target accuracy; None if clean_acc == 0
    mean_ds_target: float
    mean_m_adv: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "asr": self.asr,
            "clean_acc": self.clean_acc,
            "adv_acc": self.adv_acc,
            "rel_drop": self.rel_drop,
            "mean_ds_target": self.mean_ds_target,
            "mean_m_adv": self.mean_m_adv,
        }


def eval_sample(
    encoder: Encoder,
    x: IrImage,
    roi: Roi,
    p: PatchParams,
    grid_cfg: GridConfig,
    paste_cfg: PasteConfig,
    target: str,
    sample_id: str,
) -> AttackOutcome:
    """Score one sample clean and patched; both views are the ROI crop."""
    labels = encoder.class_labels
    if not labels:
        raise ValueError("encoder has no class labels configured")
    if target not in labels:
        raise ValueError(f"target {target!r} not among encoder labels")

    clean_scores = np.asarray(encoder.class_scores(crop(x, roi)), dtype=np.float64)
    pr = paste(x, p, grid_cfg, roi, paste_cfg)
    adv_scores = np.asarray(encoder.class_scores(crop(pr.image, roi)), dtype=np.float64)

    clean_top1 = labels[int(np.argmax(clean_scores))]
    adv_top1 = labels[int(np.argmax(adv_scores))]

    t = labels.index(target)
    non_target = [i for i in range(len(labels)) if i != t]
    c_star = non_target[int(np.argmax(adv_scores[non_target]))]

    return AttackOutcome(
        sample_id=sample_id,
        target=target,
        labels=tuple(labels),
        clean_scores=tuple(float(v) for v in clean_scores),
        adv_scores=tuple(float(v) for v in adv_scores),
        clean_top1=clean_top1,
        adv_top1=adv_top1,
        success=adv_top1 != target,
        ds_target=float(adv_scores[c_star] - clean_scores[c_star]),
        m_adv=float(adv_scores[c_star] - adv_scores[t]),
    )


def summarize(outcomes: list[AttackOutcome]) -> MetricSummary:
    """Aggregate outcomes sharing one target category."""
    if not outcomes:
        raise ValueError("cannot summarize zero outcomes")
    targets = {o.target for o in outcomes}
    if len(targets) != 1:
        raise ValueError(f"outcomes mix targets: {sorted(targets)}")
    target = outcomes[0].target
    n = len(outcomes)
    clean_acc = sum(o.clean_top1 == target for o in outcomes) / n
    adv_acc = sum(o.adv_top1 == target for o in outcomes) / n
    asr = 100.0 * sum(o.success for o in outcomes) / n
    rel_drop = None if clean_acc == 0.0 else 100.0 * (clean_acc - adv_acc) / clean_acc
    return MetricSummary(
        n=n,
        asr=asr,
        clean_acc=clean_acc,
        adv_acc=adv_acc,
        rel_drop=rel_drop,
        mean_ds_target=float(np.mean([o.ds_target for o in outcomes])),
        mean_m_adv=float(np.mean([o.m_adv for o in outcomes])),
    )


OUTCOME_CSV_COLUMNS = ("sample_id", "clean_top1", "adv_top1", "success", "ds_target", "m_adv")


def write_outcomes_csv(outcomes: list[AttackOutcome], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(OUTCOME_CSV_COLUMNS)
        for o in outcomes:
            w.writerow([
                o.sample_id, o.clean_top1, o.adv_top1,
                "true" if o.success else "false",
                repr(o.ds_target), repr(o.m_adv),
            ])


def write_summary_json(summary: MetricSummary, path: str) -> None:
    with open(path, "w") as f:
        json.dump(summary.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


@dataclass(frozen=True)
class SweepCell:
    dataset: str
    encoder: str
    summary: MetricSummary | None
    error: str | None
    encoder_info: str = ""  # backend identity from Encoder.describe()


def transfer_sweep(
    p: PatchParams,
    grid_cfg: GridConfig,
    paste_cfg: PasteConfig,
    datasets: list[tuple[str, list]],  # (name, [(sample_id, IrImage, Roi, target), ...])
    encoders: list[tuple[str, Encoder]],
) -> list[SweepCell]:
    """Evaluate one patch over every dataset x encoder cell.

    A failing cell records its error and the sweep continues; partial
    matrices are still useful transfer evidence.
    """
    cells = []
    for ds_name, samples in datasets:
        for enc_name, enc in encoders:
            info = enc.describe()
            try:
                outcomes = [
                    eval_sample(enc, img, roi, p, grid_cfg, paste_cfg, target, sid)
                    for sid, img, roi, target in samples
                ]
                cells.append(SweepCell(ds_name, enc_name, summarize(outcomes), None, info))
            except Exception as e:  # noqa: BLE001 - cell isolation is the contract
                cells.append(SweepCell(ds_name, enc_name, None,
                                       f"{type(e).__name__}: {e}", info))
    return cells


def write_sweep_json(cells: list[SweepCell], path: str) -> None:
    doc = [
        {
            "dataset": c.dataset,
            "encoder": c.encoder,
            "encoder_info": c.encoder_info,
            "summary": c.summary.to_dict() if c.summary else None,
            "error": c.error,
        }
        for c in cells
    ]
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def write_sweep_csv(cells: list[SweepCell], path: str) -> None:
    """Matrix of ASR values, datasets as rows, encoders as columns."""
    ds_names = list(dict.fromkeys(c.dataset for c in cells))
    enc_names = list(dict.fromkeys(c.encoder for c in cells))
    lookup = {(c.dataset, c.encoder): c for c in cells}
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["dataset"] + enc_names)
        for ds in ds_names:
            row = [ds]
            for en in enc_names:
                c = lookup.get((ds, en))
                if c is None:
                    row.append("")
                elif c.error is not None:
                    row.append(f"error: {c.error}")
                else:
                    row.append(repr(c.summary.asr))
            w.writerow(row)
