"""Command line front end for the patch pipeline.

Subcommands:
  synth     generate a labeled synthetic thermal dataset
  stats     build and save the clean feature reference
  optimize  search for a patch against an encoder
  evaluate  attack metrics for a saved patch on a dataset
  render    raster preview of a saved patch
  export    vector (SVG) export of a saved patch
  paste     composite preview of the patch on one sample
  sweep     transfer matrix of one patch across datasets x encoders

All outputs land under the output directory (config "out" or --out).
Exit codes: 0 success, 1 config error, 2 missing input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .compose import context_stats, paste
from .config import RunConfig, build_encoder, load_run_config
from .core import IrImage, crop, load_manifest, load_samples, save_image
from .errors import ConfigError, IrPatchError, MissingInputError
from .grid import check_topology, decode, export_vector, genome_dim, load_patch, render, save_patch
from .metrics import (
    eval_sample,
    summarize,
    transfer_sweep,
    write_outcomes_csv,
    write_summary_json,
    write_sweep_csv,
    write_sweep_json,
)
from .objective import EvalSetup, evaluate_candidate
from .reference import build_reference, load_reference, save_reference
from .rng import STREAM_EVAL, substream_seed
from .search import SearchProblem, run
from .synth import generate_dataset


def _out_dir(cfg: RunConfig, args) -> str:
    out = args.out or cfg.out
    if out is None:
        raise ConfigError("no output directory: set 'out' in the config or pass --out")
    os.makedirs(out, exist_ok=True)
    return out


def _need(path: str | None, what: str) -> str:
    if path is None:
        raise ConfigError(f"config must set '{what}' for this command")
    if not os.path.isfile(path):
        raise MissingInputError(f"{what} not found: {path}")
    return path


def _load_dataset(manifest_path: str):
    ds = load_manifest(manifest_path)
    for it in ds.items:
        if not os.path.isfile(it.image):
            raise MissingInputError(f"image not found: {it.image}")
    return ds


def _patch_path(cfg: RunConfig, args) -> str:
    cand = args.patch or os.path.join(args.out or cfg.out or "", "patch.json")
    return _need(cand if cand != "" else None, "patch")


def _sample_id(i: int, path: str) -> str:
    stem = os.path.splitext(os.path.basename(path))[0]
    return f"{i:04d}_{stem}"


def cmd_synth(cfg: RunConfig, args, seed: int) -> int:
    out = _out_dir(cfg, args)
    enc = build_encoder(cfg.encoder)
    manifest = generate_dataset(cfg.synth, out, seed, encoder=enc)
    print(f"wrote {manifest}")
    return 0


def cmd_stats(cfg: RunConfig, args, seed: int) -> int:
    out = _out_dir(cfg, args)
    path = _need(cfg.clean or cfg.dataset, "clean")
    ds = _load_dataset(path)
    samples = [s for s in load_samples(ds) if s.clean]
    if len(samples) < 2:
        raise ConfigError(f"manifest {path} has {len(samples)} clean samples, need >= 2")
    enc = build_encoder(cfg.encoder)
    feats = np.stack([enc.encode(crop(s.image, s.roi)) for s in samples])
    ref = build_reference(feats, k=cfg.k)
    ref_path = os.path.join(out, "reference.json")
    save_reference(ref, ref_path)
    print(f"reference: n={ref.n} dim={ref.dim} k={ref.k} kernel_scale={ref.kernel_scale:.6g}")
    print(f"wrote {ref_path}")
    return 0


def cmd_optimize(cfg: RunConfig, args, seed: int) -> int:
    out = _out_dir(cfg, args)
    ds = _load_dataset(_need(cfg.dataset, "dataset"))
    samples = load_samples(ds)
    enc = build_encoder(cfg.encoder)

    if cfg.reference is not None:
        ref = load_reference(_need(cfg.reference, "reference"))
    else:
        feats = np.stack([enc.encode(crop(s.image, s.roi)) for s in samples])
        ref = build_reference(feats, k=cfg.k)
        save_reference(ref, os.path.join(out, "reference.json"))
    if ref.n != len(samples):
        raise ConfigError(
            f"reference has {ref.n} samples but dataset has {len(samples)}; "
            "the optimization set must equal the reference set"
        )

    setup = EvalSetup(grid=cfg.grid, paste=cfg.paste, augment=cfg.augment,
                      weights=cfg.weights, n_eot=cfg.n_eot)

    def fitness(genome: np.ndarray, batch: tuple[int, ...], eval_seed: int) -> float:
        return evaluate_candidate(genome, samples, batch, ref, setup, enc, eval_seed).total

    problem = SearchProblem(dim=genome_dim(cfg.grid), evaluate=fitness, n_items=len(samples))
    result = run(cfg.search, problem, seed, workers=args.workers)

    params = decode(result.best_genome, cfg.grid)
    patch_path = os.path.join(out, "patch.json")
    save_patch(params, cfg.grid, patch_path)

    hist_path = os.path.join(out, "history.jsonl")
    with open(hist_path, "w", newline="\n") as f:
        for r in result.history:
            f.write(json.dumps(
                {"gen": r.gen, "best": r.best, "mean": r.mean,
                 "evals": r.evals, "refreshed": r.refreshed},
                sort_keys=True) + "\n")

    # held-out seed: one generation past the last batch reseed
    final_seed = substream_seed(seed, STREAM_EVAL, cfg.search.generations)
    report = evaluate_candidate(result.best_genome, samples,
                                tuple(range(len(samples))), ref, setup, enc, final_seed)
    report_path = os.path.join(out, "report.json")
    with open(report_path, "w", newline="\n") as f:
        json.dump({
            "best_fitness": result.best_fitness,
            "evals": result.evals,
            "generations_run": len(result.history),
            "topology_ok": check_topology(params, cfg.grid),
            "final": report.to_dict(),
        }, f, indent=2, sort_keys=True)
        f.write("\n")

    print(f"best fitness {result.best_fitness:.6f} after {result.evals} evals")
    print(f"final full-set loss {report.total:.6f} "
          f"(subspace {report.l_subspace:.6f} topo {report.l_topo:.6f} "
          f"budget {report.l_budget.total:.6f})")
    for p in (patch_path, hist_path, report_path):
        print(f"wrote {p}")
    return 0


def cmd_evaluate(cfg: RunConfig, args, seed: int) -> int:
    out = _out_dir(cfg, args)
    ds = _load_dataset(_need(cfg.dataset, "dataset"))
    samples = load_samples(ds)
    enc = build_encoder(cfg.encoder)
    params, pcfg = load_patch(_patch_path(cfg, args))
    if ds.category not in enc.class_labels:
        raise ConfigError(
            f"dataset category {ds.category!r} is not among encoder labels"
        )
    outcomes = [
        eval_sample(enc, s.image, s.roi, params, pcfg, cfg.paste,
                    ds.category, _sample_id(i, s.path))
        for i, s in enumerate(samples)
    ]
    summary = summarize(outcomes)
    csv_path = os.path.join(out, "outcomes.csv")
    json_path = os.path.join(out, "metrics.json")
    write_outcomes_csv(outcomes, csv_path)
    write_summary_json(summary, json_path)
    rel = "n/a" if summary.rel_drop is None else f"{summary.rel_drop:.1f}%"
    print(f"ASR {summary.asr:.1f}%  clean acc {100 * summary.clean_acc:.1f}%  "
          f"adv acc {100 * summary.adv_acc:.1f}%  rel drop {rel}")
    print(f"mean target promotion {summary.mean_ds_target:.4f}  "
          f"mean adv margin {summary.mean_m_adv:.4f}")
    for p in (csv_path, json_path):
        print(f"wrote {p}")
    return 0


def cmd_render(cfg: RunConfig, args, seed: int) -> int:
    out = _out_dir(cfg, args)
    params, pcfg = load_patch(_patch_path(cfg, args))
    rp = render(params, pcfg, args.side)
    alpha_path = os.path.join(out, "render_alpha.png")
    prev_path = os.path.join(out, "render_preview.png")
    save_image(IrImage(rp.alpha), alpha_path, bit_depth=8)
    preview = (1.0 - rp.alpha) * 0.5 + rp.alpha * rp.intensity
    save_image(IrImage(preview), prev_path, bit_depth=8)
    for p in (alpha_path, prev_path):
        print(f"wrote {p}")
    return 0


def cmd_export(cfg: RunConfig, args, seed: int) -> int:
    out = _out_dir(cfg, args)
    params, pcfg = load_patch(_patch_path(cfg, args))
    svg = export_vector(params, pcfg)
    svg_path = os.path.join(out, "patch.svg")
    with open(svg_path, "w", newline="\n") as f:
        f.write(svg)
    print(f"wrote {svg_path}")
    return 0


def cmd_paste(cfg: RunConfig, args, seed: int) -> int:
    out = _out_dir(cfg, args)
    ds = _load_dataset(_need(cfg.dataset, "dataset"))
    samples = load_samples(ds)
    if not 0 <= args.index < len(samples):
        raise ConfigError(f"--index {args.index} out of range (dataset has {len(samples)})")
    params, pcfg = load_patch(_patch_path(cfg, args))
    s = samples[args.index]
    pr = paste(s.image, params, pcfg, s.roi, cfg.paste)
    st = context_stats(pr, cfg.paste)
    img_path = os.path.join(out, f"pasted_{args.index:04d}.png")
    alpha_path = os.path.join(out, f"pasted_alpha_{args.index:04d}.png")
    save_image(pr.image, img_path, bit_depth=16)
    save_image(IrImage(pr.alpha), alpha_path, bit_depth=8)
    print(f"patch {st.mu_patch:.4f}+-{st.sigma_patch:.4f}  "
          f"ring {st.mu_ring:.4f}+-{st.sigma_ring:.4f}  "
          f"grad edge {st.grad_edge:.4f} ring {st.grad_ring:.4f}")
    for p in (img_path, alpha_path):
        print(f"wrote {p}")
    return 0


def cmd_sweep(cfg: RunConfig, args, seed: int) -> int:
    out = _out_dir(cfg, args)
    if cfg.sweep is None:
        raise ConfigError("config must set a 'sweep' section for this command")
    params, pcfg = load_patch(_patch_path(cfg, args))

    datasets = []
    seen: dict[str, int] = {}
    for path in cfg.sweep["datasets"]:
        _need(path, "sweep dataset")
        ds = _load_dataset(path)
        samples = load_samples(ds)
        base = os.path.basename(os.path.dirname(os.path.abspath(path))) or "dataset"
        n = seen.get(base, 0)
        seen[base] = n + 1
        name = base if n == 0 else f"{base}_{n}"
        rows = [(_sample_id(i, s.path), s.image, s.roi, ds.category)
                for i, s in enumerate(samples)]
        datasets.append((name, rows))

    encoders = []
    for i, spec in enumerate(cfg.sweep["encoders"]):
        if not isinstance(spec, dict):
            raise ConfigError(f"sweep encoder #{i} must be an object")
        spec = dict(spec)
        name = spec.pop("name", None) or f"{spec.get('kind', 'encoder')}_{i}"
        encoders.append((str(name), build_encoder(spec)))

    cells = transfer_sweep(params, pcfg, cfg.paste, datasets, encoders)
    json_path = os.path.join(out, "sweep.json")
    csv_path = os.path.join(out, "sweep.csv")
    write_sweep_json(cells, json_path)
    write_sweep_csv(cells, csv_path)
    for c in cells:
        if c.error is not None:
            print(f"{c.dataset} x {c.encoder}: error: {c.error}")
        else:
            print(f"{c.dataset} x {c.encoder}: ASR {c.summary.asr:.1f}%")
    for p in (json_path, csv_path):
        print(f"wrote {p}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irpatch",
        description="curved-grid infrared patch pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_str, patch=False, side=False, index=False, workers=False):
        p = sub.add_parser(name, help=help_str)
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        if workers:
            p.add_argument("--workers", type=int, default=1,
                           help="parallel evaluation threads")
        if patch:
            p.add_argument("--patch", default=None,
                           help="patch JSON (default: <out>/patch.json)")
        if side:
            p.add_argument("--side", type=int, default=256, help="raster side in px")
        if index:
            p.add_argument("--index", type=int, default=0, help="dataset sample index")
        p.set_defaults(func=fn)
        return p

    add("synth", cmd_synth, "generate a synthetic thermal dataset")
    add("stats", cmd_stats, "build the clean feature reference")
    add("optimize", cmd_optimize, "search for a patch", workers=True)
    add("evaluate", cmd_evaluate, "attack metrics for a saved patch", patch=True)
    add("render", cmd_render, "raster preview of a patch", patch=True, side=True)
    add("export", cmd_export, "vector export of a patch", patch=True)
    add("paste", cmd_paste, "composite preview on one sample", patch=True, index=True)
    add("sweep", cmd_sweep, "transfer matrix across datasets x encoders", patch=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        code = e.code if isinstance(e.code, int) else 1
        return 0 if code == 0 else 1
    try:
        cfg = load_run_config(args.config)
        seed = args.seed if args.seed is not None else cfg.seed
        return args.func(cfg, args, seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except MissingInputError as e:
        print(f"missing input: {e}", file=sys.stderr)
        return 2
    except IrPatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - CLI boundary, no tracebacks for users
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
