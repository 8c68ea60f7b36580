"""End-to-end CLI tests: exit codes, file outputs, determinism.

The shared workspace fixture drives the real subcommand flow once
(synth -> stats -> optimize -> evaluate -> render -> export -> paste
-> sweep) with tiny settings; individual tests inspect the artifacts.
"""

import hashlib
import json
import os
import subprocess
import sys

import pytest
from PIL import Image

from irpatch.cli import main
from irpatch.core import load_manifest
from irpatch.encoders import DEFAULT_LABELS
from irpatch.grid import load_patch
from irpatch.metrics import OUTCOME_CSV_COLUMNS
from irpatch.reference import load_reference


def _sha(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


WS_CONFIG = {
    "seed": 5,
    "dataset": "data/manifest.json",
    "clean": "data/manifest.json",
    "out": "run",
    "k": 2,
    "n_eot": 2,
    "encoder": {"kind": "toy", "seed": 3, "feature_dim": 16},
    "grid": {"grid_dim": 3},
    "synth": {"n_images": 6, "height": 64, "width": 64},
    "search": {"population": 6, "generations": 4},
    "sweep": {
        "datasets": ["data/manifest.json", "data/manifest.json"],
        "encoders": [
            {"kind": "toy", "seed": 3, "feature_dim": 16},
            {"kind": "toy", "seed": 5, "name": "alt"},
        ],
    },
}


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Workspace with the full pipeline already run once."""
    root = tmp_path_factory.mktemp("cliws")
    cwd = root / "cwd"
    cwd.mkdir()
    old = os.getcwd()
    os.chdir(cwd)  # commands must not scribble on the working directory
    try:
        cfg_path = str(root / "config.json")
        with open(cfg_path, "w") as f:
            json.dump(WS_CONFIG, f)

        def run_cmd(*argv):
            rc = main(list(argv))
            assert rc == 0, f"command {argv} exited {rc}"

        run_cmd("synth", "--config", cfg_path, "--out", str(root / "data"))
        run_cmd("stats", "--config", cfg_path)
        run_cmd("optimize", "--config", cfg_path)
        run_cmd("optimize", "--config", cfg_path, "--out", str(root / "run_b"))
        run_cmd("optimize", "--config", cfg_path, "--out", str(root / "run_w"),
                "--workers", "2")
        run_cmd("evaluate", "--config", cfg_path)
        run_cmd("render", "--config", cfg_path, "--side", "48")
        run_cmd("export", "--config", cfg_path)
        run_cmd("paste", "--config", cfg_path, "--index", "2")
        run_cmd("sweep", "--config", cfg_path)
        yield root
    finally:
        os.chdir(old)


class TestUsage:
    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "synth" in capsys.readouterr().out

    def test_subcommand_help_exits_zero(self, capsys):
        assert main(["optimize", "--help"]) == 0
        assert "--workers" in capsys.readouterr().out

    def test_usage_errors_exit_one(self, capsys):
        assert main([]) == 1
        assert main(["frobnicate"]) == 1
        assert main(["synth"]) == 1  # --config is required
        capsys.readouterr()


class TestExitCodes:
    def test_config_file_missing(self, ws, capsys):
        assert main(["synth", "--config", str(ws / "nope.json")]) == 1
        assert "config error" in capsys.readouterr().err

    def test_config_invalid_json(self, ws, capsys):
        bad = ws / "bad.json"
        bad.write_text("{nope")
        assert main(["synth", "--config", str(bad)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_no_output_directory_anywhere(self, ws, capsys):
        noout = ws / "noout.json"
        noout.write_text(json.dumps({"seed": 1}))
        assert main(["synth", "--config", str(noout)]) == 1
        assert "output directory" in capsys.readouterr().err

    def test_missing_dataset_manifest(self, ws, capsys):
        doc = {"seed": 1, "dataset": "nowhere/manifest.json", "out": "run_x"}
        p = ws / "missing_ds.json"
        p.write_text(json.dumps(doc))
        assert main(["evaluate", "--config", str(p)]) == 2
        assert "missing input" in capsys.readouterr().err

    def test_missing_patch_file(self, ws, capsys):
        out = ws / "empty_out"
        rc = main(["evaluate", "--config", str(ws / "config.json"), "--out", str(out)])
        assert rc == 2
        assert "patch not found" in capsys.readouterr().err

    def test_corrupt_patch_is_runtime_failure(self, ws, capsys):
        bad = ws / "bad_patch.json"
        bad.write_text('{"bogus": 1}')
        rc = main(["evaluate", "--config", str(ws / "config.json"),
                   "--patch", str(bad)])
        assert rc == 3
        assert "error" in capsys.readouterr().err

    def test_stats_needs_two_clean_samples(self, ws, capsys):
        with open(ws / "data" / "manifest.json") as f:
            doc = json.load(f)
        doc["items"] = doc["items"][:2]
        doc["items"][1]["clean"] = False
        with open(ws / "data" / "manifest_one.json", "w") as f:
            json.dump(doc, f)
        cfg = {"seed": 1, "clean": "data/manifest_one.json", "out": "run_one"}
        p = ws / "one.json"
        p.write_text(json.dumps(cfg))
        assert main(["stats", "--config", str(p)]) == 1
        assert "need >= 2" in capsys.readouterr().err

    def test_category_must_be_among_encoder_labels(self, ws, capsys):
        cfg = {"seed": 1, "dataset": "data/manifest.json", "out": "run_bl",
               "encoder": {"kind": "toy", "labels": ["x", "y"]}}
        p = ws / "badlabels.json"
        p.write_text(json.dumps(cfg))
        rc = main(["evaluate", "--config", str(p),
                   "--patch", str(ws / "run" / "patch.json")])
        assert rc == 1
        assert "not among" in capsys.readouterr().err

    def test_paste_index_out_of_range(self, ws, capsys):
        rc = main(["paste", "--config", str(ws / "config.json"), "--index", "99"])
        assert rc == 1
        assert "out of range" in capsys.readouterr().err


class TestSynthOutputs:
    def test_manifest_and_images(self, ws):
        ds = load_manifest(str(ws / "data" / "manifest.json"))
        assert len(ds.items) == 6
        assert ds.category in DEFAULT_LABELS
        for it in ds.items:
            assert os.path.isfile(it.image)
            assert it.clean
        img = Image.open(ds.items[0].image)
        assert img.size == (64, 64)

    def test_seed_override_changes_data(self, ws, capsys):
        rc = main(["synth", "--config", str(ws / "config.json"),
                   "--out", str(ws / "data_s11"), "--seed", "11"])
        assert rc == 0
        capsys.readouterr()
        a = _sha(ws / "data" / "images" / "img_0000.png")
        b = _sha(ws / "data_s11" / "images" / "img_0000.png")
        assert a != b


class TestStatsOutputs:
    def test_reference_file(self, ws):
        ref = load_reference(str(ws / "run" / "reference.json"))
        assert ref.n == 6
        assert ref.dim == 16
        assert ref.k == 2
        assert ref.kernel_scale > 0


class TestOptimizeOutputs:
    def test_files_exist(self, ws):
        for name in ("patch.json", "history.jsonl", "report.json", "reference.json"):
            assert (ws / "run" / name).is_file()

    def test_history_records(self, ws):
        lines = (ws / "run" / "history.jsonl").read_text().splitlines()
        assert len(lines) == 4
        evals = []
        for i, line in enumerate(lines):
            rec = json.loads(line)
            assert set(rec) == {"gen", "best", "mean", "evals", "refreshed"}
            assert rec["gen"] == i
            evals.append(rec["evals"])
        assert evals == sorted(evals)
        # population init + one child per slot per generation
        assert evals[-1] == 6 + 4 * 6

    def test_report(self, ws):
        with open(ws / "run" / "report.json") as f:
            rep = json.load(f)
        assert set(rep) == {"best_fitness", "evals", "generations_run",
                            "topology_ok", "final"}
        assert rep["evals"] == 30
        assert rep["generations_run"] == 4
        assert rep["topology_ok"] is True
        assert set(rep["final"]) == {"total", "l_subspace", "l_topo", "l_budget",
                                     "per_sample_residuals"}
        assert isinstance(rep["final"]["total"], float)

    def test_patch_loads(self, ws):
        params, pcfg = load_patch(str(ws / "run" / "patch.json"))
        assert pcfg.grid_dim == 3
        assert params.gates.shape == (3, 3)
        assert params.deforms.shape == (24,)


class TestEvaluateOutputs:
    def test_outcomes_csv(self, ws):
        lines = (ws / "run" / "outcomes.csv").read_text().splitlines()
        assert lines[0] == ",".join(OUTCOME_CSV_COLUMNS)
        assert len(lines) == 1 + 6
        assert lines[1].startswith("0000_img_0000")

    def test_metrics_json_and_stdout(self, ws, capsys):
        rc = main(["evaluate", "--config", str(ws / "config.json")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "ASR" in out and "wrote" in out
        with open(ws / "run" / "metrics.json") as f:
            summary = json.load(f)
        assert summary["n"] == 6
        assert 0.0 <= summary["asr"] <= 100.0


class TestRenderExportPaste:
    def test_render_files(self, ws):
        alpha = Image.open(ws / "run" / "render_alpha.png")
        prev = Image.open(ws / "run" / "render_preview.png")
        assert alpha.size == (48, 48) and alpha.mode == "L"
        assert prev.size == (48, 48) and prev.mode == "L"

    def test_render_side_flag_and_determinism(self, ws, capsys):
        out = ws / "run_r64"
        argv = ["render", "--config", str(ws / "config.json"),
                "--out", str(out), "--side", "64",
                "--patch", str(ws / "run" / "patch.json")]
        assert main(argv) == 0
        first = _sha(out / "render_alpha.png")
        assert Image.open(out / "render_alpha.png").size == (64, 64)
        assert main(argv) == 0
        capsys.readouterr()
        assert _sha(out / "render_alpha.png") == first

    def test_export_svg(self, ws):
        svg = (ws / "run" / "patch.svg").read_text()
        assert svg.lstrip().startswith("<svg")
        assert "</svg>" in svg

    def test_paste_files_and_stdout(self, ws, capsys):
        assert (ws / "run" / "pasted_0002.png").is_file()
        alpha = Image.open(ws / "run" / "pasted_alpha_0002.png")
        assert alpha.mode == "L" and alpha.size == (64, 64)
        pasted = Image.open(ws / "run" / "pasted_0002.png")
        assert pasted.mode in ("I", "I;16")
        rc = main(["paste", "--config", str(ws / "config.json"), "--index", "2"])
        assert rc == 0
        assert "grad edge" in capsys.readouterr().out


class TestSweepOutputs:
    def test_sweep_json(self, ws):
        with open(ws / "run" / "sweep.json") as f:
            cells = json.load(f)
        assert len(cells) == 4
        names = {(c["dataset"], c["encoder"]) for c in cells}
        assert names == {("data", "toy_0"), ("data", "alt"),
                         ("data_1", "toy_0"), ("data_1", "alt")}
        for c in cells:
            assert c["error"] is None
            assert c["summary"]["n"] == 6

    def test_sweep_csv(self, ws):
        lines = (ws / "run" / "sweep.csv").read_text().splitlines()
        assert lines[0] == "dataset,toy_0,alt"
        assert len(lines) == 3
        # duplicate manifests must produce identical rows
        assert lines[1].split(",", 1)[1] == lines[2].split(",", 1)[1]


class TestDeterminism:
    def test_repeat_runs_byte_identical(self, ws):
        for name in ("patch.json", "history.jsonl", "report.json", "reference.json"):
            assert _sha(ws / "run" / name) == _sha(ws / "run_b" / name), name

    def test_workers_do_not_change_results(self, ws):
        for name in ("patch.json", "history.jsonl", "report.json"):
            assert _sha(ws / "run" / name) == _sha(ws / "run_w" / name), name

    def test_nothing_written_to_cwd(self, ws):
        assert os.listdir(ws / "cwd") == []


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "irpatch.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "irpatch" in proc.stdout
