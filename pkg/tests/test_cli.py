"""End-to-end tests of the command-line interface on a tiny configuration."""

import csv
import re
import shutil
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from cascade_seg.cli import PARTIAL_MARKER, app
from cascade_seg.config import load_settings
from cascade_seg.data import encode_image, load_image_pgm, load_network, load_split
from cascade_seg.metrics import evaluate_model, write_report_csv
from cascade_seg.models import Head
from cascade_seg.training import TrainingData, evaluate_joint_objective

runner = CliRunner()

TINY_CONFIG = """\
# tiny run for tests
image_size = 16
depth = 1
base_channels = 2
epochs_main = 1
epochs_finetune = 1
epochs_liver = 1
batch_size = 2
n_train = 4
n_val = 2
n_test = 2
seed = 5
"""


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


def flat(result) -> str:
    return " ".join(result.output.split())


def files_under(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def read_report(path: Path) -> dict[str, list[str]]:
    with open(path, newline="") as f:
        return {row[0]: row[1:] for row in list(csv.reader(f))[1:]}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "run.cfg").write_text(TINY_CONFIG, encoding="utf-8")
    return root


@pytest.fixture(scope="module")
def data_dir(workspace):
    out = workspace / "data"
    result = invoke("gen-data", "--out-dir", out, "--config", workspace / "run.cfg")
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def sequential_run(workspace, data_dir):
    out = workspace / "seq"
    result = invoke("train", "--data-dir", data_dir, "--out-dir", out, "--config", workspace / "run.cfg")
    assert result.exit_code == 0, result.output
    return out, result


@pytest.fixture(scope="module")
def sequential_dir(sequential_run):
    return sequential_run[0]


@pytest.fixture(scope="module")
def one_step_dir(workspace, data_dir):
    out = workspace / "one"
    result = invoke(
        "train", "--data-dir", data_dir, "--out-dir", out, "--model", "one_step", "--config", workspace / "run.cfg"
    )
    assert result.exit_code == 0, result.output
    return out


# =============================================================================
# gen-data
# =============================================================================

class TestGenData:
    def test_split_layout(self, data_dir):
        for split, n in (("train", 4), ("val", 2), ("test", 2)):
            assert len(list((data_dir / split / "img").glob("*.pgm"))) == n
            assert len(list((data_dir / split / "lbl").glob("*.pgm"))) == n
        assert (data_dir / "config.resolved").exists()
        assert not (data_dir / PARTIAL_MARKER).exists()

    def test_rerun_is_byte_identical(self, workspace, data_dir, tmp_path):
        result = invoke("gen-data", "--out-dir", tmp_path / "again", "--config", workspace / "run.cfg")
        assert result.exit_code == 0, result.output
        assert files_under(tmp_path / "again") == files_under(data_dir)

    def test_count_override(self, workspace, tmp_path):
        result = invoke("gen-data", "--out-dir", tmp_path / "d", "--n-train", 3, "--config", workspace / "run.cfg")
        assert result.exit_code == 0, result.output
        assert len(list((tmp_path / "d" / "train" / "img").glob("*.pgm"))) == 3
        assert "n_train = 3" in (tmp_path / "d" / "config.resolved").read_text()

    def test_invalid_config_exits(self, tmp_path):
        (tmp_path / "bad.cfg").write_text("sede = 1\n", encoding="utf-8")
        result = invoke("gen-data", "--out-dir", tmp_path / "d", "--config", tmp_path / "bad.cfg")
        assert result.exit_code == 1
        assert "sede" in flat(result)


# =============================================================================
# train
# =============================================================================

class TestTrain:
    def test_sequential_artifacts(self, sequential_dir):
        assert (sequential_dir / "modelA.segc").exists()
        assert (sequential_dir / "modelB.segc").exists()
        assert not (sequential_dir / PARTIAL_MARKER).exists()
        with open(sequential_dir / "epochs.csv", newline="") as f:
            phases = [row[1] for row in list(csv.reader(f))[1:]]
        assert phases == ["liver", "tumor_main", "tumor_finetune"]

    def test_summary_reports_joint_objective(self, workspace, data_dir, sequential_run):
        out, result = sequential_run
        match = re.search(r"Joint objective \(c = 0\.5\): ([0-9.]+)", flat(result))
        assert match, result.output
        settings = load_settings(workspace / "run.cfg")
        unet = settings.unet_config(Head.BINARY_SIGMOID)
        dataset = TrainingData.from_samples(load_split(data_dir, "train"), load_split(data_dir, "val"))
        expected = evaluate_joint_objective(
            load_network(out / "modelA.segc", unet),
            load_network(out / "modelB.segc", unet),
            dataset,
            0.5,
            settings.thresholds(),
            settings.window(),
        )
        assert float(match.group(1)) == pytest.approx(expected, abs=1e-5)

    def test_one_step_artifacts(self, one_step_dir):
        assert (one_step_dir / "modelC.segc").exists()
        assert "model = one_step" in (one_step_dir / "config.resolved").read_text()
        assert not (one_step_dir / PARTIAL_MARKER).exists()

    def test_same_seed_same_checkpoints(self, workspace, data_dir, sequential_dir, tmp_path):
        result = invoke("train", "--data-dir", data_dir, "--out-dir", tmp_path / "seq", "--config", workspace / "run.cfg")
        assert result.exit_code == 0, result.output
        for name in ("modelA.segc", "modelB.segc"):
            assert (tmp_path / "seq" / name).read_bytes() == (sequential_dir / name).read_bytes()

    def test_missing_data_exits_with_partial_marker(self, workspace, tmp_path):
        result = invoke("train", "--data-dir", tmp_path / "nothing", "--out-dir", tmp_path / "out", "--config", workspace / "run.cfg")
        assert result.exit_code == 1
        assert (tmp_path / "out" / PARTIAL_MARKER).exists()


# =============================================================================
# predict
# =============================================================================

class TestPredict:
    @pytest.mark.parametrize("model", ["sequential", "one_step"])
    def test_writes_three_files_per_image(self, workspace, data_dir, sequential_dir, one_step_dir, tmp_path, model):
        checkpoints = sequential_dir if model == "sequential" else one_step_dir
        out = tmp_path / "pred"
        result = invoke(
            "predict",
            "--checkpoint-dir", checkpoints,
            "--input", data_dir / "test",
            "--out-dir", out,
            "--model", model,
            "--config", workspace / "run.cfg",
        )
        assert result.exit_code == 0, result.output
        for stem in ("0000", "0001"):
            for suffix in ("label", "liver", "tumor"):
                assert (out / f"{stem}_{suffix}.pgm").exists()
            payload = (out / f"{stem}_label.pgm").read_bytes()[-16 * 16:]
            assert set(payload) <= {0, 127, 255}
        assert not (out / PARTIAL_MARKER).exists()

    def test_rerun_is_byte_identical(self, workspace, data_dir, sequential_dir, tmp_path):
        for name in ("a", "b"):
            result = invoke(
                "predict", "--checkpoint-dir", sequential_dir, "--input", data_dir / "test",
                "--out-dir", tmp_path / name, "--config", workspace / "run.cfg",
            )
            assert result.exit_code == 0, result.output
        assert files_under(tmp_path / "a") == files_under(tmp_path / "b")

    def test_size_mismatch_exits(self, workspace, sequential_dir, tmp_path):
        images = tmp_path / "small"
        images.mkdir()
        (images / "x.pgm").write_bytes(encode_image(np.zeros((8, 8))))
        out = tmp_path / "pred"
        result = invoke(
            "predict", "--checkpoint-dir", sequential_dir, "--input", images, "--out-dir", out,
            "--config", workspace / "run.cfg",
        )
        assert result.exit_code == 1
        assert "8x8" in flat(result) and "16x16" in flat(result)
        assert (out / PARTIAL_MARKER).exists()

    def test_normalize_flag_standardizes_inputs(self, workspace, sequential_dir, tmp_path):
        for name, value in (("constant", 0.3), ("zeros", 0.0)):
            (tmp_path / name).mkdir()
            (tmp_path / name / "x.pgm").write_bytes(encode_image(np.full((16, 16), value)))
        runs = {"constant": ["--normalize"], "zeros": []}
        for name, flags in runs.items():
            result = invoke(
                "predict", "--checkpoint-dir", sequential_dir, "--input", tmp_path / name,
                "--out-dir", tmp_path / f"pred_{name}", "--config", workspace / "run.cfg", *flags,
            )
            assert result.exit_code == 0, result.output
        for suffix in ("label", "liver", "tumor"):
            normalized = (tmp_path / "pred_constant" / f"x_{suffix}.pgm").read_bytes()
            assert normalized == (tmp_path / "pred_zeros" / f"x_{suffix}.pgm").read_bytes()
        assert "normalize_inputs = True" in (tmp_path / "pred_constant" / "config.resolved").read_text()

    def test_wrong_checkpoint_configuration_exits(self, data_dir, sequential_dir, tmp_path):
        (tmp_path / "other.cfg").write_text(TINY_CONFIG.replace("base_channels = 2", "base_channels = 4"))
        result = invoke(
            "predict", "--checkpoint-dir", sequential_dir, "--input", data_dir / "test",
            "--out-dir", tmp_path / "pred", "--config", tmp_path / "other.cfg",
        )
        assert result.exit_code == 1
        assert "different network configuration" in flat(result)


# =============================================================================
# eval
# =============================================================================

class TestEval:
    def test_perfect_predictions(self, workspace, data_dir, tmp_path):
        predictions = tmp_path / "pred"
        predictions.mkdir()
        for path in (data_dir / "test" / "lbl").glob("*.pgm"):
            shutil.copy(path, predictions / f"{path.stem}_label.pgm")
        result = invoke(
            "eval", "--predictions-dir", predictions, "--truth-dir", data_dir / "test",
            "--out-dir", tmp_path / "eval", "--config", workspace / "run.cfg",
        )
        assert result.exit_code == 0, result.output
        report = read_report(tmp_path / "eval" / "report.csv")
        assert [float(v) for v in report["liver"][:3]] == [1.0, 1.0, 1.0]
        assert report["tumor"][3:] == ["NA", "NA"]

    def test_report_matches_library(self, workspace, data_dir, sequential_dir, tmp_path):
        predictions = tmp_path / "pred"
        invoke(
            "predict", "--checkpoint-dir", sequential_dir, "--input", data_dir / "test",
            "--out-dir", predictions, "--config", workspace / "run.cfg",
        )
        result = invoke(
            "eval", "--predictions-dir", predictions, "--truth-dir", data_dir / "test",
            "--out-dir", tmp_path / "eval", "--config", workspace / "run.cfg",
        )
        assert result.exit_code == 0, result.output
        stems = ("0000", "0001")
        report = evaluate_model(
            [load_image_pgm(predictions / f"{s}_label.pgm") for s in stems],
            [load_image_pgm(data_dir / "test" / "lbl" / f"{s}.pgm") for s in stems],
            [load_image_pgm(predictions / f"{s}_tumor.pgm") for s in stems],
        )
        write_report_csv(report, tmp_path / "expected.csv")
        assert (tmp_path / "eval" / "report.csv").read_text() == (tmp_path / "expected.csv").read_text()
        assert (tmp_path / "eval" / "roc_tumor.csv").exists()
        assert (tmp_path / "eval" / "hist_tumor.csv").exists()

    def test_sweep_writes_named_roc(self, workspace, data_dir, sequential_dir, tmp_path):
        predictions = tmp_path / "pred"
        invoke(
            "predict", "--checkpoint-dir", sequential_dir, "--input", data_dir / "test",
            "--out-dir", predictions, "--config", workspace / "run.cfg",
        )
        result = invoke(
            "eval", "--predictions-dir", predictions, "--truth-dir", data_dir / "test",
            "--out-dir", tmp_path / "eval", "--sweep", f"base={sequential_dir}",
            "--config", workspace / "run.cfg",
        )
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "eval" / "roc_tumor_base.csv").read_text().splitlines()
        assert lines[0] == "threshold,fpr,tpr"

    def test_misaligned_sets_exit(self, workspace, data_dir, tmp_path):
        predictions = tmp_path / "pred"
        predictions.mkdir()
        shutil.copy(data_dir / "test" / "lbl" / "0000.pgm", predictions / "0000_label.pgm")
        result = invoke(
            "eval", "--predictions-dir", predictions, "--truth-dir", data_dir / "test",
            "--out-dir", tmp_path / "eval", "--config", workspace / "run.cfg",
        )
        assert result.exit_code == 1
        assert "misaligned sets" in flat(result) and "0001" in flat(result)
        assert (tmp_path / "eval" / PARTIAL_MARKER).exists()
