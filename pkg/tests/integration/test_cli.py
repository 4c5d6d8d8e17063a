"""Integration tests for the silcal command line"""
import json

import numpy as np
import pandas as pd
import pytest

from app.core.config import settings
from app.core.errors import AllDegenerate
from app.main import main
from app.models.schemas import ExperimentSpec
from app.services.estimator import RankTwoParameterization
from app.services.geometry import Fundamental, normalizing_transform
from app.services.dataset import frame_name, ground_truth_fundamental, load_manifest, save_manifest, write_fundamental
from tests.conftest import small_scene_spec


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "cache_dir", tmp_path / "cache")


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(small_scene_spec().model_dump_json())
    return path


@pytest.fixture
def dataset(tmp_path, scene_file):
    out = tmp_path / "data"
    assert main(["synth", str(scene_file), "--out", str(out)]) == 0
    return out


def manifest_hash(output: str) -> str:
    line = [l for l in output.splitlines() if "sha256=" in l][-1]
    return line.split("sha256=")[1].strip()


@pytest.mark.integration
@pytest.mark.cli
class TestSynthCommand:

    def test_writes_a_dataset(self, dataset):
        assert (dataset / "manifest.json").is_file()
        assert (dataset / "cam1" / frame_name(0)).is_file()

    def test_same_spec_gives_the_same_manifest(self, tmp_path, scene_file, capsys):
        assert main(["synth", str(scene_file), "--out", str(tmp_path / "one")]) == 0
        first = manifest_hash(capsys.readouterr().out)
        assert main(["synth", str(scene_file), "--out", str(tmp_path / "two")]) == 0
        assert manifest_hash(capsys.readouterr().out) == first

    def test_invalid_spec(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"frames": 3}))
        assert main(["synth", str(path), "--out", str(tmp_path / "out")]) == 2

    def test_missing_spec_file(self, tmp_path):
        assert main(["synth", str(tmp_path / "absent.json"), "--out", str(tmp_path / "out")]) == 3


@pytest.mark.integration
@pytest.mark.cli
class TestCalibrateCommand:

    def args(self, dataset, *extra):
        return ["calibrate", str(dataset), "--hypotheses", "200", "--checkpoint-interval", "100",
                "--min-correlation", "0.5", "--no-refine", *extra]

    def test_writes_requested_outputs(self, tmp_path, dataset):
        out, report, matches = tmp_path / "F.json", tmp_path / "report.csv", tmp_path / "matches.csv"
        code = main(self.args(dataset, "--out", str(out), "--report", str(report), "--matches", str(matches)))
        assert code == 0
        f = json.loads(out.read_text())
        assert len(f["F"]) == 9
        header = report.read_text().splitlines()[0]
        assert header == "method,hypothesis_index,window_best_error,post_lm_error,lm_count,wall_ms"
        assert matches.read_text().strip()

    def test_prints_f_without_out(self, dataset, capsys):
        assert main(self.args(dataset)) == 0
        assert "error mean=" in capsys.readouterr().out

    def test_unequal_frame_counts(self, dataset):
        manifest, _ = load_manifest(dataset)
        manifest.cameras[1].frame_count -= 1
        save_manifest(manifest, dataset)
        assert main(self.args(dataset)) == 2

    def test_unwritable_output(self, tmp_path, dataset):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        assert main(self.args(dataset, "--out", str(blocker / "F.json"))) == 3

    def test_unknown_config_key(self, tmp_path, dataset):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"hypotheses": 100, "bogus": 1}))
        assert main(self.args(dataset, "--config", str(config))) == 2

    def test_same_camera_twice(self, dataset):
        assert main(self.args(dataset, "--pair", "1,1")) == 2

    def test_missing_dataset(self, tmp_path):
        assert main(["calibrate", str(tmp_path / "nowhere")]) == 3

    def test_baseline_report_is_tagged(self, tmp_path, dataset):
        report = tmp_path / "report.csv"
        assert main(self.args(dataset, "--method", "sinha", "--report", str(report))) == 0
        df = pd.read_csv(report)
        assert len(df) == 2
        assert set(df["method"]) == {"sinha"}


@pytest.mark.integration
@pytest.mark.cli
class TestEvalCommand:

    def test_ground_truth_scores_near_zero(self, tmp_path, dataset, capsys):
        manifest, _ = load_manifest(dataset)
        write_fundamental(ground_truth_fundamental(manifest), tmp_path / "gt.json")
        assert main(["eval", str(tmp_path / "gt.json"), str(dataset)]) == 0
        line = capsys.readouterr().out.strip().splitlines()[-1]
        fields = dict(part.split("=") for part in line.split()[1:])
        assert float(fields["mean"]) < 0.01
        assert int(fields["points"]) > 0

    def test_error_grows_with_perturbation(self, tmp_path, dataset, capsys):
        manifest, _ = load_manifest(dataset)
        f_gt = ground_truth_fundamental(manifest)
        corners = normalizing_transform([[0.0, 0.0], [160.0, 0.0], [160.0, 120.0], [0.0, 120.0]])
        chart, theta = RankTwoParameterization.around(f_gt, corners, corners)
        direction = np.random.default_rng(7).normal(size=7)
        direction /= np.linalg.norm(direction)
        means = []
        for scale in (1e-4, 3e-4, 1e-3, 3e-3, 1e-2):
            path = tmp_path / f"F_{scale:g}.json"
            write_fundamental(Fundamental.from_matrix(chart.matrix(theta + scale * direction)), path)
            assert main(["eval", str(path), str(dataset)]) == 0
            line = capsys.readouterr().out.strip().splitlines()[-1]
            means.append(float(dict(part.split("=") for part in line.split()[1:])["mean"]))
        assert all(a < b for a, b in zip(means, means[1:]))

    def test_without_ground_truth(self, tmp_path, dataset):
        manifest, _ = load_manifest(dataset)
        write_fundamental(ground_truth_fundamental(manifest), tmp_path / "gt.json")
        manifest.ground_truth = None
        for cam in manifest.cameras:
            cam.projection = None
        save_manifest(manifest, dataset)
        assert main(["eval", str(tmp_path / "gt.json"), str(dataset)]) == 4


@pytest.mark.integration
@pytest.mark.cli
class TestDumpBarcodes:

    def test_rows_of_one_frame(self, dataset, capsys):
        assert main(["dump-barcodes", str(dataset), "--frame", "5", "--angle-step", "30"]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        assert rows
        for row in rows:
            t, angle, bits = row.split()
            assert t == "5"
            assert 0.0 <= float(angle) < 360.0
            assert float(angle) % 30.0 == 0.0
            assert len(bits) == 40 and set(bits) <= {"0", "1"}


@pytest.mark.integration
@pytest.mark.cli
@pytest.mark.slow
class TestBenchCommand:

    def test_small_experiment(self, tmp_path):
        spec = ExperimentSpec(scenes=[small_scene_spec()], budgets=[100, 200], thresholds=[2.0, 1.0],
                              seeds=[0], max_hypotheses=200, checkpoint_interval=100)
        path = tmp_path / "bench.json"
        path.write_text(spec.model_dump_json())
        assert main(["bench", str(path), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "bench.csv").is_file()
        assert (tmp_path / "out" / "summary.csv").is_file()

    def test_unknown_experiment_key(self, tmp_path):
        path = tmp_path / "bench.json"
        path.write_text(json.dumps({"trials": 3}))
        assert main(["bench", str(path), "--out", str(tmp_path / "out")]) == 2


@pytest.mark.integration
@pytest.mark.cli
class TestErrorMapping:

    def test_unexpected_failure_exits_with_one(self, tmp_path, mocker):
        mocker.patch("app.main.make_scene", side_effect=RuntimeError("boom"))
        assert main(["synth", "--out", str(tmp_path / "out")]) == 1

    def test_calibration_errors_keep_their_code(self, tmp_path, dataset, mocker):
        mocker.patch("app.main.CalibrationPipeline.run", side_effect=AllDegenerate("nothing"))
        assert main(["calibrate", str(dataset)]) == 4

    def test_cache_is_reused(self, dataset, mocker):
        args = ["calibrate", str(dataset), "--hypotheses", "100", "--checkpoint-interval", "100",
                "--min-correlation", "0.5", "--no-refine"]
        assert main(args) == 0
        build = mocker.patch("app.services.pipeline.BarcodeBank.build")
        assert main(args) == 0
        build.assert_not_called()
