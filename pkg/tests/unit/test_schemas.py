"""Unit tests for Pydantic schemas"""
import pytest
from pydantic import ValidationError
from app.models.schemas import (
    CameraEntry, CliConfig, DatasetManifest, ExperimentSpec, GroundTruth, NoiseSpec, RansacConfig,
    RefineConfig, SceneSpec,
)


@pytest.mark.unit
class TestRansacConfig:
    """Test suite for RansacConfig schema"""

    def test_defaults(self):
        """Test RANSAC defaults"""
        cfg = RansacConfig()

        assert cfg.max_hypotheses == 5000
        assert cfg.checkpoint_interval == 1000
        assert cfg.inlier_threshold_px == 1.0
        assert cfg.min_correlation == 0.9
        assert cfg.threads == 1

    def test_zero_hypotheses_rejected(self):
        """Test that max_hypotheses < 1 is rejected"""
        with pytest.raises(ValidationError):
            RansacConfig(max_hypotheses=0)

    def test_non_positive_threshold_rejected(self):
        """Test that the inlier threshold must be positive"""
        with pytest.raises(ValidationError):
            RansacConfig(inlier_threshold_px=0.0)

    def test_correlation_range(self):
        """Test that min_correlation stays within [-1, 1]"""
        with pytest.raises(ValidationError):
            RansacConfig(min_correlation=1.5)

    def test_schema_carries_the_example(self):
        """Test that the example reaches the JSON schema"""
        assert RansacConfig.model_json_schema()["example"]["max_hypotheses"] == 5000


@pytest.mark.unit
class TestRefineConfig:

    def test_defaults(self):
        cfg = RefineConfig()

        assert cfg.theta_deg == 0.2
        assert cfg.angle_samples == 41
        assert cfg.epipole_tol_px == 0.1

    def test_even_sample_count_rejected(self):
        """Test that the zero offset must be among the samples"""
        with pytest.raises(ValidationError) as exc_info:
            RefineConfig(angle_samples=40)

        assert "odd" in str(exc_info.value)


@pytest.mark.unit
@pytest.mark.synth
class TestSceneSpec:
    """Test suite for scene descriptions"""

    def test_defaults(self):
        """Test the default scene"""
        spec = SceneSpec()

        assert (spec.image_width, spec.image_height) == (640, 480)
        assert spec.frames == 200
        assert len(spec.spheres) == 3
        assert spec.noise.dropout == 0.0

    def test_from_json_dict(self):
        """Test building from parsed JSON"""
        spec = SceneSpec.model_validate({
            "frames": 50,
            "azimuths_deg": [0, 180],
            "noise": {"boundary_px": -1, "dropout": 0.1, "seed": 4},
        })

        assert spec.azimuths_deg == [0.0, 180.0]
        assert spec.noise.boundary_px == -1

    def test_unknown_key_rejected(self):
        """Test that typos in scene files are caught"""
        with pytest.raises(ValidationError):
            SceneSpec.model_validate({"frame": 50})

    def test_single_camera_rejected(self):
        with pytest.raises(ValidationError):
            SceneSpec(azimuths_deg=[0.0])

    def test_noise_bounds(self):
        """Test noise ranges"""
        with pytest.raises(ValidationError):
            NoiseSpec(boundary_px=3)
        with pytest.raises(ValidationError):
            NoiseSpec(dropout=1.0)


@pytest.mark.unit
class TestDatasetManifest:

    def test_minimal_manifest(self):
        manifest = DatasetManifest(
            cameras=[
                CameraEntry(name="cam0", directory="cam0", frame_count=10),
                CameraEntry(name="cam1", directory="cam1", frame_count=10),
            ],
            image_width=64,
            image_height=48,
        )

        assert manifest.frame_rate == 25.0
        assert manifest.ground_truth is None

    def test_one_camera_rejected(self):
        with pytest.raises(ValidationError):
            DatasetManifest(cameras=[CameraEntry(name="a", directory="a", frame_count=3)],
                            image_width=8, image_height=8)

    def test_fundamental_needs_nine_values(self):
        """Test that a ground-truth F must be 3x3"""
        with pytest.raises(ValidationError):
            GroundTruth(fundamental=[1.0] * 8)


@pytest.mark.unit
class TestExperimentSpec:

    def test_hypotheses_default_to_largest_budget(self):
        """Test that the run length covers every budget"""
        spec = ExperimentSpec(budgets=[1000, 3000], seeds=[0])

        assert spec.hypotheses == 3000
        assert ExperimentSpec(budgets=[1000], max_hypotheses=4000).hypotheses == 4000

    def test_both_methods_by_default(self):
        assert ExperimentSpec().methods == ["barcode", "sinha"]

    def test_unknown_method_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(methods=["eight-point"])

    def test_non_positive_threshold_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(thresholds=[1.0, 0.0])


@pytest.mark.unit
@pytest.mark.cli
class TestCliConfig:
    """Test suite for the calibrate config file"""

    def test_defaults(self):
        cfg = CliConfig()

        assert cfg.method == "barcode"
        assert cfg.pair == (0, 1)
        assert cfg.no_refine is False
        assert cfg.top_m == 1

    def test_unknown_key_rejected(self):
        """Test that unrecognised config keys fail validation"""
        with pytest.raises(ValidationError):
            CliConfig.model_validate({"hypothesis": 100})

    def test_same_camera_twice_rejected(self):
        with pytest.raises(ValidationError):
            CliConfig(pair=(1, 1))

    def test_top_m_range(self):
        with pytest.raises(ValidationError):
            CliConfig(top_m=4)


@pytest.mark.unit
@pytest.mark.parametrize("model", [SceneSpec, ExperimentSpec, CliConfig])
def test_file_documents_forbid_extra_keys(model):
    assert model.model_config["extra"] == "forbid"
