import numpy as np
import pytest

from acmsim import scenario as sc
from acmsim import vision as vis
from acmsim.errors import ParseError, ReferenceNotVisible, ValidationError

SCENARIO1 = sc.bundled_config_path("scenario1")
SCENARIO2 = sc.bundled_config_path("scenario2")


def write_config(tmp_path, text, name="test.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def minimal_config_text(**overrides):
    lines = {
        "rod.length": "1.0",
        "rod.diameter": "2.0e-3",
        "rod.density": "6.45e3",
        "rod.young_modulus": "5.0e10",
        "rod.poisson": "0.33",
        "rod.damping": "1.0e2",
        "uav.mass": "0.7331",
        "uav.inertia": "2.4388e-2, 2.6151e-2, 2.6929e-2",
        "camera_local.width": "1024",
        "camera_local.height": "1024",
        "camera_local.focal": "886.8",
        "camera_local.center": "512, 512",
        "camera_local.near": "0.5",
        "camera_local.far": "10.0",
        "camera_global.width": "500",
        "camera_global.height": "500",
        "camera_global.focal": "350.5",
        "camera_global.center": "250, 250",
        "camera_global.near": "0.01",
        "camera_global.far": "20.0",
        "target.side": "0.2",
        "initial.position": "0.0, 0.0, 5.0",
        "initial.orientation": "0.0, 0.0, 0.0",
        "initial.rod": "0.0, 0.0",
        "reference.position": "0.0, 0.0, 3.0",
        "reference.orientation": "0.0, 0.0, 0.0",
        "reference.rod": "0.0, 0.0",
    }
    lines.update(overrides)
    return "\n".join(
        f"{k} = {v}" for k, v in lines.items() if v is not None
    )


class TestLoadConfig:
    def test_bundled_scenario1_carries_published_values(self):
        cfg = sc.load_config(SCENARIO1)
        assert cfg.rod.length == 1.0
        assert cfg.rod.density == 6.45e3
        assert cfg.rod.young_modulus == 5e10
        assert cfg.uav.mass == 0.7331
        np.testing.assert_array_equal(
            cfg.uav.moments, [2.4388e-2, 2.6151e-2, 2.6929e-2]
        )
        assert cfg.local_camera.focal == 886.8
        assert cfg.global_camera.focal == 350.5
        assert cfg.target.side == 0.2
        np.testing.assert_allclose(
            cfg.initial_q, [0, 0, np.pi / 18, -0.5, 0.5, 5.0, 0.3, 0.4], atol=1e-12
        )
        assert cfg.dt == 0.02
        assert cfg.horizon == 5.0

    def test_bundled_scenario2_initial_state(self):
        cfg = sc.load_config(SCENARIO2)
        np.testing.assert_allclose(
            cfg.initial_q, [0, 0, 0, 0, 0, 5.0, -0.3, -0.4], atol=1e-12
        )

    def test_missing_dt_defaults_with_notice(self, tmp_path):
        path = write_config(tmp_path, minimal_config_text())
        cfg = sc.load_config(path)
        assert cfg.dt == 0.02
        assert any("0.02" in n for n in cfg.notices)

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, minimal_config_text() + "\nrod.colour = 1.0")
        with pytest.raises(ValidationError, match="rod.colour"):
            sc.load_config(path)

    def test_negative_length_names_field(self, tmp_path):
        path = write_config(tmp_path, minimal_config_text(**{"rod.length": "-1.0"}))
        with pytest.raises(ValidationError, match="length"):
            sc.load_config(path)

    def test_missing_required_key_named(self, tmp_path):
        text = minimal_config_text(**{"uav.mass": None})
        path = write_config(tmp_path, text)
        with pytest.raises(ValidationError, match="uav.mass"):
            sc.load_config(path)

    def test_parse_error_on_bad_line(self, tmp_path):
        path = write_config(tmp_path, "rod.length 1.0")
        with pytest.raises(ParseError):
            sc.load_config(path)

    def test_reference_or_features_required(self, tmp_path):
        text = minimal_config_text(
            **{
                "reference.position": None,
                "reference.orientation": None,
                "reference.rod": None,
            }
        )
        path = write_config(tmp_path, text)
        with pytest.raises(ValidationError, match="reference.position"):
            sc.load_config(path)

    def test_explicit_desired_features(self, tmp_path):
        text = minimal_config_text(
            **{
                "reference.position": None,
                "reference.orientation": None,
                "reference.rod": None,
                "features.desired": "0, 0, 0, 0, 0, 0.41",
            }
        )
        cfg = sc.load_config(write_config(tmp_path, text))
        world = sc.build_world(cfg)
        np.testing.assert_array_equal(
            sc.desired_features(cfg, world), [0, 0, 0, 0, 0, 0.41]
        )

    def test_gain_condition_checked(self, tmp_path):
        text = minimal_config_text(**{"gains.a_p": "4.0"})  # a_d*beta = 8 > 4
        path = write_config(tmp_path, text)
        with pytest.raises(ValidationError, match="gain"):
            sc.load_config(path)


class TestDesiredFeatures:
    def test_centered_reference(self):
        cfg = sc.load_config(SCENARIO1)
        world = sc.build_world(cfg)
        p = sc.desired_features(cfg, world)
        np.testing.assert_allclose(p[:5], 0.0, atol=1e-12)
        # perimeter scales inversely with the snapshot depth (1.95 m)
        assert p[5] == pytest.approx(4 * 0.2 / 1.95, rel=1e-9)

    def test_depth_scaling(self, tmp_path):
        text = minimal_config_text(**{"reference.position": "0.0, 0.0, 4.0"})
        cfg4 = sc.load_config(write_config(tmp_path, text))
        p4 = sc.desired_features(cfg4, sc.build_world(cfg4))
        cfg3 = sc.load_config(write_config(tmp_path, minimal_config_text(), "b.cfg"))
        p3 = sc.desired_features(cfg3, sc.build_world(cfg3))
        assert p4[5] / p3[5] == pytest.approx(1.95 / 2.95, rel=1e-9)

    def test_reference_not_visible(self, tmp_path):
        text = minimal_config_text(**{"reference.position": "3.0, 0.0, 3.0"})
        cfg = sc.load_config(write_config(tmp_path, text))
        with pytest.raises(ReferenceNotVisible):
            sc.desired_features(cfg, sc.build_world(cfg))

    def test_pure_function(self):
        cfg = sc.load_config(SCENARIO1)
        world = sc.build_world(cfg)
        np.testing.assert_array_equal(
            sc.desired_features(cfg, world), sc.desired_features(cfg, world)
        )


class TestNormalizedRmse:
    def test_zero(self):
        assert sc.normalized_rmse(np.zeros(6)) == 0.0

    def test_single_component(self):
        e = np.array([0, 0, 0, 0.2, 0, 0])
        assert sc.normalized_rmse(e) == pytest.approx(0.2 / np.sqrt(6))

    def test_scale_equivariance(self):
        e = np.random.default_rng(2).normal(size=6)
        assert sc.normalized_rmse(3 * e) == pytest.approx(3 * sc.normalized_rmse(e))


class TestRunBasics:
    def test_zero_horizon(self):
        cfg = sc.load_config(SCENARIO1)
        from dataclasses import replace

        log, summary = sc.run(replace(cfg, horizon=0.0))
        assert summary.steps == 0
        assert summary.termination == "horizon"
        assert log.records == []

    def test_short_run_log_complete(self):
        from dataclasses import replace

        cfg = replace(sc.load_config(SCENARIO1), horizon=0.2)
        log, summary = sc.run(cfg)
        assert summary.steps == 10
        for r in log.records:
            assert np.all(np.isfinite(r.q)) and np.all(np.isfinite(r.qdot))
            assert np.all(np.isfinite(r.delta_hat))
            assert r.mode in ("ibvs", "recovery", "done")
            assert np.isfinite(r.lyapunov)
        times = [r.time for r in log.records]
        np.testing.assert_allclose(np.diff(times), cfg.dt, atol=1e-12)

    def test_csv_roundtrip_and_determinism(self, tmp_path):
        from dataclasses import replace

        cfg = replace(sc.load_config(SCENARIO1), horizon=0.3)
        paths = []
        for tag in ("a", "b"):
            log, _ = sc.run(cfg)
            path = tmp_path / f"{tag}.csv"
            log.write_csv(path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()
        lines = paths[0].read_text().splitlines()
        assert lines[0] == "# " + sc.LOG_SCHEMA
        header = lines[1].split(",")
        assert header == sc.CSV_COLUMNS
        row = lines[2].split(",")
        assert len(row) == len(header)

    def test_summary_json(self, tmp_path):
        import json
        from dataclasses import replace

        cfg = replace(sc.load_config(SCENARIO1), horizon=0.1)
        _, summary = sc.run(cfg)
        path = tmp_path / "s.summary.json"
        summary.write_json(path)
        record = json.loads(path.read_text().splitlines()[0])
        assert record["termination"] == "horizon"
        assert record["steps"] == 5
