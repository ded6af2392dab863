import math

import numpy as np
import pytest

import tlsmon


def test_budget_and_relative_error():
    sigma = tlsmon.error_budget(6, 30, 60, 10, 10)
    assert abs(sigma - 76.0) < 0.05
    assert tlsmon.relative_error(sigma, 2.0) == pytest.approx(sigma / 2000.0)


def test_shape_classes():
    rows = [(31.1, 56.0, "L"), (9.9, 16.5, "L"), (16.4, 44.8, "VL"), (20.9, 32.1, "L"), (24.3, 52.1, "L")]
    for w, l, cls in rows:
        theta = tlsmon.shape_angle(w, l)
        assert theta == pytest.approx(math.degrees(math.atan(l / w)))
        assert tlsmon.classify_shape(theta) == cls


def test_intervals():
    dates = ["2013-03-14", "2013-08-17", "2013-11-06", "2014-09-13", "2015-01-09"]
    assert [tlsmon.interval_days(a, b) for a, b in zip(dates, dates[1:])] == [156, 81, 311, 118]


def test_errors_surface_as_exceptions():
    with pytest.raises(tlsmon.TlsmonError, match="Parse"):
        tlsmon.interval_days("2014-02-30", "2014-03-01")
    with pytest.raises(tlsmon.TlsmonError):
        tlsmon.shape_angle(0.0, 1.0)


def test_terrain_and_registration_roundtrip():
    pts = tlsmon.gen_terrain((20.0, 20.0), density=10.0, roughness=1.0, seed=3)
    assert pts.shape == (4000, 3)
    angle = 0.05
    rot = np.array([[math.cos(angle), -math.sin(angle), 0], [math.sin(angle), math.cos(angle), 0], [0, 0, 1]])
    t = np.array([0.3, -0.2, 0.1])
    moved = (pts - t) @ rot  # truth maps moved -> pts
    matrix, rmse = tlsmon.register(moved, pts, method="icp")
    assert matrix.shape == (4, 4)
    np.testing.assert_allclose(matrix[:3, :3], rot, atol=1e-6)
    np.testing.assert_allclose(matrix[:3, 3], t, atol=1e-5)
    assert rmse < 1e-6


def test_example_config_shape():
    cfg = tlsmon.example_config()
    assert [e["epoch_id"] for e in cfg["synthetic"]["epochs"]] == ["I", "II"]
    assert cfg["regions"]["threshold_mm_day"] == 2.0
    with pytest.raises(tlsmon.TlsmonError, match="unknown key"):
        tlsmon.run_pipeline(dict(cfg, bogus=1))
