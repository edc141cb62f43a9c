import math

import numpy as np
import pytest

import confdepth as cd


def test_confidence_at_two_sigma_squared():
    sigma = 0.7
    var = np.full((2, 3), 2 * sigma * sigma)
    conf = cd.variance_to_confidence(var, sigma)
    assert np.allclose(conf, math.exp(-1.0), atol=1e-12)


def test_ensemble_variance_is_population_variance():
    members = [np.full((4, 4), v) for v in (0.5, 1.0, 1.5)]
    mean, var = cd.ensemble_mean_variance(members)
    assert np.allclose(mean, 1.0)
    assert np.allclose(var, np.var([0.5, 1.0, 1.5]))


def test_pfm_round_trip_keeps_nan(tmp_path):
    a = np.arange(12, dtype=np.float64).reshape(3, 4) * 0.25
    a[1, 2] = np.nan
    path = tmp_path / "m.pfm"
    cd.write_pfm(a, path)
    b = cd.read_pfm(path)
    assert np.isnan(b[1, 2])
    mask = ~np.isnan(a)
    assert np.array_equal(a[mask], b[mask])


def test_triangulation_worked_example():
    rig = cd.CameraRig(1000.0, 5.0)
    kp = cd.StereoKeypoint(0, 320.0, 10.0, 270.0, 10.0)
    assert cd.triangulate_keypoint(kp, rig)[2] == 100.0


def test_metrics():
    rng = np.random.default_rng(0)
    # depth maps are stored as float32; evaluate_depth rounds to that precision
    gt = rng.uniform(50, 200, size=(8, 8)).astype(np.float32).astype(np.float64)
    assert cd.compute_are(1.1 * gt, gt) == pytest.approx(0.1, abs=1e-12)
    assert cd.compute_delta1(1.2 * gt, gt) == 1.0
    assert cd.compute_delta1(1.3 * gt, gt) == 0.0
    m = cd.evaluate_depth(3.0 * gt, gt)
    assert m["are"] == pytest.approx(0.0, abs=1e-12)


def test_losses_return_value_and_gradient():
    rng = np.random.default_rng(1)
    gt = rng.uniform(50, 200, size=(8, 8))
    conf = np.ones_like(gt)
    value, grad = cd.silog_conf(math.e * gt, gt, conf)
    assert value == pytest.approx(0.5, abs=1e-9)
    assert grad.shape == gt.shape
    image = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    parts = cd.total_loss(gt * 1.1, gt, conf, image)
    assert parts["total"] == pytest.approx(parts["silog_conf"] + parts["grad_conf"] + parts["edge_conf"], abs=1e-12)


def test_head_forward_zero_params_is_half():
    params = cd.HeadParams(4)
    out = cd.head_forward(np.zeros((4, 5, 6)), params)
    assert np.allclose(out, 0.5)


def test_benchmark_and_refine():
    samples = cd.make_corrupted_benchmark(count=1, width=32, height=24)
    s = samples[0]
    assert len(s["ensemble"]) == 5
    init = cd.perturbed_init(s["supervision"], 0.03, 0)
    conf = np.ones_like(init)
    out, curve = cd.refine_depth(init, s["supervision"], conf, s["image"], iters=5)
    assert out.shape == init.shape
    assert len(curve) == 6


def test_errors_are_translated():
    with pytest.raises(cd.ConfigError):
        cd.variance_to_confidence(np.zeros((2, 2)), 0.0)
    with pytest.raises(cd.DataError):
        cd.read_pfm("/nonexistent/file.pfm")
