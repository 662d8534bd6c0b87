"""End-to-end smoke tests of the native module.

Numeric spot checks pin a few hand-derived values; the pipeline test drives
gen-data, train, predict and evaluate on a tiny 24^3 phantom set (the
smallest slice the discriminator's five conv layers accept) so a full run
stays within seconds.
"""

import json
import math
import os

import pytest

import bcgan

TINY_CONFIG = json.dumps(
    {
        "seed": 11,
        "t_mc": 3,
        "dataset": {"num_subjects": 4, "train_ratio": 0.75},
        "phantom": {"nx": 24, "ny": 24, "nz": 24},
        "generator": {
            "input_size": 24,
            "levels": 3,
            "base_channels": 4,
            "dropout_positions": [2, 3],
        },
        "train": {"epochs": 1, "batch_size": 4, "resize_to": 27, "crop_to": 24},
    }
)


def test_normal_cdf_quantile_roundtrip():
    assert bcgan.normal_cdf(0.0) == 0.5
    assert bcgan.normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-14)
    for p in (0.025, 0.31, 0.5, 0.77, 0.999):
        assert bcgan.normal_cdf(bcgan.normal_quantile(p)) == pytest.approx(p, abs=1e-12)
    with pytest.raises(ValueError):
        bcgan.normal_quantile(0.0)


def test_paired_ttest_worked_example():
    t, df, p = bcgan.paired_ttest([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    assert t == pytest.approx(2 * math.sqrt(3), abs=1e-12)
    assert df == 2.0
    assert p == pytest.approx(0.07417990022744858, abs=1e-9)
    assert bcgan.student_t_pvalue(0.0, 5.0) == 1.0
    with pytest.raises(ValueError):
        bcgan.paired_ttest([1.0, 1.0], [0.0, 0.0])  # zero-variance differences


def test_concrete_gate_matches_closed_form():
    p, t, u = 0.3, 0.1, 0.42
    z = math.log(p) - math.log1p(-p) + math.log(u) - math.log1p(-u)
    want = 1.0 / (1.0 + math.exp(-z / t))
    assert bcgan.concrete_gate(p, t, u) == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValueError):
        bcgan.concrete_gate(1.5, 0.1, 0.5)
    # entropy term pulls the regularizer down as p leaves the endpoints
    r_mid = bcgan.concrete_regularizer(0.5, 1.0, 8)
    r_edge = bcgan.concrete_regularizer(0.01, 1.0, 8)
    assert r_mid < r_edge
    assert bcgan.bernoulli_entropy(0.5) == pytest.approx(math.log(2.0), abs=1e-15)


def test_calibration_map_roundtrip(tmp_path):
    # four posteriors at mu 0 sigma 1 and truths symmetric about it: half the
    # PIT values sit on each side, so the fitted map leaves 0.5 alone
    mu = [0.0, 0.0, 0.0, 0.0]
    sigma = [1.0, 1.0, 1.0, 1.0]
    truth = [-1.0, -0.1, 0.1, 1.0]
    cal = bcgan.fit_calibration(mu, sigma, truth, grid_size=100)
    assert cal.apply(0.5) == 0.5
    assert cal.calibration_set_size == 4
    lo, hi = bcgan.calibrated_interval(10.0, 2.0, cal, 0.95)
    assert lo < 10.0 < hi

    path = str(tmp_path / "cal.csv")
    bcgan.save_calibration(cal, path)
    back = bcgan.load_calibration(path)
    assert back.grid == cal.grid
    assert back.values == cal.values
    with pytest.raises(ValueError):
        bcgan.fit_calibration([0.0], [1.0, 1.0], [0.0])


def test_phantom_is_deterministic():
    a = bcgan.generate_phantom(7, nx=16, ny=16, nz=16)
    b = bcgan.generate_phantom(7, nx=16, ny=16, nz=16)
    c = bcgan.generate_phantom(8, nx=16, ny=16, nz=16)
    assert a["shape"] == (16, 16, 16)
    assert len(a["contrast_a"]) == 16 * 16 * 16
    assert a["contrast_a"] == b["contrast_a"]
    assert a["contrast_b"] == b["contrast_b"]
    assert a["contrast_a"] != c["contrast_a"]
    assert all(0.0 <= v <= 1.0 for v in a["contrast_a"])
    default = bcgan.generate_phantom(7)
    assert default["shape"] == (32, 32, 32)


def test_rvol_roundtrip(tmp_path):
    path = str(tmp_path / "vol.rvol")
    values = [float(i) / 10.0 for i in range(2 * 3 * 4)]
    bcgan.write_rvol(path, (2, 3, 4), values)
    shape, back = bcgan.read_rvol(path)
    assert shape == (2, 3, 4)
    assert back == pytest.approx(values)
    with pytest.raises(ValueError):
        bcgan.write_rvol(path, (2, 3, 4), values[:-1])


def test_metrics_hand_values():
    pred = [1.0, 2.0, 3.0, 9.0]
    truth = [0.0, 2.0, 4.0, 0.0]
    mask = [1, 1, 1, 0]
    assert bcgan.rmse(pred, truth, mask) == pytest.approx(math.sqrt(2.0 / 3.0), abs=1e-12)
    assert bcgan.nstd([1.0, 2.0, 3.0, 9.0], mask) == pytest.approx(
        math.sqrt(14.0 / 3.0), abs=1e-12
    )
    recalls, rmses = bcgan.sparsification_curve(
        [3.0, 1.0, 2.0, 4.0], [0.4, 0.1, 0.2, 0.3], [1.0, 0.5]
    )
    assert recalls == [1.0, 0.5]
    assert rmses[0] == pytest.approx(math.sqrt(30.0 / 4.0), abs=1e-12)
    assert rmses[1] == pytest.approx(math.sqrt(5.0 / 2.0), abs=1e-12)
    with pytest.raises(ValueError):
        bcgan.rmse(pred, truth, [0, 0, 0, 0])


def test_pipeline_end_to_end(tmp_path):
    data = str(tmp_path / "data")
    run = str(tmp_path / "run")
    post = str(tmp_path / "post")
    out = str(tmp_path / "eval")

    bcgan.run_gen_data(TINY_CONFIG, data)
    with open(os.path.join(data, "manifest.json")) as fh:
        manifest = json.load(fh)
    test_ids = [s["subject_id"] for s in manifest["subjects"] if s["split"] == "test"]
    assert len(test_ids) == 1  # 4 subjects at ratio 0.75

    result = bcgan.run_train(TINY_CONFIG, data, run)
    assert os.path.exists(result["final_checkpoint"])
    assert len(result["history"]) == 1
    row = result["history"][0]
    assert row["epoch"] == 1
    assert math.isfinite(row["g_l1"]) and row["g_l1"] > 0.0
    assert all(0.0 < p < 1.0 for p in row["dropout_p"])

    bcgan.run_predict(TINY_CONFIG, data, result["final_checkpoint"], post, passes=3)
    posterior = bcgan.read_posterior(post, test_ids[0])
    assert posterior["shape"] == (24, 24, 24)
    assert posterior["num_passes"] == 3
    assert posterior["scale_domain"] == "byte"
    assert any(m for m in posterior["mask"])
    assert all(s >= 0.0 for s in posterior["std"])

    report = bcgan.run_evaluate(TINY_CONFIG, data, post, out)
    assert os.path.exists(os.path.join(out, "metrics.json"))
    assert len(report["subjects"]) == 1
    assert math.isfinite(report["mean_rmse"])
    assert report["mean_nrmse"] > 0.0
    assert report["identity_nrmse"] > 0.0
    assert "ttest" not in report

    with pytest.raises(bcgan.PipelineError):
        bcgan.run_gen_data(TINY_CONFIG, data)  # refuses to overwrite
    with pytest.raises(bcgan.ConfigError):
        bcgan.run_gen_data('{"t_mc": 1}', str(tmp_path / "other"))
