import numpy as np
import pytest

import awrkit


def test_pinhole_round_trip():
    intr = awrkit.CameraIntrinsics(500.0, 500.0, 64.0, 64.0, 128, 128)
    assert awrkit.backproject(114.0, 64.0, 500.0, intr) == pytest.approx((50.0, 0.0, 500.0))
    u, v, d = awrkit.project(12.0, -7.0, 420.0, intr)
    assert awrkit.backproject(u, v, d, intr) == pytest.approx((12.0, -7.0, 420.0))
    with pytest.raises(awrkit.InvalidDepthError):
        awrkit.backproject(0.0, 0.0, -1.0, intr)


def test_softmax_and_aggregate_match_numpy():
    rng = np.random.default_rng(0)
    hyp = rng.uniform(-1, 1, (2, 30, 3))
    logits = rng.uniform(-2, 2, (2, 30))
    valid = rng.uniform(size=(2, 30)) < 0.7
    valid[:, 0] = True
    t = 0.5
    w = awrkit.softmax_weights(logits, valid, t)
    e = np.where(valid, np.exp(logits / t), 0.0)
    ref_w = e / e.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(w, ref_w, atol=1e-12)
    np.testing.assert_allclose(awrkit.awr_aggregate(hyp, logits, valid, t), np.einsum("jn,jnk->jk", ref_w, hyp), atol=1e-12)
    up = rng.uniform(-1, 1, (2, 3))
    dh, dl = awrkit.awr_gradients(hyp, logits, valid, up, t)
    np.testing.assert_allclose(dh, ref_w[:, :, None] * up[:, None, :], atol=1e-12)
    assert dl.shape == (2, 30)
    with pytest.raises(awrkit.UndecodableJointError):
        awrkit.softmax_weights(logits, np.zeros_like(valid), t)
    with pytest.raises(awrkit.ShapeError):
        awrkit.awr_aggregate(hyp, logits[:, :5], valid, t)


@pytest.mark.parametrize("rep", ["P", "H1", "H2", "O1", "O2", "O3"])
def test_ground_truth_round_trip(rep):
    frame = awrkit.synth_frame(3, 1, noise_sigma_mm=0.0, dropout=0.0)
    pose = frame["pose_mm"]
    assert pose.shape == (14, 3)
    crop = awrkit.crop_hand(frame["depth_mm"], tuple(pose.mean(axis=0)), frame["intrinsics"], out_size=32)
    grid = awrkit.dense_grid(crop, 16)
    norm = crop.normalize(pose)
    np.testing.assert_allclose(crop.denormalize(norm), pose, atol=1e-9)
    maps = awrkit.encode(rep, norm, grid)
    assert maps.shape == (14, awrkit.rep_channels(rep), 16, 16)
    decoded = crop.denormalize(awrkit.awr_decode(rep, maps, grid, temperature=0.02))
    per_joint, overall = awrkit.mean_joint_error(decoded[None], pose[None])
    assert per_joint.shape == (14,)
    assert overall < 250.0 / (2 * 16)
    det = awrkit.detection_decode(rep, maps, grid)
    assert det.shape == (14, 3)


def test_metrics():
    gts = np.zeros((2, 14, 3))
    preds = gts + np.array([3.0, 4.0, 0.0])
    _, overall = awrkit.mean_joint_error(preds, gts)
    assert overall == 5.0
    curve = awrkit.good_frame_curve(preds, gts, [4.0, 5.0, 6.0])
    np.testing.assert_array_equal(curve[:, 1], [0.0, 1.0, 1.0])
    with pytest.raises(awrkit.UsageError):
        awrkit.good_frame_curve(preds, gts, [5.0, 1.0])


def test_gradcheck_passes():
    results = awrkit.gradcheck(seed=1, trials=2)
    assert {r["op"] for r in results} >= {"conv2d", "awr_aggregate"}
    assert all(r["passed"] for r in results)
