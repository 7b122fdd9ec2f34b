import numpy as np
import pytest
import torch

from handxfer.align import align_trajectory
from handxfer.demos import synth_generate
from handxfer.errors import (BadMagic, ChecksumMismatch, EmptyDataset, NonAlignedInput,
                             ShapeMismatch, VersionMismatch)
from handxfer.scene import TaskSpec
from handxfer.vnpolicy import (PolicyConfig, TrainingSample, augment, build_model, desk_config,
                               encode_point_history, gradients, load_model, mse_loss, predict,
                               save_model, tiny_config, train, vn_activation, vn_linear)
from handxfer.vnpolicy.fileio import decode_model, encode_model
from handxfer.vnpolicy.model import vn_features
from handxfer.vnpolicy.train import AugmentationSample, windows


def random_rotation(rng):
    A = rng.normal(size=(3, 3))
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


# --- layers ---------------------------------------------------------------------

def test_vn_linear_examples():
    rng = np.random.default_rng(0)
    V = rng.normal(size=(6, 3))
    assert np.array_equal(vn_linear(np.eye(6), V), V)
    assert np.array_equal(vn_linear(rng.normal(size=(4, 6)), np.zeros((6, 3))), np.zeros((4, 3)))
    with pytest.raises(ShapeMismatch):
        vn_linear(np.eye(5), V)


def test_vn_linear_equivariance():
    rng = np.random.default_rng(1)
    W, V = rng.normal(size=(7, 5)), rng.normal(size=(11, 5, 3))
    for _ in range(100):
        R = random_rotation(rng)
        assert rel_err(vn_linear(W, V @ R.T), vn_linear(W, V) @ R.T) < 1e-9


def test_vn_activation_examples():
    V = np.array([[1.0, 2.0, 3.0]])
    one = np.ones((1, 1))
    assert np.array_equal(vn_activation(V, one, one), V)           # q = k
    assert np.array_equal(vn_activation(V, one, -one), np.zeros((1, 3)))  # q = -k
    V0 = np.zeros((1, 3))
    assert np.array_equal(vn_activation(V0, one, -one), V0)
    with pytest.raises(ShapeMismatch):
        vn_activation(np.ones((2, 3)), one, one)


def test_vn_activation_projection():
    rng = np.random.default_rng(2)
    V = rng.normal(size=(4, 3))
    Wq, Wk = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    out = vn_activation(V, Wq, Wk)
    q, k = Wq @ V, Wk @ V
    for c in range(4):
        d = q[c] @ k[c]
        want = q[c] if d >= 0 else q[c] - d / (k[c] @ k[c]) * k[c]
        assert np.allclose(out[c], want, atol=1e-15, rtol=0)
        assert out[c] @ k[c] >= -1e-12


def test_vn_activation_equivariance():
    rng = np.random.default_rng(3)
    Wq, Wk, V = rng.normal(size=(6, 6)), rng.normal(size=(6, 6)), rng.normal(size=(20, 6, 3))
    for _ in range(100):
        R = random_rotation(rng)
        assert rel_err(vn_activation(V @ R.T, Wq, Wk), vn_activation(V, Wq, Wk) @ R.T) < 1e-9


# --- model ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny():
    return build_model(tiny_config(seed=4))


def tiny_batch(config, B=3, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.normal(0, 0.1, size=(B, config.T_o, config.N, 3)),
            rng.normal(0, 0.1, size=(B, config.T_o, 5, 3)),
            rng.normal(0, 0.1, size=(B, config.T_p, 5, 3)))


def test_encoder_zero_and_equivariance(tiny):
    c = tiny.config
    assert np.array_equal(encode_point_history(tiny, np.zeros((c.T_o, 3))),
                          tiny.encoder.out.bias.detach().numpy())
    rng = np.random.default_rng(5)
    h = rng.normal(size=(c.T_o, 3))
    assert np.array_equal(encode_point_history(tiny, h), encode_point_history(tiny, h))
    R = random_rotation(rng)
    assert rel_err(vn_features(tiny, h @ R.T), vn_features(tiny, h) @ R.T) < 1e-9
    with pytest.raises(ShapeMismatch):
        encode_point_history(tiny, np.zeros((c.T_o + 1, 3)))


def test_predict_shape_determinism_permutation():
    model = build_model(desk_config(seed=1))
    c = model.config
    rng = np.random.default_rng(6)
    tips, objs = rng.normal(size=(c.T_o, 5, 3)), rng.normal(size=(c.T_o, c.N, 3))
    out = predict(model, tips, objs)
    assert out.shape == (c.T_p, 5, 3) and np.all(np.isfinite(out))
    assert np.array_equal(out, predict(model, tips, objs))
    for _ in range(5):
        perm = rng.permutation(c.N)
        assert np.abs(predict(model, tips, objs[:, perm]) - out).max() < 1e-9
    with pytest.raises(ShapeMismatch):
        predict(model, tips[:, :4], objs)


def test_parameter_counts():
    assert build_model(desk_config()).n_parameters() == 35770
    assert build_model(PolicyConfig()).n_parameters() == 574330


# --- loss, gradients --------------------------------------------------------------------

def test_mse_loss():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(30, 5, 3)), rng.normal(size=(30, 5, 3))
    assert mse_loss(a, a) == 0.0
    assert mse_loss(a + 1, a) == pytest.approx(1.0, abs=1e-12)
    total = 0.0
    for x, y in zip(a.ravel(), b.ravel()):
        total += (x - y) ** 2
    assert abs(mse_loss(a, b) - total / a.size) < 1e-12
    with pytest.raises(ShapeMismatch):
        mse_loss(a, b[:2])


def finite_difference(model, batch, h=1e-5):
    from handxfer.vnpolicy.train import loss_value
    fd = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            g = np.zeros(tuple(p.shape))
            flat = p.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + h
                up = loss_value(model, batch)
                flat[i] = old - h
                down = loss_value(model, batch)
                flat[i] = old
                g.flat[i] = (up - down) / (2 * h)
            fd[name] = g
    return fd


def test_gradients_match_finite_difference(tiny):
    batch = tiny_batch(tiny.config)
    grads = gradients(tiny, batch)
    fd = finite_difference(tiny, batch)
    assert set(grads) == set(fd)
    for name in grads:
        # relative error per parameter group, normalised by the group's gradient scale
        assert rel_err(grads[name], fd[name]) < 1e-4, name


def test_gradient_linearity_and_zero_loss(tiny):
    batch = tiny_batch(tiny.config)
    g1, g3 = gradients(tiny, batch), gradients(tiny, batch, scale=3.0)
    for name in g1:
        assert np.allclose(g3[name], 3.0 * g1[name], rtol=1e-12, atol=1e-18)
    obj, tips, _ = batch
    target = predict(tiny, tips, obj)
    g0 = gradients(tiny, (obj, tips, target))
    assert np.all(g0["head.2.bias"] == 0.0)


# --- augmentation and windows --------------------------------------------------------------

def sample(seed=8, T_o=10, T_p=30, N=32):
    rng = np.random.default_rng(seed)
    return TrainingSample(rng.normal(size=(T_o, N, 3)), rng.normal(size=(T_o, 5, 3)),
                          rng.normal(size=(T_p, 5, 3)))


def test_augment_identity():
    s = sample()
    out = augment(s, draw=AugmentationSample.identity(10))
    assert np.array_equal(out.input_objects, s.input_objects)
    assert np.array_equal(out.input_fingertips, s.input_fingertips)
    assert np.array_equal(out.target_fingertips, s.target_fingertips)


def test_augment_scales_distances():
    s = sample()
    rng = np.random.default_rng(9)
    for _ in range(20):
        d = AugmentationSample.draw(rng, 10)
        out = augment(s, draw=AugmentationSample(d.translation, d.scale, d.yaw, np.zeros((10, 5, 3))))
        for a, b in ((s.input_objects[3], out.input_objects[3]),
                     (s.target_fingertips[7], out.target_fingertips[7])):
            da = np.linalg.norm(a[:, None] - a[None], axis=-1)
            db = np.linalg.norm(b[:, None] - b[None], axis=-1)
            assert np.allclose(db, d.scale * da, rtol=1e-12, atol=1e-12)


def test_augment_noise_only_on_inputs():
    s = sample()
    d = AugmentationSample.draw(np.random.default_rng(10), 10)
    other = AugmentationSample(d.translation, d.scale, d.yaw,
                               AugmentationSample.draw(np.random.default_rng(11), 10).fingertip_noise)
    a, b = augment(s, draw=d), augment(s, draw=other)
    assert np.array_equal(a.target_fingertips, b.target_fingertips)
    assert np.array_equal(a.input_objects, b.input_objects)
    assert not np.array_equal(a.input_fingertips, b.input_fingertips)
    assert np.abs(d.fingertip_noise).max() <= 0.02


def test_augment_vertical_only_by_translation():
    s = sample()
    d = AugmentationSample(np.array([0.1, -0.2, 0.05]), 1.0, 0.7, np.zeros((10, 5, 3)))
    out = augment(s, draw=d)
    assert np.allclose(out.input_objects[..., 2], s.input_objects[..., 2] + 0.05, atol=1e-12)


def test_windows_padding():
    traj = synth_generate(TaskSpec(task="reach"), 1, 0).in_scene
    obj, tips, target = windows(traj, 10, 30)
    T = traj.n_frames
    assert len(obj) == T - 1
    assert np.array_equal(tips[0], np.repeat(traj.fingertips[:1], 10, axis=0))
    assert np.array_equal(target[-1], np.repeat(traj.fingertips[-1:], 30, axis=0))
    assert np.array_equal(target[5][0], traj.fingertips[6])
    assert np.array_equal(tips[20][-1], traj.fingertips[20])


# --- training ----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def reach_data():
    ds = synth_generate(TaskSpec(task="reach", N=8), 4, 2)
    return [ds.in_scene] + [align_trajectory(w, ds.in_scene).aligned for w in ds.in_the_wild]


def small_config(**kw):
    base = desk_config(N=8, T_o=4, T_p=6, token_dim=16, vn_channels=(8,), head_hidden=(32,),
                       transformer={"layers": 1, "heads": 2, "feedforward_dim": 32},
                       batch_size=16, learning_rate=3e-3)
    return base.replace(**kw)


def test_train_overfits_single_trajectory(reach_data):
    log = train(reach_data[:1], small_config(epochs=200, augment=False))[1].epoch_loss
    assert log[-1] < 0.01 * log[0]


def test_train_deterministic_and_progressing(reach_data):
    cfg = small_config(epochs=25)
    m1, l1 = train(reach_data, cfg)
    m2, l2 = train(reach_data, cfg)
    assert l1.epoch_loss == l2.epoch_loss
    assert encode_model(m1) == encode_model(m2)
    assert np.mean(l1.epoch_loss[-10:]) <= np.mean(l1.epoch_loss[:10])


def test_train_rejects_bad_input(reach_data):
    with pytest.raises(EmptyDataset):
        train([], small_config())
    raw = synth_generate(TaskSpec(task="reach", N=8), 2, 2).in_the_wild
    with pytest.raises(NonAlignedInput):
        train(raw, small_config())


# --- model file --------------------------------------------------------------------------

def test_model_file_round_trip(tiny, tmp_path):
    path = tmp_path / "m.ainm"
    save_model(tiny, path)
    back = load_model(path)
    obj, tips, _ = tiny_batch(tiny.config, B=1)
    assert np.array_equal(predict(back, tips[0], obj[0]), predict(tiny, tips[0], obj[0]))
    assert back.config == tiny.config
    assert encode_model(back) == path.read_bytes()


def test_model_file_errors(tiny):
    data = bytearray(encode_model(tiny))
    bad = bytearray(data)
    bad[:4] = b"NOPE"
    with pytest.raises(BadMagic):
        decode_model(bytes(bad))
    bad = bytearray(data)
    bad[4] = 7
    with pytest.raises(VersionMismatch):
        decode_model(bytes(bad))
    bad = bytearray(data)
    bad[len(bad) - 40] ^= 0x01
    with pytest.raises(ChecksumMismatch):
        decode_model(bytes(bad))
