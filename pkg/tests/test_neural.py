import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iotwm import neural as nn
from iotwm.errors import FormatError, ParameterError, ShapeError, TrainingDivergedError

from conftest import embedder_task, finite_difference_worst


def small_problem(seed=0, steps=5, input_dim=3, output_dim=2):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(steps, input_dim)), rng.normal(size=(steps, output_dim))


def test_gradient_matches_finite_differences():
    net = nn.Network(3, [2], 2, seed=1)
    x, y = small_problem()
    assert finite_difference_worst(net, x, y) < 1e-4


def test_gradient_check_stacked_and_batched():
    net = nn.Network(2, [3, 2], 1, seed=4)
    rng = np.random.default_rng(9)
    x, y = rng.normal(size=(4, 3, 2)), rng.normal(size=(4, 3, 1))
    assert finite_difference_worst(net, x, y) < 1e-4


def test_every_parameter_gets_a_finite_gradient():
    net = nn.Network(3, [2, 4], 2, seed=0)
    x, y = small_problem()
    _, grads = nn.grad(net, x, y)
    assert set(grads) == set(net.params())
    for name, g in grads.items():
        assert g.shape == net.params()[name].shape
        assert np.all(np.isfinite(g))


def test_zero_weights_give_zero_lstm_output():
    net = nn.Network(3, [4], 2, zero=True)
    res = nn.forward(net, np.random.default_rng(0).normal(size=(6, 3)))
    assert np.all(res.hidden[0] == 0.0)
    assert np.all(res.outputs == 0.0)


def test_forward_is_deterministic():
    x, _ = small_problem()
    a = nn.Network(3, [5], 2, seed=7)(x)
    b = nn.Network(3, [5], 2, seed=7)(x)
    assert np.array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 50.0))
def test_hidden_states_stay_inside_unit_interval(seed, scale):
    net = nn.Network(2, [3], 1, seed=seed)
    x = np.random.default_rng(seed).uniform(-scale, scale, (8, 2))
    h = nn.forward(net, x).hidden[0]
    assert np.all(np.abs(h) < 1.0)


def test_wrong_input_width_is_a_shape_error():
    with pytest.raises(ShapeError):
        nn.Network(3, [2], 1)(np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        nn.grad(nn.Network(3, [2], 1), np.zeros((4, 3)), np.zeros((4, 2)))


def test_zero_residual_gives_zero_bias_gradient():
    net = nn.Network(3, [2], 2, seed=2)
    x, _ = small_problem()
    loss, grads = nn.grad(net, x, net(x))
    assert loss == 0.0
    assert np.all(grads["fc.b"] == 0.0)


def test_output_gradients_scale_with_residual():
    net = nn.Network(3, [2], 2, seed=2)
    x, y = small_problem()
    out = net(x)
    _, g1 = nn.grad(net, x, out - (out - y))
    _, g3 = nn.grad(net, x, out - 3.0 * (out - y))
    for name in ("fc.W", "fc.b"):
        np.testing.assert_allclose(g3[name], 3.0 * g1[name], rtol=1e-12, atol=1e-15)


def test_masked_loss_ignores_masked_steps():
    net = nn.Network(3, [2], 2, seed=2)
    x, y = small_problem()
    mask = np.zeros((5, 1))
    mask[-1] = 1
    y2 = y.copy()
    y2[:-1] += 100.0
    assert nn.grad(net, x, y, mask)[0] == pytest.approx(nn.grad(net, x, y2, mask)[0])


def test_embedder_training_reduces_mse_tenfold():
    x, w = embedder_task()
    net = nn.Network(2, [8], 1, seed=0)
    curve = nn.train(net, x, w, nn.TrainConfig(learning_rate=0.5, epochs=2000))
    assert curve[0] / min(curve) >= 10
    assert nn.mse(net(x), w) == pytest.approx(min(curve))


def test_zero_learning_rate_keeps_curve_flat():
    x, w = embedder_task(windows=20)
    net = nn.Network(2, [4], 1, seed=0)
    before = {k: v.copy() for k, v in net.params().items()}
    curve = nn.train(net, x, w, nn.TrainConfig(learning_rate=0.0, epochs=10))
    assert len(curve) == 11
    assert all(c == curve[0] for c in curve)
    for k, v in net.params().items():
        assert np.array_equal(v, before[k])


def test_training_is_deterministic():
    x, w = embedder_task(windows=20)
    cfg = nn.TrainConfig(learning_rate=0.3, epochs=30)
    assert nn.train(nn.Network(2, [4], 1, seed=3), x, w, cfg) == \
        nn.train(nn.Network(2, [4], 1, seed=3), x, w, cfg)


def test_final_loss_never_above_initial():
    x, w = embedder_task(windows=20)
    net = nn.Network(2, [4], 1, seed=0)
    curve = nn.train(net, x, w, nn.TrainConfig(learning_rate=1.0, epochs=50))
    assert nn.mse(net(x), w) <= curve[0]


def test_patience_stops_early():
    x, w = embedder_task(windows=20)
    curve = nn.train(nn.Network(2, [4], 1, seed=0), x, w,
                     nn.TrainConfig(learning_rate=0.0, epochs=100, patience=3))
    assert len(curve) == 5


@pytest.mark.filterwarnings("ignore:overflow")
def test_divergence_is_reported():
    x, w = embedder_task(windows=10)
    with pytest.raises(TrainingDivergedError, match="smaller learning rate"):
        nn.train(nn.Network(2, [4], 1, seed=0), x, w * 1e200,
                 nn.TrainConfig(learning_rate=1.0, epochs=5, clip_norm=None))


def test_bad_train_config():
    with pytest.raises(ParameterError):
        nn.TrainConfig(epochs=0)
    with pytest.raises(ParameterError):
        nn.TrainConfig(learning_rate=-1)
    with pytest.raises(ParameterError):
        nn.train(nn.Network(2, [2], 1), np.zeros((0, 1, 2)), np.zeros((0, 1, 1)),
                 nn.TrainConfig())


def test_adam_reduces_loss():
    x, y = small_problem(steps=8)
    net = nn.Network(3, [6], 2, seed=0)
    opt = nn.Adam(0.05)
    first, _ = nn.grad(net, x, y)
    for _ in range(200):
        _, g = nn.grad(net, x, y)
        opt.step(net.params(), g)
    assert nn.grad(net, x, y)[0] < 0.2 * first


def test_checkpoint_roundtrip(tmp_path):
    net = nn.Network(3, [4, 2], 2, seed=5)
    path = tmp_path / "net.json"
    nn.save_checkpoint(net, path)
    back = nn.load_checkpoint(path)
    x, _ = small_problem()
    assert back.hidden_dims == [4, 2]
    assert np.array_equal(back(x), net(x))


def test_checkpoint_rejects_foreign_blobs():
    blob = nn.to_checkpoint(nn.Network(2, [2], 1))
    with pytest.raises(FormatError):
        nn.from_checkpoint({**blob, "version": 99})
    with pytest.raises(FormatError):
        nn.from_checkpoint({**blob, "format": "other"})
    broken = json.loads(json.dumps(blob))
    broken["params"]["fc.W"]["shape"] = [5, 5]
    with pytest.raises(FormatError):
        nn.from_checkpoint(broken)


def test_loss_curve_csv(tmp_path):
    path = tmp_path / "curve.csv"
    nn.save_loss_curve([0.5, 0.25], path)
    assert path.read_text().splitlines() == ["epoch,mse", "0,0.5", "1,0.25"]


def test_copy_is_independent():
    net = nn.Network(2, [3], 1, seed=0)
    clone = net.copy()
    clone.W += 1.0
    assert not np.array_equal(clone.W, net.W)


def test_embedder_dataset_targets_follow_embedding():
    from iotwm.watermark import embed, gen_pn_key
    key = gen_pn_key(4, 1)
    y = np.random.default_rng(0).normal(size=(3, 8))
    bits = np.array([[1, -1], [-1, -1], [1, 1]])
    x, w = nn.embedder_dataset(y, key, bits, 0.5)
    assert x.shape == (8, 3, 2) and w.shape == (8, 3, 1)
    for b in range(3):
        np.testing.assert_allclose(w[:, b, 0], embed(y[b], key, bits[b], 0.5).samples)


def test_lstm_stream_is_balanced_and_chained():
    from iotwm.watermark import gen_pn_key
    key = gen_pn_key(10, 2)
    src = nn.LstmStreamSource(nn.fingerprint_network(10, 2), key, 10, salt=2)
    rng = np.random.default_rng(0)
    ones, flips, total = 0, 0, 0
    prev = src.next_bits()
    for _ in range(300):
        src.observe(rng.normal(0, 0.5, 100))
        bits = src.next_bits()
        ones += np.sum(bits == 1)
        flips += np.sum(bits != prev)
        total += len(bits)
        prev = bits
    assert 0.45 < ones / total < 0.55
    assert 0.45 < flips / total < 0.55
