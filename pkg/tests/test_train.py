import numpy as np
import pytest

from biofed.errors import EmptyShardError, SchemaMismatchError, ValidationError
from biofed.nn import Dense, Flatten, ModelParameters, Network, TrainConfig, sgd_step, train_local
from biofed.nn.train import epoch_order, fisher_yates


def small_net():
    return Network([Flatten(), Dense(8, 3)], (1, 2, 4))


def small_data(rng, n=10):
    x = rng.standard_normal((n, 1, 2, 4)).astype(np.float32)
    y = rng.integers(0, 3, size=n).astype(np.int64)
    return x, y


def test_train_config_validation():
    with pytest.raises(ValidationError) as exc:
        TrainConfig(learning_rate=0.0, batch_size=0, local_epochs=0, seed=-1)
    paths = [p for p, _ in exc.value.problems]
    assert paths == ["learning_rate", "batch_size", "local_epochs", "seed"]


def test_sgd_step_is_linear(rng):
    p = ModelParameters([("w", rng.standard_normal(5).astype(np.float32))])
    g = ModelParameters([("w", rng.standard_normal(5).astype(np.float32))])
    lr = 0.25
    stepped = sgd_step(p, g, lr)
    want = p["w"].astype(np.float64) - lr * g["w"].astype(np.float64)
    assert np.array_equal(stepped["w"], want.astype(np.float32))
    # doubling lr doubles the update, in float64 before the final cast
    double = sgd_step(p, g, 2 * lr)
    delta1 = p["w"].astype(np.float64) - stepped["w"].astype(np.float64)
    delta2 = p["w"].astype(np.float64) - double["w"].astype(np.float64)
    assert np.allclose(delta2, 2 * delta1, atol=1e-6)


def test_sgd_step_checks_schema_and_inputs(rng):
    p = ModelParameters([("w", np.zeros(3, dtype=np.float32))])
    g = ModelParameters([("v", np.zeros(3, dtype=np.float32))])
    with pytest.raises(SchemaMismatchError):
        sgd_step(p, g, 0.1)
    with pytest.raises(ValidationError):
        sgd_step(p, p, 0.0)
    # inputs stay untouched
    q = sgd_step(p, ModelParameters([("w", np.ones(3, dtype=np.float32))]), 0.1)
    assert np.all(p["w"] == 0.0)
    assert np.all(q["w"] == np.float32(-0.1))


def test_fisher_yates_is_a_permutation():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        order = fisher_yates(20, rng)
        assert sorted(order.tolist()) == list(range(20))
    assert fisher_yates(1, np.random.default_rng(0)).tolist() == [0]
    assert fisher_yates(0, np.random.default_rng(0)).tolist() == []


def test_epoch_order_determinism_and_spread():
    a = epoch_order(30, seed=7, epoch=0)
    assert np.array_equal(a, epoch_order(30, seed=7, epoch=0))
    assert not np.array_equal(a, epoch_order(30, seed=7, epoch=1))
    assert not np.array_equal(a, epoch_order(30, seed=8, epoch=0))


def test_train_local_deterministic(rng):
    net = small_net()
    x, y = small_data(rng)
    cfg = TrainConfig(learning_rate=0.1, batch_size=4, local_epochs=2, seed=9)
    p0 = net.init_params(0)
    out1, n1, loss1 = train_local(net, p0, x, y, cfg)
    out2, n2, loss2 = train_local(net, p0, x, y, cfg)
    assert out1 == out2
    assert (n1, loss1) == (n2, loss2)
    assert n1 == 10
    # a different shuffle seed changes the trajectory
    out3, _, _ = train_local(net, p0, x, y, TrainConfig(0.1, 4, 2, seed=10))
    assert not out1.bit_equal(out3)


def test_train_local_reduces_loss(rng):
    net = small_net()
    x, y = small_data(rng, n=30)
    p0 = net.init_params(0)
    before = net.loss(p0, x, y)
    trained, _, _ = train_local(net, p0, x, y, TrainConfig(0.2, 8, 10, seed=0))
    after = net.loss(trained, x, y)
    assert after < before


def test_last_partial_batch_is_trained(rng):
    net = small_net()
    x, y = small_data(rng, n=5)
    p0 = net.init_params(0)
    cfg = TrainConfig(learning_rate=0.5, batch_size=4, local_epochs=1, seed=0)
    full = train_local(net, p0, x, y, cfg)[0]

    # replay by hand: batches [0:4] and [4:5] in shuffle order
    order = epoch_order(5, 0, 0)
    current = p0
    for start in (0, 4):
        batch = order[start:start + 4]
        _, _, grads = net.backward(current, x[batch], y[batch])
        current = sgd_step(current, grads, 0.5)
    assert full == current


def test_train_local_rejects_empty_shard():
    net = small_net()
    with pytest.raises(EmptyShardError):
        train_local(net, net.init_params(0),
                    np.zeros((0, 1, 2, 4), dtype=np.float32), np.zeros(0, dtype=np.int64),
                    TrainConfig(0.1, 4, 1, seed=0))


def test_reported_loss_is_final_epoch_mean(rng):
    net = small_net()
    x, y = small_data(rng, n=8)
    p0 = net.init_params(0)
    cfg = TrainConfig(learning_rate=0.1, batch_size=8, local_epochs=1, seed=3)
    _, _, reported = train_local(net, p0, x, y, cfg)
    order = epoch_order(8, 3, 0)
    loss, _, _ = net.backward(p0, x[order], y[order])
    assert reported == pytest.approx(loss, rel=1e-12)
