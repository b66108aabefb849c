"""Shared builders for federation tests."""

import threading

import numpy as np

from biofed.data import partition, synthesize
from biofed.fed import ClientRuntime, FederationConfig, make_evaluator, run_federation
from biofed.nn import TrainConfig, reference_network
from biofed.transport import LoopbackTransport, SocketClientSession, SocketServerTransport

TINY_TRAIN = TrainConfig(learning_rate=0.1, batch_size=4, local_epochs=1, seed=0)


def tiny_dataset(seed=0, classes=3, per_class=6, shape=(1, 8, 8), noise=0.05):
    return synthesize(classes, per_class, shape, seed=seed, noise=noise)


def build_clients(dataset, num_clients, strategy="iid", seed=0):
    network = reference_network(dataset.manifest.image_shape, dataset.manifest.num_classes)
    shards = [s.materialize(dataset) for s in partition(dataset.manifest, num_clients, strategy, seed)]
    runtimes = {s.client_id: ClientRuntime(s.client_id, network, s.x, s.y) for s in shards}
    return network, shards, runtimes


def loopback_federation(dataset, rounds=2, num_clients=3, seed=0, train=TINY_TRAIN,
                        record_frames=False, out_dir=None, evaluate=True):
    """Run one loopback federation; returns (reports, params, transport, network)."""
    network, _, runtimes = build_clients(dataset, num_clients, seed=seed)
    transport = LoopbackTransport({cid: rt.handle for cid, rt in runtimes.items()},
                                  record_frames=record_frames)
    evaluator = None
    if evaluate:
        test_x, test_y = dataset.test_arrays()
        evaluator = make_evaluator(network, test_x, test_y)
    cfg = FederationConfig(num_clients=num_clients, rounds=rounds, train_config=train, seed=seed)
    reports, params = run_federation(cfg, transport, network, evaluator, out_dir=out_dir)
    return reports, params, transport, network


def socket_federation(dataset, rounds=2, num_clients=3, seed=0, train=TINY_TRAIN, out_dir=None):
    """Same federation as loopback_federation but over real TCP sessions.

    Clients run on threads inside this process; the orchestration happens on
    the calling thread exactly as the server command would do it.
    """
    network, _, runtimes = build_clients(dataset, num_clients, seed=seed)
    server = SocketServerTransport("127.0.0.1", 0, expected_clients=num_clients)
    errors = []

    def client_main(runtime):
        try:
            session = SocketClientSession(server.host, server.port, runtime.client_id)
            session.join()
            try:
                session.serve(runtime.handle)
            finally:
                session.close()
        except Exception as exc:  # surfaced by the caller after join()
            errors.append((runtime.client_id, exc))

    threads = [threading.Thread(target=client_main, args=(rt,)) for rt in runtimes.values()]
    for t in threads:
        t.start()
    try:
        assert server.wait_for_clients(10.0), "clients failed to join in time"
        test_x, test_y = dataset.test_arrays()
        evaluator = make_evaluator(network, test_x, test_y)
        cfg = FederationConfig(num_clients=num_clients, rounds=rounds, train_config=train, seed=seed)
        reports, params = run_federation(cfg, server, network, evaluator, out_dir=out_dir)
    finally:
        server.close()
        for t in threads:
            t.join(timeout=10.0)
    assert not errors, f"client thread failures: {errors}"
    return reports, params, network


def random_params(rng, names=("a", "b"), shape=(3, 2)):
    from biofed.nn import ModelParameters

    return ModelParameters([(n, rng.standard_normal(shape).astype(np.float32)) for n in names])
