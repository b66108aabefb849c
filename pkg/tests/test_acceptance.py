"""One test per acceptance target; each enforces its stated tolerance and
time budget and prints the measured values (visible with -s or on failure)."""

import random
import struct
import time

import numpy as np

from biofed.data import synthesize
from biofed.errors import ProtocolError
from biofed.fed import FederationConfig, FitResult, fedavg, make_evaluator, run_centralized
from biofed.metrics import ConfusionMatrix, derive_metrics, evaluate_model
from biofed.nn import ModelParameters, TrainConfig, reference_network
from biofed.transport.protocol import (
    MESSAGE_TYPES,
    PROTOCOL_VERSION,
    Error,
    EvaluateInstruction,
    EvaluateResultMsg,
    FitInstruction,
    FitResultMsg,
    Join,
    JoinAck,
    Shutdown,
    decode,
    encode,
)
from biofed.twins import TwinStore, model_version

import test_gradients as grad_suite
from biofed import cli
from biofed.data.synthetic import sample_pixels
from biofed.nn.kernels import conv2d_forward
from helpers import TINY_TRAIN, build_clients, loopback_federation, socket_federation, random_params
from oracles import conv2d_oracle, rel_err

# pinned after the first full run of the desk-scale experiment; criterion 5
# regression-tests against these at one accuracy point
PINNED_FEDERATED_ACC = 1.0
PINNED_CENTRALIZED_ACC = 1.0


def test_criterion_1_gradient_correctness():
    started = time.perf_counter()
    grad_suite.test_dense_gradients()
    grad_suite.test_conv_gradients()
    grad_suite.test_conv_stride_2_no_padding_gradients()
    grad_suite.test_relu_gradients()
    grad_suite.test_maxpool_gradients_through_network()
    grad_suite.test_maxpool_kernel_gradient_direct()
    grad_suite.test_softmax_cross_entropy_gradient()
    elapsed = time.perf_counter() - started
    print(f"criterion 1: rel err < {grad_suite.TOL} over {grad_suite.SEEDS_PER_KIND} seeds "
          f"per layer kind, {elapsed:.1f}s")
    assert elapsed < 30.0


def test_criterion_2_convolution_oracle():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n, cin, cout = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 5)
        h, w = rng.integers(3, 9), rng.integers(3, 9)
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        x = rng.standard_normal((n, cin, h, w)).astype(np.float32)
        wt = rng.standard_normal((cout, cin, k, k)).astype(np.float32)
        b = rng.standard_normal(cout).astype(np.float32)
        got = conv2d_forward(x, wt, b, stride, padding)
        want = conv2d_oracle(x, wt, b, stride, padding)
        worst = max(worst, rel_err(got, want))
    elapsed = time.perf_counter() - started
    print(f"criterion 2: 50 shapes, max rel err {worst:.2e}, {elapsed:.1f}s")
    assert worst < 1e-6
    assert elapsed < 10.0


def test_criterion_3_fedavg_algebra(rng):
    started = time.perf_counter()

    def fit(cid, values, n):
        return FitResult(cid, 0, ModelParameters([("w", np.asarray(values, dtype=np.float32))]), n, 0.0)

    # analytic case
    assert fedavg([fit("a", [2.0], 1), fit("b", [4.0], 3)])["w"][0] == np.float32(3.5)
    # idempotence
    same = fedavg([fit("a", [1.25, -2.0], 5), fit("b", [1.25, -2.0], 9)])
    assert same["w"].tolist() == [1.25, -2.0]
    # permutation invariance, bit-exact
    results = [
        FitResult(f"client-{i:03d}", 0, random_params(rng, ["w", "v"], (4, 3)), int(rng.integers(1, 40)), 0.0)
        for i in range(6)
    ]
    base = fedavg(results)
    for _ in range(10):
        rng.shuffle(results)
        assert fedavg(results).bit_equal(base)
    # convex bounds per coordinate
    stacked = np.stack([r.params["w"] for r in results]).astype(np.float64)
    ulp = np.spacing(np.float32(np.abs(stacked).max()))
    out = base["w"].astype(np.float64)
    assert np.all(out >= stacked.min(axis=0) - ulp)
    assert np.all(out <= stacked.max(axis=0) + ulp)
    elapsed = time.perf_counter() - started
    print(f"criterion 3: algebra checks in {elapsed:.2f}s")
    assert elapsed < 1.0


def test_criterion_4_degenerate_federation_matches_centralized(small_dataset):
    started = time.perf_counter()
    train_x, train_y = small_dataset.train_arrays()
    for seed in (0, 3, 11):
        _, fed_params, _, network = loopback_federation(
            small_dataset, rounds=2, num_clients=1, seed=seed, evaluate=False
        )
        _, cent_params = run_centralized(network, train_x, train_y, TINY_TRAIN, epochs=2, seed=seed)
        assert fed_params.bit_equal(cent_params), f"seed {seed}: parameters differ"
    elapsed = time.perf_counter() - started
    print(f"criterion 4: bit-identical for 3 seeds, {elapsed:.1f}s")
    assert elapsed < 60.0


def test_criterion_5_desk_scale_experiment():
    started = time.perf_counter()
    dataset = synthesize(33, 20, (1, 16, 16), seed=0, noise=0.1)
    network = reference_network(dataset.manifest.image_shape, dataset.manifest.num_classes)
    train = TrainConfig(learning_rate=0.08, batch_size=16, local_epochs=2, seed=0)

    _, _, runtimes = build_clients(dataset, 3)
    from biofed.fed import run_federation
    from biofed.transport import LoopbackTransport

    transport = LoopbackTransport({cid: rt.handle for cid, rt in runtimes.items()})
    test_x, test_y = dataset.test_arrays()
    evaluator = make_evaluator(network, test_x, test_y)
    cfg = FederationConfig(num_clients=3, rounds=15, train_config=train, seed=0)
    fed_reports, _ = run_federation(cfg, transport, network, evaluator)
    fed_acc = fed_reports[-1].metrics.accuracy

    train_x, train_y = dataset.train_arrays()
    cent_reports, _ = run_centralized(
        network, train_x, train_y, train, epochs=15, seed=0, evaluator=evaluator
    )
    cent_acc = cent_reports[-1].metrics.accuracy
    elapsed = time.perf_counter() - started

    print(f"criterion 5: federated {fed_acc:.4f}, centralized {cent_acc:.4f}, "
          f"delta {fed_acc - cent_acc:+.4f}, {elapsed:.1f}s")
    assert fed_acc >= 0.80, f"federated accuracy {fed_acc:.4f} below 0.80"
    assert cent_acc >= 0.80, f"centralized accuracy {cent_acc:.4f} below 0.80"
    assert abs(fed_acc - cent_acc) <= 0.05, "federated not within 5 points of centralized"
    assert abs(fed_acc - PINNED_FEDERATED_ACC) <= 0.01, "federated accuracy drifted off its pin"
    assert abs(cent_acc - PINNED_CENTRALIZED_ACC) <= 0.01, "centralized accuracy drifted off its pin"
    assert elapsed < 600.0


def _random_message(rng):
    kind = MESSAGE_TYPES[rng.randrange(len(MESSAGE_TYPES))]
    cid = f"client-{rng.randrange(1000):03d}"
    r = rng.randrange(2**16)
    if kind in (Join, JoinAck):
        return kind(cid, r)
    if kind is Shutdown:
        return Shutdown(r)
    if kind is Error:
        return Error(rng.randrange(2**16), "x" * rng.randrange(0, 20), r)
    params = ModelParameters([
        ("w", np.float32(rng.random()) * np.ones((rng.randrange(1, 4), 2), dtype=np.float32)),
        ("b", np.arange(rng.randrange(1, 5), dtype=np.float32)),
    ])
    if kind is FitInstruction:
        cfg = TrainConfig(rng.random() + 1e-6, rng.randrange(1, 99), rng.randrange(1, 9), rng.randrange(2**32))
        return FitInstruction(r, cfg, params)
    if kind is FitResultMsg:
        return FitResultMsg(cid, r, params, rng.randrange(1, 2**40), rng.uniform(-10, 10))
    if kind is EvaluateInstruction:
        return EvaluateInstruction(r, params)
    k = rng.randrange(1, 4)
    counts = np.array([[rng.randrange(100) for _ in range(k)] for _ in range(k)], dtype=np.int64)
    return EvaluateResultMsg(cid, r, rng.uniform(0, 5), ConfusionMatrix(counts))


def test_criterion_6_transport_soundness(small_dataset):
    started = time.perf_counter()
    rng = random.Random(6)

    # round trips across every variant
    for _ in range(300):
        msg = _random_message(rng)
        back, consumed = decode(encode(msg))
        assert back == msg
        assert consumed == len(encode(msg))

    # decoder survives heavy fuzzing
    bases = [encode(_random_message(rng)) for _ in range(20)]
    attempts = 0
    for trial in range(100_000):
        style = trial % 3
        if style == 0:
            blob = rng.randbytes(rng.randrange(0, 64))
        elif style == 1:
            payload = rng.randbytes(rng.randrange(0, 48))
            blob = struct.pack("<IBHI", len(payload), rng.randrange(0, 16),
                               rng.randrange(0, 3) or PROTOCOL_VERSION, rng.randrange(0, 2**16)) + payload
        else:
            base = bytearray(bases[trial % len(bases)])
            base[rng.randrange(len(base))] ^= 1 << rng.randrange(8)
            blob = bytes(base)
        attempts += 1
        try:
            msg, _ = decode(blob)
            assert type(msg) in MESSAGE_TYPES
        except ProtocolError:
            pass
    assert attempts >= 100_000

    # socket and loopback federations agree bit for bit on equal seeds
    _, sock_params, _ = socket_federation(small_dataset, rounds=2, num_clients=3, seed=0)
    _, loop_params, _, _ = loopback_federation(small_dataset, rounds=2, num_clients=3, seed=0)
    assert sock_params.bit_equal(loop_params)
    elapsed = time.perf_counter() - started
    print(f"criterion 6: {attempts} fuzz inputs, socket == loopback, {elapsed:.1f}s")


def test_criterion_7_metrics_correctness(small_dataset):
    hand = derive_metrics(ConfusionMatrix(np.array([[1, 0], [1, 1]], dtype=np.int64)))
    assert abs(hand.accuracy - 2 / 3) < 1e-12
    assert abs(hand.macro_f1 - 2 / 3) < 1e-12
    assert hand.precision == (0.5, 1.0)
    assert hand.recall == (1.0, 0.5)

    for k in (2, 4, 7):
        diag = np.diag(np.arange(1, k + 1)).astype(np.int64)
        perfect = derive_metrics(ConfusionMatrix(diag))
        assert perfect.accuracy == 1.0
        assert perfect.precision == (1.0,) * k
        assert perfect.recall == (1.0,) * k
        assert perfect.f1 == (1.0,) * k
        assert perfect.macro_f1 == 1.0

    # twin registry re-tally reproduces the evaluation matrix exactly
    network, _, _ = build_clients(small_dataset, 1)
    params = network.init_params(5)
    store = TwinStore(None, small_dataset.manifest.classes, small_dataset.manifest.sites)
    version = model_version(0, params)
    test_idx = small_dataset.manifest.test_indices()
    test_x, test_y = small_dataset.test_arrays()
    labels = {}
    for i, tensor in zip(test_idx, test_x):
        ref = small_dataset.manifest.samples[i]
        store.register(network, params, version, ref.uid, ref.site, tensor)
        labels[ref.uid] = ref.label
    direct, _, _, _ = evaluate_model(network, params, test_x, test_y)
    assert store.retally(labels, version) == direct
    print("criterion 7: hand case, diagonal identities, and twin re-tally all exact")


def test_criterion_8_simulate_determinism(tmp_path):
    import json as _json

    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(_json.dumps({
        "rounds": 2,
        "clients": 2,
        "train": {"learning_rate": 0.1, "batch_size": 4, "local_epochs": 1},
        "data": {"classes": 3, "samples_per_class": 4, "image_shape": [1, 8, 8]},
    }))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(out_a)]) == 0
    assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(out_b)]) == 0
    compared = 0
    for sub in ("federated", "centralized"):
        names_a = sorted(p.name for p in (out_a / sub).glob("*.bfck"))
        names_b = sorted(p.name for p in (out_b / sub).glob("*.bfck"))
        assert names_a == names_b and names_a
        for name in names_a + ["run.jsonl"]:
            assert (out_a / sub / name).read_bytes() == (out_b / sub / name).read_bytes(), f"{sub}/{name}"
            compared += 1
    print(f"criterion 8: {compared} log/checkpoint files byte-identical across two runs")


def test_criterion_9_privacy_invariant(small_dataset):
    _, _, transport, _ = loopback_federation(small_dataset, rounds=2, record_frames=True)
    blob = b"".join(frame for _, _, frame in transport.frames)
    assert transport.frames, "audit needs recorded traffic"

    origin = small_dataset.manifest.origin
    checked = 0
    for i, sample in enumerate(small_dataset.manifest.samples):
        tensor_bytes = np.ascontiguousarray(small_dataset.x[i]).tobytes()
        assert tensor_bytes not in blob, f"sample tensor {sample.uid} leaked onto the wire"
        from biofed.data.synthetic import parse_uid

        label, index = parse_uid(sample.uid)
        pixel_bytes = sample_pixels(origin["seed"], origin["noise"],
                                    small_dataset.manifest.image_shape, label, index).tobytes()
        assert pixel_bytes not in blob, f"raw pixels of {sample.uid} leaked onto the wire"
        checked += 1

    # the message vocabulary cannot even express raw samples
    allowed = {"str", "int", "float", "TrainConfig", "ModelParameters", "ConfusionMatrix"}
    for kind in MESSAGE_TYPES:
        for field_name, field_type in kind.__annotations__.items():
            assert field_type in allowed, f"{kind.__name__}.{field_name}: {field_type}"
    print(f"criterion 9: {checked} samples audited against {len(transport.frames)} frames, "
          "no raw tensors or pixels on the wire")
