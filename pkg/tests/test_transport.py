import socket
import threading

import pytest

from biofed.errors import TransportError, TruncatedFrameError
from biofed.transport import (
    LoopbackTransport,
    SocketClientSession,
    SocketServerTransport,
)
from biofed.transport.protocol import (
    Error,
    Join,
    JoinAck,
    Shutdown,
    decode,
    encode,
)
from biofed.transport.socket_transport import read_frame, recv_exact


# ---------------------------------------------------------------- loopback


def echo_handler(log):
    def handle(msg):
        log.append(msg)
        if isinstance(msg, Join):
            return JoinAck(msg.client_id)
        return None
    return handle


def test_loopback_round_trips_through_codec():
    log = []
    t = LoopbackTransport({"client-000": echo_handler(log)})
    t.send("client-000", Join("client-000"))
    assert log == [Join("client-000")]
    assert t.recv() == ("client-000", JoinAck("client-000"))
    assert t.recv() is None


def test_loopback_releases_replies_sorted_by_client_id():
    handlers = {
        cid: (lambda c: lambda msg: JoinAck(c))(cid)
        for cid in ("client-002", "client-000", "client-001")
    }
    t = LoopbackTransport(handlers)
    assert t.clients() == ["client-000", "client-001", "client-002"]
    # deliver out of order; the barrier releases them sorted
    for cid in ("client-002", "client-000", "client-001"):
        t.send(cid, Join(cid))
    received = [t.recv()[0] for _ in range(3)]
    assert received == ["client-000", "client-001", "client-002"]


def test_loopback_frame_tap_records_wire_bytes():
    t = LoopbackTransport({"c": lambda msg: JoinAck("c")}, record_frames=True)
    t.send("c", Join("c"))
    directions = [d for d, _, _ in t.frames]
    assert directions == ["to-client", "to-server"]
    for _, cid, frame in t.frames:
        assert cid == "c"
        msg, used = decode(frame)
        assert used == len(frame)
    assert isinstance(decode(t.frames[0][2])[0], Join)


def test_loopback_error_paths():
    with pytest.raises(TransportError):
        LoopbackTransport({})
    t = LoopbackTransport({"c": lambda msg: None})
    with pytest.raises(TransportError):
        t.send("ghost", Shutdown())
    t.close()
    with pytest.raises(TransportError):
        t.send("c", Shutdown())


def test_loopback_shutdown_delivers_to_all():
    seen = []
    t = LoopbackTransport({
        "a": lambda msg: seen.append(("a", msg)),
        "b": lambda msg: seen.append(("b", msg)),
    })
    t.shutdown(Shutdown(4))
    assert seen == [("a", Shutdown(4)), ("b", Shutdown(4))]


# ---------------------------------------------------------------- raw frame io


def test_recv_exact_semantics():
    a, b = socket.socketpair()
    try:
        b.sendall(b"abcdef")
        assert recv_exact(a, 6) == b"abcdef"
        b.sendall(b"xy")
        b.close()
        # partial data then EOF mid-read
        with pytest.raises(TruncatedFrameError):
            recv_exact(a, 5)
        # clean EOF at a boundary
        assert recv_exact(a, 4) is None
    finally:
        a.close()


def test_read_frame_truncation():
    a, b = socket.socketpair()
    try:
        frame = encode(Join("client-000"))
        b.sendall(frame)
        assert read_frame(a) == frame
        b.sendall(frame[:-3])
        b.close()
        with pytest.raises(TruncatedFrameError):
            read_frame(a)
    finally:
        a.close()

    a, b = socket.socketpair()
    try:
        b.close()
        assert read_frame(a) is None
    finally:
        a.close()


# ---------------------------------------------------------------- sockets


@pytest.fixture
def server():
    srv = SocketServerTransport("127.0.0.1", 0, expected_clients=2)
    yield srv
    srv.close()


def test_socket_join_and_message_flow(server):
    sessions = [
        SocketClientSession(server.host, server.port, f"client-{i:03d}").join()
        for i in range(2)
    ]
    try:
        assert server.wait_for_clients(5.0)
        assert server.clients() == ["client-000", "client-001"]

        done = threading.Event()

        def run_client(session):
            session.serve(lambda msg: None)
            done.set()

        threads = [threading.Thread(target=run_client, args=(s,), daemon=True) for s in sessions]
        for t in threads:
            t.start()
        server.shutdown(Shutdown(0))
        for t in threads:
            t.join(5.0)
    finally:
        for s in sessions:
            s.close()


def test_socket_rejects_version_mismatch(server):
    session = SocketClientSession(server.host, server.port, "client-000", join_version=2)
    try:
        with pytest.raises(TransportError) as exc:
            session.join()
        assert "server rejected join (code 1" in str(exc.value)
    finally:
        session.close()


def test_socket_rejects_duplicate_client_id(server):
    first = SocketClientSession(server.host, server.port, "client-000").join()
    dup = SocketClientSession(server.host, server.port, "client-000")
    try:
        with pytest.raises(TransportError) as exc:
            dup.join()
        assert "already joined" in str(exc.value)
    finally:
        first.close()
        dup.close()


def test_socket_rejects_when_full():
    srv = SocketServerTransport("127.0.0.1", 0, expected_clients=1)
    first = SocketClientSession(srv.host, srv.port, "client-000").join()
    extra = SocketClientSession(srv.host, srv.port, "client-999")
    try:
        with pytest.raises(TransportError) as exc:
            extra.join()
        assert "full" in str(exc.value)
    finally:
        first.close()
        extra.close()
        srv.close()


def test_socket_rejects_non_join_first_frame(server):
    raw = socket.create_connection((server.host, server.port))
    try:
        raw.sendall(encode(Shutdown(0)))
        reply = read_frame(raw)
        msg, _ = decode(reply)
        assert isinstance(msg, Error)
        assert "expected Join" in msg.text
    finally:
        raw.close()


def test_socket_disconnect_surfaces_as_none(server):
    session = SocketClientSession(server.host, server.port, "client-000").join()
    session.close()
    item = server.recv(timeout=5.0)
    assert item == ("client-000", None)
    # the slot frees up again
    again = SocketClientSession(server.host, server.port, "client-000").join()
    again.close()


def test_socket_malformed_frame_becomes_error_message(server):
    raw = socket.create_connection((server.host, server.port))
    try:
        raw.sendall(encode(Join("client-000")))
        ack, _ = decode(read_frame(raw))
        assert isinstance(ack, JoinAck)
        # valid header, garbage payload
        bad = bytearray(encode(Join("client-000")))
        bad[11] = 0xFF
        bad[12] = 0xFF
        raw.sendall(bytes(bad))
        cid, msg = server.recv(timeout=5.0)
        assert cid == "client-000"
        assert isinstance(msg, Error)
        assert msg.code == 2
    finally:
        raw.close()


def test_socket_send_to_missing_client(server):
    with pytest.raises(TransportError):
        server.send("client-404", Shutdown(0))


def test_socket_connect_failure_is_typed():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    with pytest.raises(TransportError):
        SocketClientSession("127.0.0.1", port, "client-000")


def test_server_validates_expected_clients():
    with pytest.raises(TransportError):
        SocketServerTransport("127.0.0.1", 0, expected_clients=0)
