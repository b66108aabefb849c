"""Stream-socket transport: one server, one session thread per client.

Session threads only move decoded messages into a queue; all round logic
stays on the single orchestration thread. The first frame of a session must
be a Join carrying the expected protocol version, otherwise the server
replies with an Error frame and drops the connection.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading

from ..errors import ProtocolError, TransportError, TruncatedFrameError
from .protocol import (
    ERR_MALFORMED,
    ERR_UNEXPECTED,
    ERR_VERSION_MISMATCH,
    HEADER_LEN,
    MAX_FRAME,
    PROTOCOL_VERSION,
    TAG_JOIN,
    Error,
    Join,
    JoinAck,
    Shutdown,
    decode,
    encode,
    encode_payload,
    parse_header,
)


def recv_exact(sock, count):
    """Read exactly count bytes; None on clean EOF at a frame boundary."""
    chunks = []
    got = 0
    while got < count:
        try:
            chunk = sock.recv(count - got)
        except OSError as exc:
            raise TransportError(f"socket read failed: {exc}") from exc
        if not chunk:
            if got == 0:
                return None
            raise TruncatedFrameError(f"connection closed {got} bytes into a {count}-byte read")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock, max_frame=MAX_FRAME):
    """One complete frame (header + payload) off a socket, or None on EOF."""
    header = recv_exact(sock, HEADER_LEN)
    if header is None:
        return None
    payload_len, _, _, _ = parse_header(header, max_frame)
    if payload_len == 0:
        return header
    payload = recv_exact(sock, payload_len)
    if payload is None:
        raise TruncatedFrameError("connection closed between header and payload")
    return header + payload


def send_frame(sock, frame):
    try:
        sock.sendall(frame)
    except OSError as exc:
        raise TransportError(f"socket write failed: {exc}") from exc


class SocketServerTransport:
    """Accepts up to ``expected_clients`` sessions and queues inbound messages.

    ``recv`` yields (client_id, message) in arrival order, or (client_id,
    None) when that session disconnects.
    """

    def __init__(self, host, port, expected_clients, max_frame=MAX_FRAME):
        if expected_clients < 1:
            raise TransportError(f"expected_clients must be positive, got {expected_clients}")
        self._expected = expected_clients
        self._max_frame = max_frame
        self._sessions = {}
        self._lock = threading.Lock()
        self._inbox = queue.Queue()
        self._joined = threading.Event()
        self._closed = False
        try:
            self._listener = socket.create_server((host, port))
        except OSError as exc:
            raise TransportError(f"cannot listen on {host}:{port}: {exc}") from exc
        self.host, self.port = self._listener.getsockname()[:2]
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _reject(self, conn, code, text):
        try:
            send_frame(conn, encode(Error(code, text)))
        except TransportError:
            pass
        conn.close()

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._session, args=(conn,), daemon=True).start()

    def _handshake(self, conn):
        frame = read_frame(conn, self._max_frame)
        if frame is None:
            conn.close()
            return None
        _, tag, version, _ = parse_header(frame, self._max_frame)
        if version != PROTOCOL_VERSION:
            self._reject(conn, ERR_VERSION_MISMATCH, f"protocol version {version}, server speaks {PROTOCOL_VERSION}")
            return None
        msg, _ = decode(frame, self._max_frame)
        if not isinstance(msg, Join):
            self._reject(conn, ERR_UNEXPECTED, f"expected Join, got {type(msg).__name__}")
            return None
        with self._lock:
            if msg.client_id in self._sessions:
                self._reject(conn, ERR_UNEXPECTED, f"client id {msg.client_id!r} already joined")
                return None
            if len(self._sessions) >= self._expected:
                self._reject(conn, ERR_UNEXPECTED, "federation is full")
                return None
            # ack before the session becomes visible, so the round loop can
            # never race an instruction onto the wire ahead of the JoinAck
            send_frame(conn, encode(JoinAck(msg.client_id)))
            self._sessions[msg.client_id] = conn
            if len(self._sessions) == self._expected:
                self._joined.set()
        return msg.client_id

    def _session(self, conn):
        try:
            client_id = self._handshake(conn)
        except (ProtocolError, TransportError) as exc:
            self._reject(conn, ERR_MALFORMED, str(exc))
            return
        if client_id is None:
            return
        while True:
            try:
                frame = read_frame(conn, self._max_frame)
            except (ProtocolError, TransportError):
                frame = None
            if frame is None:
                break
            try:
                msg, _ = decode(frame, self._max_frame)
            except ProtocolError as exc:
                self._inbox.put((client_id, Error(ERR_MALFORMED, str(exc))))
                continue
            self._inbox.put((client_id, msg))
        with self._lock:
            if self._sessions.get(client_id) is conn:
                del self._sessions[client_id]
        self._inbox.put((client_id, None))
        conn.close()

    def wait_for_clients(self, timeout):
        """Block until every expected client has joined; False on timeout."""
        return self._joined.wait(timeout)

    def clients(self):
        with self._lock:
            return sorted(self._sessions)

    def send(self, client_id, msg):
        with self._lock:
            conn = self._sessions.get(client_id)
        if conn is None:
            raise TransportError(f"no session for client {client_id!r}")
        send_frame(conn, encode(msg, self._max_frame))

    def recv(self, timeout=None):
        try:
            return self._inbox.get(timeout=timeout)
        except queue.Empty:
            return None

    def shutdown(self, msg):
        for client_id in self.clients():
            try:
                self.send(client_id, msg)
            except TransportError:
                pass
        self.close()

    def close(self):
        if self._closed:
            return
        self._closed = True
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            conns = list(self._sessions.values())
            self._sessions.clear()
        for conn in conns:
            try:
                conn.close()
            except OSError:
                pass


class SocketClientSession:
    """Client side: join handshake, then a serve loop over a message handler."""

    def __init__(self, host, port, client_id, max_frame=MAX_FRAME, join_version=PROTOCOL_VERSION):
        self.client_id = client_id
        self._max_frame = max_frame
        self._join_version = join_version
        try:
            self._sock = socket.create_connection((host, port))
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc

    def _join_frame(self):
        payload = encode_payload(Join(self.client_id))
        header = struct.pack("<IBHI", len(payload), TAG_JOIN, self._join_version, 0)
        return header + payload

    def join(self):
        send_frame(self._sock, self._join_frame())
        frame = read_frame(self._sock, self._max_frame)
        if frame is None:
            raise TransportError("server closed the connection during the join handshake")
        msg, _ = decode(frame, self._max_frame)
        if isinstance(msg, Error):
            raise TransportError(f"server rejected join (code {msg.code}): {msg.text}")
        if not isinstance(msg, JoinAck) or msg.client_id != self.client_id:
            raise TransportError(f"unexpected join reply: {msg!r}")
        return self

    def serve(self, handler):
        """Dispatch inbound messages to handler until Shutdown or EOF.

        The handler's non-None replies are written back to the server.
        """
        while True:
            frame = read_frame(self._sock, self._max_frame)
            if frame is None:
                return
            msg, _ = decode(frame, self._max_frame)
            if isinstance(msg, Shutdown):
                handler(msg)
                return
            reply = handler(msg)
            if reply is not None:
                send_frame(self._sock, encode(reply, self._max_frame))

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass
