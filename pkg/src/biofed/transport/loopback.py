"""In-process transport for deterministic simulation.

Every message still passes through the wire codec (encode then decode), so
simulated runs exercise the exact byte format the socket transport ships, and
an optional frame tap records the raw frames for auditing. Client replies are
buffered and released sorted by client id, which pins the global delivery
order regardless of dict or scheduling quirks.
"""

from __future__ import annotations

from ..errors import TransportError
from .protocol import MAX_FRAME, decode, encode

TO_CLIENT = "to-client"
TO_SERVER = "to-server"


class LoopbackTransport:
    """Single-threaded server-side transport over in-memory handlers.

    ``handlers`` maps client id to a callable taking a decoded message and
    returning a reply message or None.
    """

    def __init__(self, handlers, max_frame=MAX_FRAME, record_frames=False):
        if not handlers:
            raise TransportError("loopback transport needs at least one client handler")
        self._handlers = dict(handlers)
        self._max_frame = max_frame
        self._pending = []
        self._inbox = []
        self._closed = False
        self.frames = [] if record_frames else None

    def clients(self):
        return sorted(self._handlers)

    def _through_wire(self, direction, client_id, msg):
        frame = encode(msg, self._max_frame)
        if self.frames is not None:
            self.frames.append((direction, client_id, frame))
        decoded, used = decode(frame, self._max_frame)
        if used != len(frame):
            raise TransportError(f"frame for {client_id} decoded {used} of {len(frame)} bytes")
        return decoded

    def send(self, client_id, msg):
        if self._closed:
            raise TransportError("transport is closed")
        if client_id not in self._handlers:
            raise TransportError(f"unknown client {client_id!r}")
        delivered = self._through_wire(TO_CLIENT, client_id, msg)
        reply = self._handlers[client_id](delivered)
        if reply is not None:
            self._pending.append((client_id, self._through_wire(TO_SERVER, client_id, reply)))

    def recv(self, timeout=None):
        """Next (client_id, message), or None when nothing is queued.

        Pending replies are released in client-id order each time the inbox
        drains, the loopback equivalent of a barrier release.
        """
        if not self._inbox and self._pending:
            self._pending.sort(key=lambda item: item[0])
            self._inbox = self._pending
            self._pending = []
        if not self._inbox:
            return None
        return self._inbox.pop(0)

    def shutdown(self, msg):
        if self._closed:
            return
        for client_id in self.clients():
            self.send(client_id, msg)
        self.close()

    def close(self):
        self._closed = True
