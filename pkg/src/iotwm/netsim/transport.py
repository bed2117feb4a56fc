"""In-process and TCP transports.

Both deliver raw bytes to a sink with three callbacks:
``connection_opened() -> cid``, ``feed(cid, chunk) -> bool`` (False drops
the connection) and ``connection_closed(cid)``. Each connection gets its
own reader thread, so the two transports look the same to the gateway.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time

from ..errors import ParameterError, StateError, TransportError

log = logging.getLogger(__name__)


class QueueConnection:
    def __init__(self, q):
        self._q = q
        self.dropped = threading.Event()
        self._closed = False

    def send(self, data):
        if self.dropped.is_set() or self._closed:
            raise TransportError("connection is closed")
        self._q.put(bytes(data))

    def close(self):
        if not self._closed:
            self._closed = True
            self._q.put(None)


class InProcessTransport:
    """Byte queues between threads of one process."""

    def __init__(self):
        self._sink = None
        self._threads = []

    def bind(self, sink):
        self._sink = sink

    def connect(self):
        if self._sink is None:
            raise TransportError("no gateway bound to this transport")
        q = queue.Queue()
        conn = QueueConnection(q)
        cid = self._sink.connection_opened()
        t = threading.Thread(target=self._reader, args=(cid, q, conn), daemon=True)
        t.start()
        self._threads.append(t)
        return conn

    def _reader(self, cid, q, conn):
        while True:
            chunk = q.get()
            if chunk is None:
                break
            if not self._sink.feed(cid, chunk):
                conn.dropped.set()
                break
        self._sink.connection_closed(cid)

    def stop(self):
        pass


def connect_with_retry(address, attempts=5, base_delay=0.05, max_delay=1.0):
    """TCP connect with exponential backoff; TransportError after
    ``attempts`` failures."""
    delay = base_delay
    last = None
    for k in range(attempts):
        try:
            return socket.create_connection(address, timeout=5.0)
        except OSError as exc:
            last = exc
            log.warning("connect to %s failed (%s), attempt %d/%d", address, exc, k + 1, attempts)
            if k + 1 < attempts:
                time.sleep(delay)
                delay = min(2 * delay, max_delay)
    raise TransportError(f"could not connect to {address} after {attempts} attempts: {last}")


class TcpConnection:
    def __init__(self, sock):
        self._sock = sock

    def send(self, data):
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        self._sock.close()


class TcpTransport:
    """Listening socket at the gateway, one client socket per device."""

    def __init__(self, host="127.0.0.1", port=0, attempts=5, base_delay=0.05):
        self.host = host
        self.port = port
        self.attempts = attempts
        self.base_delay = base_delay
        self.address = None
        self._sink = None
        self._server = None
        self._stop = threading.Event()
        self._acceptor = None

    def bind(self, sink):
        self._sink = sink
        self._server = socket.create_server((self.host, self.port))
        self._server.settimeout(0.05)
        self.address = self._server.getsockname()[:2]
        self._acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        self._acceptor.start()

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            self._start_reader(conn)
        # connections already queued by the kernel still belong to this run
        self._server.setblocking(False)
        while True:
            try:
                conn, _ = self._server.accept()
            except OSError:
                break
            self._start_reader(conn)
        self._server.close()

    def _start_reader(self, conn):
        conn.setblocking(True)
        cid = self._sink.connection_opened()
        threading.Thread(target=self._reader, args=(cid, conn), daemon=True).start()

    def _reader(self, cid, conn):
        try:
            while True:
                chunk = conn.recv(65536)
                if not chunk or not self._sink.feed(cid, chunk):
                    break
        except OSError as exc:
            log.warning("connection %d lost: %s", cid, exc)
        finally:
            conn.close()
            self._sink.connection_closed(cid)

    def connect(self):
        if self.address is None:
            raise StateError("transport is not bound; start the gateway first")
        return TcpConnection(connect_with_retry(self.address, self.attempts, self.base_delay))

    def stop(self):
        self._stop.set()
        if self._acceptor is not None:
            self._acceptor.join()


def make_transport(kind, **kwargs):
    if kind == "inproc":
        return InProcessTransport()
    if kind == "tcp":
        return TcpTransport(**kwargs)
    raise ParameterError(f"unknown transport {kind!r}; use inproc or tcp")
