"""Transport adapters: frames over an in-process loopback or a TCP stream.

The protocol above this layer only assumes ordered, whole-frame delivery
per connection. The loopback adapter calls the node handler synchronously
and is what the benchmark and fault-injection harnesses build on; the TCP
adapter is the one concrete network transport.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import deque
from typing import Callable

from .errors import TransportClosed, TransportTimeout
from .framing import Frame, FrameDecoder, encode_frame

log = logging.getLogger(__name__)

# a node-side handler maps one request frame to one response frame (or None)
FrameHandler = Callable[[Frame], Frame | None]


class LoopbackTransport:
    """Client endpoint wired directly to a frame handler in-process.

    send() invokes the handler synchronously; responses queue up for
    receive(). Single-owner, as a client connection would be.
    """

    def __init__(self, handler: FrameHandler):
        self._handler = handler
        self._inbox: deque[Frame] = deque()
        self._closed = False

    def send(self, frame: Frame) -> None:
        if self._closed:
            raise TransportClosed("loopback transport is closed")
        response = self._handler(frame)
        if response is not None:
            self._inbox.append(response)

    def receive(self, timeout: float | None = None) -> Frame:
        if self._inbox:
            return self._inbox.popleft()
        raise TransportTimeout("no response pending on loopback")

    def close(self) -> None:
        self._closed = True


class FaultyTransport:
    """Loopback wrapper that misdelivers according to a scripted plan.

    ``plan`` is consumed one action per send: "ok", "drop_request"
    (handler never sees the frame), "drop_response" (handler runs, reply
    discarded) or "dup_request" (handler sees the frame twice, both
    replies delivered). An exhausted plan behaves as "ok".
    """

    def __init__(self, handler: FrameHandler, plan: list[str] | None = None):
        self._handler = handler
        self._inbox: deque[Frame] = deque()
        self.plan = list(plan or [])
        self.sends = 0

    def _deliver(self, frame: Frame) -> None:
        response = self._handler(frame)
        if response is not None:
            self._inbox.append(response)

    def send(self, frame: Frame) -> None:
        action = self.plan[self.sends] if self.sends < len(self.plan) else "ok"
        self.sends += 1
        if action == "drop_request":
            return
        if action == "drop_response":
            self._handler(frame)
            return
        if action == "dup_request":
            self._deliver(frame)
            self._deliver(frame)
            return
        self._deliver(frame)

    def receive(self, timeout: float | None = None) -> Frame:
        if self._inbox:
            return self._inbox.popleft()
        raise TransportTimeout("response was lost")

    def close(self) -> None:
        pass


class TcpClientTransport:
    """One framed connection to a listening node."""

    def __init__(self, host: str, port: int, connect_timeout: float = 5.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as exc:
            raise TransportClosed(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._decoder = FrameDecoder()
        self._pending: deque[Frame] = deque()

    def send(self, frame: Frame) -> None:
        try:
            self._sock.sendall(encode_frame(frame))
        except OSError as exc:
            raise TransportClosed(str(exc)) from exc

    def receive(self, timeout: float | None = None) -> Frame:
        if self._pending:
            return self._pending.popleft()
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TransportTimeout("timed out waiting for a frame")
                self._sock.settimeout(remaining)
            else:
                self._sock.settimeout(None)
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise TransportTimeout("timed out waiting for a frame") from None
            except OSError as exc:
                raise TransportClosed(str(exc)) from exc
            if not chunk:
                raise TransportClosed("connection closed by peer")
            frames = self._decoder.feed(chunk)
            if frames:
                self._pending.extend(frames[1:])
                return frames[0]

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class TcpServer:
    """Threaded accept loop feeding a frame handler.

    Connections are independent: each gets its own decoder and thread.
    The handler must be reentrant; per-request log lines are emitted here
    so every transport sees identical node behavior.
    """

    def __init__(self, handler: FrameHandler, host: str = "127.0.0.1", port: int = 0):
        self._handler = handler
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(32)
        self.host, self.port = self._listener.getsockname()[:2]
        self._stopping = threading.Event()
        self._accept_thread: threading.Thread | None = None

    def start(self) -> None:
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               name="lacp-accept", daemon=True)
        self._accept_thread.start()

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stopping.wait(0.5):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, peer = self._listener.accept()
            except OSError:
                return
            thread = threading.Thread(target=self._serve_connection,
                                      args=(conn, peer), daemon=True)
            thread.start()

    def _serve_connection(self, conn: socket.socket, peer) -> None:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        decoder = FrameDecoder()
        try:
            while True:
                chunk = conn.recv(65536)
                if not chunk:
                    return
                for frame in decoder.feed(chunk):
                    response = self._handler(frame)
                    if response is not None:
                        conn.sendall(encode_frame(response))
        except Exception as exc:
            log.debug("connection from %s dropped: %s", peer, exc)
        finally:
            try:
                conn.close()
            except OSError:
                pass
