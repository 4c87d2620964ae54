"""Framed TCP echo server and closed-loop measurement client.

This is the one part of the harness that touches real sockets. Frames are
length-prefixed (8-byte little-endian) opaque byte strings; the server
answers every frame with one response frame (echo or a fixed size), and the
client measures closed-loop round-trip times that feed the linear wire-cost
fit in calibrate.

Nagle is disabled on both sides: this benchmarks latency, not throughput.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from .calibrate import Sample

log = logging.getLogger("servesim.wirebench")

HEADER = struct.Struct("<Q")
HEADER_SIZE = HEADER.size
MAX_FRAME = 256 * 1024 * 1024  # large enough for segmentation-scale outputs
SEQ_STAMP = struct.Struct("<Q")


class FrameError(Exception):
    pass


def write_frame(sock: socket.socket, payload: bytes) -> None:
    sock.sendall(HEADER.pack(len(payload)) + payload)


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at a frame boundary."""
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            if got == 0:
                return None
            raise FrameError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket, max_frame: int = MAX_FRAME) -> bytes | None:
    header = _read_exact(sock, HEADER_SIZE)
    if header is None:
        return None
    (length,) = HEADER.unpack(header)
    if length > max_frame:
        raise FrameError(f"declared frame length {length} exceeds max {max_frame}")
    if length == 0:
        return b""
    return _read_exact(sock, length)


@dataclass
class ResponseRule:
    """echo: reply with the request payload; fixed: reply with n zero bytes
    (first 8 bytes carry the request's sequence stamp when present)."""

    kind: str = "echo"
    size: int = 0

    @classmethod
    def parse(cls, text: str) -> "ResponseRule":
        if text == "echo":
            return cls("echo")
        if text.startswith("fixed:"):
            size = int(text[len("fixed:"):])
            if size < 0:
                raise ValueError("fixed response size must be >= 0")
            return cls("fixed", size)
        raise ValueError(f"bad response rule {text!r}; use echo or fixed:<bytes>")

    def respond(self, payload: bytes) -> bytes:
        if self.kind == "echo":
            return payload
        out = bytearray(self.size)
        if self.size >= SEQ_STAMP.size and len(payload) >= SEQ_STAMP.size:
            out[: SEQ_STAMP.size] = payload[: SEQ_STAMP.size]
        return bytes(out)


@dataclass
class ServerStats:
    frames: int = 0
    bytes_in: int = 0
    connections: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def frame(self, n: int) -> None:
        with self._lock:
            self.frames += 1
            self.bytes_in += n


class EchoServer:
    """One handler thread per connection; handlers share only the counters."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 rule: ResponseRule | None = None, max_frame: int = MAX_FRAME):
        self.rule = rule or ResponseRule()
        self.max_frame = max_frame
        self.stats = ServerStats()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(64)
        self.address = self._sock.getsockname()
        self._stop = threading.Event()
        self._accept_thread: threading.Thread | None = None

    def start(self) -> None:
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def serve_forever(self) -> None:
        self._accept_loop()

    def stop(self) -> None:
        self._stop.set()
        try:
            # unblock accept()
            poke = socket.create_connection(self.address, timeout=1)
            poke.close()
        except OSError:
            pass
        self._sock.close()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, peer = self._sock.accept()
            except OSError:
                break
            if self._stop.is_set():
                conn.close()
                break
            self.stats.connections += 1
            threading.Thread(target=self._handle, args=(conn, peer), daemon=True).start()

    def _handle(self, conn: socket.socket, peer) -> None:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        try:
            while True:
                payload = read_frame(conn, self.max_frame)
                if payload is None:
                    break
                self.stats.frame(len(payload))
                write_frame(conn, self.rule.respond(payload))
        except FrameError as exc:
            log.warning("closing %s: %s", peer, exc)
        except OSError:
            pass
        finally:
            conn.close()


def _payload(size: int, seq: int) -> bytes:
    """Deterministic payload; first 8 bytes carry the sequence when they fit."""
    if size == 0:
        return b""
    body = bytearray((seq * 0x9E3779B1 + i) & 0xFF for i in range(min(size, 256)))
    out = bytearray(size)
    for off in range(0, size, len(body)):
        out[off : off + len(body)] = body[: min(len(body), size - off)]
    if size >= SEQ_STAMP.size:
        out[: SEQ_STAMP.size] = SEQ_STAMP.pack(seq)
    return bytes(out)


@dataclass
class MeasureResult:
    samples: list[Sample]
    failures: dict[int, str]

    def csv_lines(self) -> list[str]:
        lines = ["size_bytes,seq,duration_ns"]
        seqs: dict[int, int] = {}
        for s in self.samples:
            seq = seqs.get(s.bytes_, 0)
            seqs[s.bytes_] = seq + 1
            lines.append(f"{s.bytes_},{seq},{s.duration_ns}")
        return lines


def measure(
    address: tuple[str, int],
    sizes: list[int],
    count: int = 1000,
    warmup: int = 10,
    timeout_s: float = 30.0,
    verify_echo: bool = True,
) -> MeasureResult:
    """Closed-loop latency measurement: one frame in flight, ever.

    Per size: `warmup` unmeasured round trips, then `count` measured ones on
    a monotonic clock. Connect/read failures are recorded per size and the
    run continues with the remaining sizes.
    """
    samples: list[Sample] = []
    failures: dict[int, str] = {}
    for size in sizes:
        try:
            with socket.create_connection(address, timeout=timeout_s) as sock:
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.settimeout(timeout_s)
                for i in range(warmup + count):
                    payload = _payload(size, i)
                    t0 = time.monotonic_ns()
                    write_frame(sock, payload)
                    reply = read_frame(sock)
                    t1 = time.monotonic_ns()
                    if reply is None:
                        raise FrameError("server closed connection")
                    if verify_echo and reply != payload and len(reply) == len(payload):
                        raise FrameError(f"echo mismatch at size {size} seq {i}")
                    if i >= warmup:
                        samples.append(Sample(size, max(1, t1 - t0)))
        except (OSError, FrameError) as exc:
            failures[size] = str(exc)
            log.warning("size %d failed: %s", size, exc)
    return MeasureResult(samples, failures)


@dataclass
class ClientReport:
    client_id: int
    round_trips: int
    mismatches: int
    max_in_flight: int


def concurrent_clients(
    address: tuple[str, int],
    n_clients: int,
    size: int,
    count: int,
    timeout_s: float = 30.0,
) -> list[ClientReport]:
    """N isolated closed-loop clients; verifies responses match own requests.

    Each request stamps (client_id << 32 | seq) into the payload head; the
    echo reply must carry the same stamp back or it counts as cross-talk.
    """
    assert size >= SEQ_STAMP.size, "need room for the sequence stamp"
    reports: list[ClientReport] = [None] * n_clients  # type: ignore[list-item]

    def worker(cid: int) -> None:
        mismatches = 0
        done = 0
        with socket.create_connection(address, timeout=timeout_s) as sock:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.settimeout(timeout_s)
            for seq in range(count):
                stamp = (cid << 32) | seq
                payload = _payload(size, stamp)
                write_frame(sock, payload)
                reply = read_frame(sock)
                if reply is None:
                    break
                got = SEQ_STAMP.unpack(reply[:SEQ_STAMP.size])[0] if len(reply) >= 8 else -1
                if got != stamp:
                    mismatches += 1
                done += 1
        reports[cid] = ClientReport(cid, done, mismatches, 1)

    threads = [threading.Thread(target=worker, args=(c,)) for c in range(n_clients)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return reports
