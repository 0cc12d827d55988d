"""Auge Transfer Protocol: TCP server, session state machine and client.

Replies are ``nnn text`` lines terminated by CRLF.  After ``300 here we
go`` the server streams batches of 5-byte ROI records, one batch per
cycle time.  Each batch lists ROIs 0..N-1 in order, so its first byte is
0x00 or 0x80; a client that sent STOP uses that to tell a late batch
from the ``100 ready`` reply.
"""

from __future__ import annotations

import re
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

DEFAULT_PORT = 1899
CRLF = b"\r\n"
MAX_LINE = 1024
_RECORD = struct.Struct(">BI")
_DECIMAL = re.compile(r"^(\d+\.?\d*|\.\d+)$")


class AtpError(Exception):
    pass


@dataclass(frozen=True)
class RoiCountRecord:
    roi_index: int
    focused: bool
    count: int


def encode_roi(record: RoiCountRecord) -> bytes:
    if not 0 <= record.roi_index <= 127:
        raise AtpError(f"ROI index {record.roi_index} does not fit in 7 bits")
    if not 0 <= record.count <= 0xFFFFFFFF:
        raise AtpError("count does not fit in 32 bits")
    return _RECORD.pack(record.roi_index | (0x80 if record.focused else 0), record.count)


def decode_roi(data: bytes) -> RoiCountRecord:
    if len(data) != 5:
        raise AtpError("an ROI record is exactly 5 bytes")
    b1, count = _RECORD.unpack(data)
    return RoiCountRecord(b1 & 0x7F, bool(b1 & 0x80), count)


@dataclass(frozen=True)
class CameraModel:
    """Frame-rate ceilings of the CCD: full 5x5 frames or row-wise bursts."""

    exposure: float = 20e-6
    frame_fps: float = 580.0
    rowwise_fps: float = 1700.0
    rows_per_readout: int = 7

    def acquisitions_per_readout(self, cycle_time: float) -> int | None:
        if not cycle_time > 0:
            return None
        rate = 1.0 / cycle_time
        if rate <= self.frame_fps:
            return 1
        if rate <= self.rowwise_fps:
            return self.rows_per_readout
        return None


class SimulatedCountSource:
    """Poisson ROI counts: ion ROIs at the bright rate, others at background."""

    def __init__(self, n_rois: int = 2, bright_rois=(0,), focused: int | None = 0,
                 rate: float = 210e3, background: float = 210.0,
                 exposure: float = 20e-6, seed: int | None = None):
        self.n_rois = n_rois
        self.bright = set(bright_rois)
        self.focused = focused
        self.rate, self.background, self.exposure = rate, background, exposure
        self.rng = np.random.default_rng(seed)
        self.lock = threading.Lock()

    def acquire(self) -> list[RoiCountRecord]:
        with self.lock:
            lam = [(self.rate if k in self.bright else self.background) * self.exposure
                   for k in range(self.n_rois)]
            counts = self.rng.poisson(lam)
        return [RoiCountRecord(k, k == self.focused, int(c)) for k, c in enumerate(counts)]


class State(Enum):
    AWAIT_CT = "await-ct"
    READY = "ready"
    STREAMING = "streaming"
    CLOSED = "closed"


def reply(code: int, text: str) -> bytes:
    return f"{code:03d} {text}".encode("ascii") + CRLF


SYNTAX_ERROR = reply(400, "syntax error")


class AtpSession:
    """Protocol state machine without I/O.

    ``handle(line)`` returns (reply bytes, action) where action is one of
    None, "start", "stop" or "close".
    """

    def __init__(self, camera: CameraModel | None = None):
        self.camera = camera or CameraModel()
        self.state = State.AWAIT_CT
        self.cycle_time: float | None = None
        self.acquisitions_per_readout: int | None = None
        self.shutter_open = False

    def handle(self, line: bytes | str):
        try:
            return self._handle(line)
        except Exception:  # noqa: BLE001 - any fault maps to 401
            return reply(401, "unknown error"), None

    def _handle(self, line):
        if self.state is State.CLOSED:
            return b"", "close"
        if isinstance(line, bytes):
            if any(b > 0x7F for b in line):
                return SYNTAX_ERROR, None
            line = line.decode("ascii")
        line = line.rstrip("\r\n")
        parts = line.split(" ")
        verb, args = parts[0], parts[1:]
        if verb == "QUIT" and not args:
            self.state = State.CLOSED
            return reply(199, "bye"), "close"
        if verb == "ET" and not args:
            return reply(201, f"{self.camera.exposure:.6f}"), None
        if verb == "CT" and len(args) == 1:
            if not _DECIMAL.match(args[0]):
                return SYNTAX_ERROR, None
            if self.state is State.STREAMING:
                return reply(400, "syntax error (CT while streaming)"), None
            f = float(args[0])
            n = self.camera.acquisitions_per_readout(f)
            if n is None:
                return reply(402, "desired cycle time cannot be achieved"), None
            self.cycle_time, self.acquisitions_per_readout = f, n
            self.state = State.READY
            return reply(200, str(n)), None
        if verb == "TM" and len(args) == 1:
            if args[0] not in ("0", "1"):
                return SYNTAX_ERROR, None
            if self.state is State.AWAIT_CT:
                return reply(400, "syntax error (TM requires a prior CT)"), None
            self.shutter_open = args[0] == "1"
            return reply(100, "okay"), None
        if verb == "START" and not args:
            if self.state is State.AWAIT_CT:
                return reply(400, "syntax error (START requires a prior CT)"), None
            if self.state is State.STREAMING:
                return reply(400, "syntax error (already started)"), None
            self.state = State.STREAMING
            return reply(300, "here we go"), "start"
        if verb == "STOP" and not args:
            if self.state is not State.STREAMING:
                return reply(400, "syntax error (STOP requires a prior START)"), None
            self.state = State.READY
            return reply(100, "ready"), "stop"
        return SYNTAX_ERROR, None


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        srv: AtpServer = self.server
        sock = self.request
        if not srv.session_lock.acquire(blocking=False):
            sock.sendall(reply(101, "busy"))
            return
        try:
            if srv.source is None:
                sock.sendall(reply(102, "no data available"))
                return
            sock.sendall(reply(100, "ready"))
            self._serve(srv, sock)
        finally:
            srv.session_lock.release()

    def _serve(self, srv, sock):
        session = AtpSession(srv.camera)
        write_lock = threading.Lock()
        stopped = threading.Event()
        worker = None

        def send(data: bytes):
            with write_lock:
                sock.sendall(data)

        def stream():
            # the first batch went out with the 300 reply
            while not stopped.wait(session.cycle_time) and not srv.stop_all.is_set():
                batch = b"".join(encode_roi(r) for r in srv.source.acquire())
                try:
                    send(batch)
                except OSError:
                    return

        try:
            while True:
                line = self.rfile.readline(MAX_LINE + 1)
                if not line:
                    break
                if len(line) > MAX_LINE and not line.endswith(b"\n"):
                    # discard the rest of an overlong line
                    while line and not line.endswith(b"\n"):
                        line = self.rfile.readline(MAX_LINE + 1)
                    send(SYNTAX_ERROR)
                    continue
                out, action = session.handle(line)
                if action == "start":
                    # first batch is the data block of the 300 reply
                    first = b"".join(encode_roi(r) for r in srv.source.acquire())
                    send(out + first)
                    stopped.clear()
                    worker = threading.Thread(target=stream, daemon=True)
                    worker.start()
                    continue
                if action in ("stop", "close") and worker is not None:
                    stopped.set()
                    worker.join()
                    worker = None
                if out:
                    send(out)
                if action == "close":
                    break
        except OSError:
            pass
        finally:
            stopped.set()
            if worker is not None:
                worker.join()


class AtpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, source, camera: CameraModel | None = None):
        self.source = source
        self.camera = camera or CameraModel()
        self.session_lock = threading.Lock()
        self.stop_all = threading.Event()
        super().__init__(address, _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def shutdown(self):
        self.stop_all.set()
        super().shutdown()


def serve(port: int = DEFAULT_PORT, source=None, host: str = "127.0.0.1",
          camera: CameraModel | None = None, background: bool = True) -> AtpServer:
    """Start an ATP server; with ``background`` it runs in a daemon thread."""
    server = AtpServer((host, port), source, camera)
    if background:
        threading.Thread(target=server.serve_forever, daemon=True).start()
    else:
        server.serve_forever()
    return server


class AtpClient:
    """Blocking client.  ``n_rois`` must match the server's ROI count."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 n_rois: int = 2, timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")
        self.n_rois = n_rois
        self.n: int | None = None
        self.status = self.read_reply()

    def close(self):
        try:
            self.rfile.close()
        finally:
            self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def send(self, line: str) -> None:
        self.sock.sendall(line.encode("ascii") + CRLF)

    def read_reply(self) -> tuple[int, str]:
        line = self.rfile.readline()
        if not line.endswith(CRLF):
            raise AtpError(f"connection closed or malformed reply {line!r}")
        text = line[:-2].decode("ascii")
        return int(text[:3]), text[4:]

    def command(self, line: str) -> tuple[int, str]:
        self.send(line)
        return self.read_reply()

    def ct(self, cycle_time: float) -> int:
        code, text = self.command(f"CT {cycle_time:.6f}")
        if code != 200:
            raise AtpError(f"{code} {text}")
        self.n = int(text)
        return self.n

    def et(self) -> float:
        code, text = self.command("ET")
        if code != 201:
            raise AtpError(f"{code} {text}")
        return float(text)

    def tm(self, open_shutter: bool) -> tuple[int, str]:
        code, text = self.command(f"TM {int(bool(open_shutter))}")
        if code != 100 or text not in ("okay", "ready"):
            raise AtpError(f"{code} {text}")
        return code, text

    def read_batch(self) -> list[RoiCountRecord]:
        data = self.rfile.read(5 * self.n_rois)
        if len(data) != 5 * self.n_rois:
            raise AtpError("stream ended inside a batch")
        return [decode_roi(data[k:k + 5]) for k in range(0, len(data), 5)]

    def start(self) -> list[RoiCountRecord]:
        code, text = self.command("START")
        if code != 300:
            raise AtpError(f"{code} {text}")
        return self.read_batch()

    def stop(self) -> tuple[int, str, int]:
        """Send STOP, drop late batches; returns (code, text, dropped)."""
        self.send("STOP")
        dropped = 0
        while True:
            head = self.rfile.peek(1)[:1]
            if head in (b"\x00", b"\x80"):
                self.read_batch()
                dropped += 1
                continue
            code, text = self.read_reply()
            return code, text, dropped

    def quit(self) -> tuple[int, str]:
        return self.command("QUIT")

    def acquire(self, count: int) -> list[list[RoiCountRecord]]:
        """Collect ``count`` acquisitions; must be a multiple of n."""
        if self.n is None:
            raise AtpError("CT must be negotiated first")
        if count <= 0 or count % self.n:
            raise AtpError(f"acquisitions must be a positive multiple of {self.n}")
        batches = [self.start()]
        while len(batches) < count:
            batches.append(self.read_batch())
        self.stop()
        return batches
