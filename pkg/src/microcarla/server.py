"""Socket server hosting lockstep sessions.

One listening port (a second consecutive port is reserved but unused); each
accepted connection gets its own session and world. The first bytes of a
connection select the transport: ``GET `` starts an HTTP request: either a
websocket upgrade on /ws carrying one JSON message per text frame, or a
static-asset request for the browser UI: anything else is treated as raw
length-prefixed framing.

With ``pace_hz`` set, replies are throttled to that rate for human driving;
lockstep semantics are unchanged.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import socket
import struct
import threading
import time
from pathlib import Path

from . import protocol as proto
from .town import TownMap

log = logging.getLogger(__name__)

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_MIME = {".html": "text/html; charset=utf-8", ".js": "text/javascript",
         ".mjs": "text/javascript", ".css": "text/css", ".map": "application/json",
         ".json": "application/json", ".png": "image/png", ".svg": "image/svg+xml"}


class ServerError(Exception):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> bytes | None:
    """One length-prefixed frame from a socket, or None on clean EOF."""
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    (n,) = struct.unpack(">I", head)
    if n > proto.MAX_FRAME_BYTES:
        raise proto.CodecError(proto.ERR_OVERSIZE,
                               f"declared length {n} exceeds the cap")
    body = _recv_exact(sock, n)
    if body is None:
        raise proto.CodecError(proto.ERR_TRUNCATED,
                               "connection closed mid-frame")
    return head + body


# -- minimal websocket framing (server side) ---------------------------------

def ws_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def ws_encode_text(payload: bytes) -> bytes:
    header = bytearray([0x81])  # FIN + text opcode
    n = len(payload)
    if n < 126:
        header.append(n)
    elif n < 65536:
        header.append(126)
        header += struct.pack(">H", n)
    else:
        header.append(127)
        header += struct.pack(">Q", n)
    return bytes(header) + payload


def ws_read_message(sock: socket.socket) -> bytes | None:
    """One complete (possibly fragmented) client message; None on close."""
    message = b""
    while True:
        head = _recv_exact(sock, 2)
        if head is None:
            return None
        fin = head[0] & 0x80
        opcode = head[0] & 0x0F
        masked = head[1] & 0x80
        n = head[1] & 0x7F
        if n == 126:
            ext = _recv_exact(sock, 2)
            if ext is None:
                return None
            (n,) = struct.unpack(">H", ext)
        elif n == 127:
            ext = _recv_exact(sock, 8)
            if ext is None:
                return None
            (n,) = struct.unpack(">Q", ext)
        if n > proto.MAX_FRAME_BYTES:
            raise proto.CodecError(proto.ERR_OVERSIZE,
                                   "websocket payload exceeds the frame cap")
        mask = _recv_exact(sock, 4) if masked else b"\x00" * 4
        if mask is None:
            return None
        payload = _recv_exact(sock, n) if n else b""
        if payload is None:
            return None
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        if opcode == 0x8:  # close
            return None
        if opcode == 0x9:  # ping -> pong
            sock.sendall(bytes([0x8A, len(payload)]) + payload)
            continue
        if opcode == 0xA:  # pong
            continue
        message += payload
        if fin:
            return message


class SimServer:
    """Hosts any number of concurrent single-world sessions."""

    def __init__(self, town: TownMap, port: int = proto.DEFAULT_PORT,
                 host: str = "127.0.0.1", pace_hz: float | None = None,
                 demo_dir: str | None = None, ui_dir: str | None = None,
                 demo_seed: int = 0):
        self.town = town
        self.host = host
        self.pace_interval = 1.0 / pace_hz if pace_hz else None
        self.demo_dir = demo_dir
        self.ui_dir = ui_dir
        self.demo_seed = demo_seed
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind((host, port))
        except OSError as exc:
            raise ServerError(f"cannot bind {host}:{port}: {exc}") from exc
        self.port = self._listener.getsockname()[1]
        # a second consecutive port is reserved by convention, never spoken on
        self._reserved = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._reserved.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._reserved.bind((host, self.port + 1))
        except OSError:
            self._reserved = None
        self._listener.listen(8)
        self._threads: list[threading.Thread] = []
        self._conns: set[socket.socket] = set()
        self._conn_lock = threading.Lock()
        self._stop = threading.Event()

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        t = threading.Thread(target=self._accept_loop, daemon=True,
                             name="microcarla-accept")
        t.start()
        self._threads.append(t)

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        if self._reserved is not None:
            self._reserved.close()
        with self._conn_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except OSError:
                return
            t = threading.Thread(target=self._handle_conn, args=(conn, addr),
                                 daemon=True)
            t.start()
            self._threads.append(t)

    # -- per-connection --------------------------------------------------

    def _handle_conn(self, conn: socket.socket, addr) -> None:
        with self._conn_lock:
            self._conns.add(conn)
        try:
            head = conn.recv(4, socket.MSG_PEEK)
            if head.startswith(b"GET ") or head.startswith(b"HEAD"):
                self._handle_http(conn)
            else:
                self._run_session(conn, websocket=False)
        except (proto.ProtocolError, OSError) as exc:
            log.debug("connection %s dropped: %s", addr, exc)
        finally:
            with self._conn_lock:
                self._conns.discard(conn)
            try:
                conn.close()
            except OSError:
                pass

    def _handle_http(self, conn: socket.socket) -> None:
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = conn.recv(4096)
            if not chunk:
                return
            data += chunk
            if len(data) > 65536:
                return
        request, _, _ = data.partition(b"\r\n\r\n")
        lines = request.decode("latin-1").split("\r\n")
        method, _, rest = lines[0].partition(" ")
        path = rest.split(" ")[0]
        headers = {}
        for line in lines[1:]:
            key, _, value = line.partition(":")
            headers[key.strip().lower()] = value.strip()
        if path == "/ws" and headers.get("upgrade", "").lower() == "websocket":
            key = headers.get("sec-websocket-key", "")
            accept = ws_accept_key(key)
            conn.sendall(
                b"HTTP/1.1 101 Switching Protocols\r\n"
                b"Upgrade: websocket\r\nConnection: Upgrade\r\n"
                b"Sec-WebSocket-Accept: " + accept.encode("ascii") + b"\r\n\r\n")
            self._run_session(conn, websocket=True)
            return
        self._serve_static(conn, method, path)

    def _serve_static(self, conn: socket.socket, method: str, path: str) -> None:
        if self.ui_dir is None:
            conn.sendall(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\n\r\n")
            return
        name = path.lstrip("/") or "index.html"
        target = (Path(self.ui_dir) / name).resolve()
        root = Path(self.ui_dir).resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            conn.sendall(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\n\r\n")
            return
        body = target.read_bytes()
        mime = _MIME.get(target.suffix, "application/octet-stream")
        head = (f"HTTP/1.1 200 OK\r\nContent-Type: {mime}\r\n"
                f"Content-Length: {len(body)}\r\n\r\n").encode("ascii")
        conn.sendall(head if method == "HEAD" else head + body)

    def _run_session(self, conn: socket.socket, websocket: bool) -> None:
        session = proto.Session(self.town, demo_dir=self.demo_dir,
                                demo_seed=self.demo_seed)
        last_reply = 0.0

        def send(msg) -> None:
            body = proto.encode(msg)
            if websocket:
                conn.sendall(ws_encode_text(body[4:]))
            else:
                conn.sendall(body)

        try:
            while session.phase != proto.PHASE_CLOSED:
                if websocket:
                    payload = ws_read_message(conn)
                    if payload is None:
                        break
                    try:
                        msg = proto.decode_body(payload)
                    except proto.CodecError as exc:
                        send(proto.ErrorMsg(kind=exc.kind, message=str(exc)))
                        break
                else:
                    frame = read_frame(conn)
                    if frame is None:
                        break
                    try:
                        msg = proto.decode(frame)
                    except proto.CodecError as exc:
                        send(proto.ErrorMsg(kind=exc.kind, message=str(exc)))
                        break
                try:
                    reply = session.handle(msg)
                except proto.SessionError as exc:
                    send(proto.ErrorMsg(kind=exc.kind, message=str(exc)))
                    if exc.kind == proto.ERR_META:
                        continue  # bad meta is recoverable; session stays up
                    break
                if self.pace_interval is not None and \
                        isinstance(reply, proto.FrameMsg):
                    now = time.monotonic()
                    wait = last_reply + self.pace_interval - now
                    if wait > 0:
                        time.sleep(wait)
                    last_reply = time.monotonic()
                send(reply)
        finally:
            session.close()
