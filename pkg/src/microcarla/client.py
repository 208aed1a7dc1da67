"""Blocking TCP client for the lockstep protocol.

Synchronous request/response mirror of the server contract: reset() applies
a meta-command and returns the tick-0 frame, step() sends one control and
returns the frame for the following tick. Not safe for concurrent use;
callers serialize access.
"""

from __future__ import annotations

import socket
import struct

from . import protocol as proto
from .dynamics import Control, MetaCommand


class ClientError(Exception):
    pass


class ServerFault(ClientError):
    """The server replied with an error frame."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


class SimClient:
    def __init__(self, host: str = "127.0.0.1", port: int = proto.DEFAULT_PORT,
                 timeout: float = proto.DEFAULT_TIMEOUT):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.settimeout(timeout)
        try:
            self._sock.connect((host, port))
        except OSError as exc:
            raise ClientError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        ack = self._call(proto.Hello())
        if not isinstance(ack, proto.HelloAck):
            raise ClientError(f"unexpected handshake reply: {ack}")
        self.town_payload = ack.town

    def _recv_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            try:
                chunk = self._sock.recv(n - len(buf))
            except socket.timeout as exc:
                raise ClientError("timed out waiting for the server") from exc
            if not chunk:
                raise ClientError("connection closed by the server")
            buf += chunk
        return buf

    def _call(self, msg):
        try:
            self._sock.sendall(proto.encode(msg))
        except OSError as exc:
            raise ClientError(f"send failed: {exc}") from exc
        head = self._recv_exact(4)
        (n,) = struct.unpack(">I", head)
        if n > proto.MAX_FRAME_BYTES:
            raise ClientError(f"server declared an oversize frame ({n} bytes)")
        reply = proto.decode(head + self._recv_exact(n))
        if isinstance(reply, proto.ErrorMsg):
            raise ServerFault(reply.kind, reply.message)
        return reply

    def reset(self, meta: MetaCommand) -> proto.FrameMsg:
        reply = self._call(proto.MetaMsg(meta=meta))
        if not isinstance(reply, proto.FrameMsg):
            raise ClientError(f"expected a frame after meta, got {reply}")
        return reply

    def step(self, control: Control, command: str | None = None) -> proto.FrameMsg:
        reply = self._call(proto.ControlMsg(control=control, command=command))
        if not isinstance(reply, proto.FrameMsg):
            raise ClientError(f"expected a frame after control, got {reply}")
        return reply

    def set_recording(self, enabled: bool, perturb: bool = False) -> proto.RecordAck:
        reply = self._call(proto.RecordMsg(enabled=enabled, perturb=perturb))
        if not isinstance(reply, proto.RecordAck):
            raise ClientError(f"expected a record ack, got {reply}")
        return reply

    def close(self) -> None:
        try:
            self._sock.sendall(proto.encode(proto.ByeMsg()))
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
