"""Wire messages and transports for the manager-worker runtime.

Frames are [u8 version][u64 length][payload], little-endian, fixed-width
floats. Both the in-process channel transport and the socket transport
carry the same encoded bytes, so runs replay bit-exactly across them.
"""

from __future__ import annotations

import queue
import socket
import struct
from dataclasses import dataclass

import numpy as np

from .problems import SolutionPoint

PROTOCOL_VERSION = 1

MSG_STOP = 0
MSG_JOB = 1
MSG_DATA = 2

_HEADER = struct.Struct("<BQ")


class ProtocolError(RuntimeError):
    """Malformed or unexpected wire message."""


class EndpointClosed(RuntimeError):
    """Peer endpoint is gone."""


@dataclass(frozen=True)
class StopMessage:
    stop: bool


@dataclass(frozen=True)
class JobMessage:
    id: int
    branch: int
    delta_L0: float
    N: int
    w_start: SolutionPoint
    w_prev: SolutionPoint | None
    w_ref: SolutionPoint


@dataclass(frozen=True)
class DataMessage:
    job_id: int
    distances: list[float]
    solutions: list[SolutionPoint]
    lower_distance: float
    closing_distance: float
    success: bool
    message: str = ""


def _pack_point(w: SolutionPoint) -> bytes:
    u = np.ascontiguousarray(w.u, dtype="<f8")
    return struct.pack("<Q", u.shape[0]) + u.tobytes() + struct.pack("<d", w.lam)


def _unpack_point(buf: memoryview, off: int) -> tuple[SolutionPoint, int]:
    (n,) = struct.unpack_from("<Q", buf, off)
    off += 8
    u = np.frombuffer(buf, dtype="<f8", count=n, offset=off).copy()
    off += 8 * n
    (lam,) = struct.unpack_from("<d", buf, off)
    return SolutionPoint(u, lam), off + 8


def encode(msg) -> bytes:
    if isinstance(msg, StopMessage):
        return struct.pack("<BB", MSG_STOP, int(msg.stop))
    if isinstance(msg, JobMessage):
        parts = [struct.pack("<BQQdQB", MSG_JOB, msg.id, msg.branch,
                             msg.delta_L0, msg.N, msg.w_prev is not None)]
        parts.append(_pack_point(msg.w_start))
        if msg.w_prev is not None:
            parts.append(_pack_point(msg.w_prev))
        parts.append(_pack_point(msg.w_ref))
        return b"".join(parts)
    if isinstance(msg, DataMessage):
        d = np.ascontiguousarray(msg.distances, dtype="<f8")
        note = msg.message.encode("utf-8")
        parts = [struct.pack("<BQB", MSG_DATA, msg.job_id, int(msg.success)),
                 struct.pack("<Q", d.shape[0]), d.tobytes(),
                 struct.pack("<Q", len(msg.solutions))]
        parts.extend(_pack_point(w) for w in msg.solutions)
        parts.append(struct.pack("<dd", msg.lower_distance,
                                 msg.closing_distance))
        parts.append(struct.pack("<Q", len(note)) + note)
        return b"".join(parts)
    raise ProtocolError(f"cannot encode {type(msg).__name__}")


def decode(payload: bytes):
    buf = memoryview(payload)
    if len(buf) < 1:
        raise ProtocolError("empty payload")
    kind = buf[0]
    if kind == MSG_STOP:
        if len(buf) != 2:
            raise ProtocolError("bad stop message size")
        return StopMessage(stop=bool(buf[1]))
    if kind == MSG_JOB:
        _, jid, branch, dl0, n, has_prev = struct.unpack_from("<BQQdQB", buf, 0)
        off = struct.calcsize("<BQQdQB")
        w_start, off = _unpack_point(buf, off)
        w_prev = None
        if has_prev:
            w_prev, off = _unpack_point(buf, off)
        w_ref, off = _unpack_point(buf, off)
        return JobMessage(id=jid, branch=branch, delta_L0=dl0, N=n,
                          w_start=w_start, w_prev=w_prev, w_ref=w_ref)
    if kind == MSG_DATA:
        _, jid, success = struct.unpack_from("<BQB", buf, 0)
        off = struct.calcsize("<BQB")
        (nd,) = struct.unpack_from("<Q", buf, off)
        off += 8
        dists = np.frombuffer(buf, dtype="<f8", count=nd, offset=off).tolist()
        off += 8 * nd
        (ns,) = struct.unpack_from("<Q", buf, off)
        off += 8
        sols = []
        for _ in range(ns):
            w, off = _unpack_point(buf, off)
            sols.append(w)
        lower, closing = struct.unpack_from("<dd", buf, off)
        off += 16
        (nmsg,) = struct.unpack_from("<Q", buf, off)
        off += 8
        note = bytes(buf[off:off + nmsg]).decode("utf-8")
        return DataMessage(job_id=jid, distances=dists, solutions=sols,
                           lower_distance=lower, closing_distance=closing,
                           success=bool(success), message=note)
    raise ProtocolError(f"unknown message kind {kind}")


def frame(payload: bytes) -> bytes:
    return _HEADER.pack(PROTOCOL_VERSION, len(payload)) + payload


class ChannelEndpoint:
    """In-process endpoint over a pair of queues carrying encoded frames."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._inbox = inbox
        self._outbox = outbox

    def send(self, msg) -> None:
        self._outbox.put(frame(encode(msg)))

    def recv(self):
        data = self._inbox.get()
        if data is None:
            raise EndpointClosed("channel closed")
        return decode(_strip_frame(data))

    def close(self) -> None:
        self._outbox.put(None)


def channel_pair() -> tuple[ChannelEndpoint, ChannelEndpoint]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return (ChannelEndpoint(b_to_a, a_to_b), ChannelEndpoint(a_to_b, b_to_a))


def _strip_frame(data: bytes) -> bytes:
    if len(data) < _HEADER.size:
        raise ProtocolError("short frame")
    version, length = _HEADER.unpack_from(data, 0)
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    payload = data[_HEADER.size:]
    if len(payload) != length:
        raise ProtocolError("frame length mismatch")
    return payload


class SocketEndpoint:
    """Endpoint over a stream socket with length-prefixed binary frames."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send(self, msg) -> None:
        try:
            self._sock.sendall(frame(encode(msg)))
        except OSError as exc:
            raise EndpointClosed(str(exc))

    def _read_exact(self, n: int) -> bytes:
        chunks = []
        while n > 0:
            try:
                chunk = self._sock.recv(n)
            except OSError as exc:
                raise EndpointClosed(str(exc))
            if not chunk:
                raise EndpointClosed("peer closed connection")
            chunks.append(chunk)
            n -= len(chunk)
        return b"".join(chunks)

    def recv(self):
        header = self._read_exact(_HEADER.size)
        version, length = _HEADER.unpack(header)
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")
        return decode(self._read_exact(length))

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
