"""Binary datagram codec for states and commands.

Layout (little-endian)::

    magic  "ESW1"          4 bytes
    type   u8              0 state, 1 command, 2 sync request, 3 sync reply
    seq    u32
    state_seq u32          commands only
    t_created f64          sender clock, seconds
    payload  f64 * n       state 8, command 3, sync request 0, sync reply 2
                           (sync reply: t_created is the reply send time, payload
                           echoes the request time and the request receive time)
    crc32  u32             over everything before it
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

from .dynamics import ControlCommand, UavState

MAGIC = b"ESW1"
MAX_DATAGRAM = 128

MSG_STATE, MSG_COMMAND, MSG_SYNC_REQ, MSG_SYNC_REP = 0, 1, 2, 3
_PAYLOAD = {MSG_STATE: 8, MSG_COMMAND: 3, MSG_SYNC_REQ: 0, MSG_SYNC_REP: 2}
_HEAD = struct.Struct("<4sBI")
_CRC = struct.Struct("<I")


class WireError(ValueError):
    """Raised for datagrams that fail validation."""


@dataclass(frozen=True)
class SyncMessage:
    """Clock probe: request carries t1; reply echoes t1 and adds receive/send times."""
    seq: int
    t_created: float
    echo: tuple[float, ...] = ()


def _body_struct(msg_type: int) -> struct.Struct:
    n = _PAYLOAD[msg_type]
    if msg_type == MSG_COMMAND:
        return struct.Struct(f"<Id{n}d")
    return struct.Struct(f"<d{n}d")


def _frame(msg_type: int, seq: int, body: bytes) -> bytes:
    data = _HEAD.pack(MAGIC, msg_type, seq & 0xFFFFFFFF) + body
    out = data + _CRC.pack(zlib.crc32(data))
    assert len(out) <= MAX_DATAGRAM
    return out


def encode_state(state: UavState, seq: int) -> bytes:
    body = _body_struct(MSG_STATE).pack(state.t, *state.as_vector())
    return _frame(MSG_STATE, seq, body)


def encode_command(cmd: ControlCommand) -> bytes:
    body = _body_struct(MSG_COMMAND).pack(cmd.state_seq & 0xFFFFFFFF, cmd.t_created,
                                          cmd.thrust, cmd.phi_ref, cmd.theta_ref)
    return _frame(MSG_COMMAND, cmd.seq, body)


def encode_sync(msg: SyncMessage, reply: bool = False) -> bytes:
    msg_type = MSG_SYNC_REP if reply else MSG_SYNC_REQ
    n = _PAYLOAD[msg_type]
    echo = tuple(msg.echo) + (0.0,) * (n - len(msg.echo))
    return _frame(msg_type, msg.seq, _body_struct(msg_type).pack(msg.t_created, *echo[:n]))


def decode(data: bytes):
    """Decode one datagram into ``(type, seq, object)``; raises :class:`WireError`."""
    if len(data) > MAX_DATAGRAM:
        raise WireError(f"datagram too long ({len(data)} bytes)")
    if len(data) < _HEAD.size + _CRC.size:
        raise WireError("datagram truncated")
    (crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[:-_CRC.size]) != crc:
        raise WireError("CRC mismatch")
    magic, msg_type, seq = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise WireError(f"bad magic {magic!r}")
    if msg_type not in _PAYLOAD:
        raise WireError(f"unknown message type {msg_type}")
    body = _body_struct(msg_type)
    if len(data) != _HEAD.size + body.size + _CRC.size:
        raise WireError("datagram length does not match its type")
    fields = body.unpack_from(data, _HEAD.size)
    if not all(math.isfinite(x) for x in fields):
        raise WireError("non-finite field")
    if msg_type == MSG_STATE:
        return msg_type, seq, UavState.from_vector(fields[1:], t=fields[0])
    if msg_type == MSG_COMMAND:
        state_seq, t_created, thrust, phi_ref, theta_ref = fields
        if thrust < 0:
            raise WireError("negative thrust")
        return msg_type, seq, ControlCommand(thrust, phi_ref, theta_ref, t_created=t_created,
                                             seq=seq, state_seq=state_seq)
    return msg_type, seq, SyncMessage(seq=seq, t_created=fields[0], echo=tuple(fields[1:]))
