"""Framed binary wire protocol for the staging transport.

Every frame is::

    magic 'NKSS' (4) | version (1, 0x01) | type tag (1) | payload length (u64 LE) | payload

All multi-byte integers are little-endian; floats are IEEE-754 LE.

Type tags: Hello=0x01, HelloAck=0x02, StepHeader=0x03, BlockPayload=0x04,
StepAck=0x05, Bye=0x06.

Block payload marshaling: origin 3*f64, spacing 3*f64, extents 6*i64,
field count u32, then per field: name length u16 + UTF-8 bytes,
association u8 (0 point, 1 cell), components u32, value count u64,
values f64[].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from nekmini.data_model import CELL, POINT, Block, FieldArray

MAGIC = b"NKSS"
VERSION = 0x01
HEADER = struct.Struct("<4sBBQ")  # magic, version, tag, payload length

TAG_HELLO = 0x01
TAG_HELLO_ACK = 0x02
TAG_STEP_HEADER = 0x03
TAG_BLOCK_PAYLOAD = 0x04
TAG_STEP_ACK = 0x05
TAG_BYE = 0x06

DEFAULT_MAX_PAYLOAD = 1 << 30  # 1 GiB

# error-ack sentinel: an ack carrying this step tells the producer the
# endpoint abandoned the step (a deliberately "wrong step" signal)
ERROR_STEP = (1 << 64) - 1


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class Hello:
    producer_id: int
    protocol_version: int = VERSION


@dataclass(frozen=True)
class HelloAck:
    accepted: bool


@dataclass(frozen=True)
class StepHeader:
    step: int
    time: float
    block_count: int


@dataclass(frozen=True)
class BlockPayload:
    block: Block


@dataclass(frozen=True)
class StepAck:
    step: int


@dataclass(frozen=True)
class Bye:
    pass


WireMessage = Hello | HelloAck | StepHeader | BlockPayload | StepAck | Bye


def encode_block(b: Block) -> bytes:
    parts = [
        struct.pack("<3d", *b.origin),
        struct.pack("<3d", *b.spacing),
        struct.pack("<6q", *b.extents),
        struct.pack("<I", len(b.fields)),
    ]
    for f in b.fields:
        name = f.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<BIQ", 0 if f.association == POINT else 1,
                                 f.components, f.values.size))
        parts.append(f.values.astype("<f8").tobytes())
    return b"".join(parts)


def decode_block(buf: bytes) -> Block:
    try:
        pos = 0
        origin = struct.unpack_from("<3d", buf, pos); pos += 24
        spacing = struct.unpack_from("<3d", buf, pos); pos += 24
        extents = struct.unpack_from("<6q", buf, pos); pos += 48
        (nfields,) = struct.unpack_from("<I", buf, pos); pos += 4
        fields = []
        for _ in range(nfields):
            (nlen,) = struct.unpack_from("<H", buf, pos); pos += 2
            name = buf[pos:pos + nlen].decode("utf-8"); pos += nlen
            assoc_code, comps, nvals = struct.unpack_from("<BIQ", buf, pos); pos += 13
            end = pos + 8 * nvals
            if end > len(buf):
                raise ProtocolError("truncated block payload")
            values = np.frombuffer(buf[pos:end], dtype="<f8").astype(np.float64)
            pos = end
            fields.append(FieldArray(name, POINT if assoc_code == 0 else CELL, comps, values))
        if pos != len(buf):
            raise ProtocolError(f"{len(buf) - pos} trailing bytes in block payload")
        return Block(origin, spacing, extents, tuple(fields))
    except struct.error as e:
        raise ProtocolError(f"truncated block payload: {e}") from e


def encode_message(m: WireMessage) -> bytes:
    if isinstance(m, Hello):
        tag, payload = TAG_HELLO, struct.pack("<II", m.producer_id, 0)  # id + reserved flags
        version = m.protocol_version
    else:
        version = VERSION
        if isinstance(m, HelloAck):
            tag, payload = TAG_HELLO_ACK, struct.pack("<B", 1 if m.accepted else 0)
        elif isinstance(m, StepHeader):
            tag, payload = TAG_STEP_HEADER, struct.pack("<QdI", m.step, m.time, m.block_count)
        elif isinstance(m, BlockPayload):
            tag, payload = TAG_BLOCK_PAYLOAD, encode_block(m.block)
        elif isinstance(m, StepAck):
            tag, payload = TAG_STEP_ACK, struct.pack("<Q", m.step)
        elif isinstance(m, Bye):
            tag, payload = TAG_BYE, b""
        else:
            raise TypeError(f"not a wire message: {m!r}")
    return HEADER.pack(MAGIC, version, tag, len(payload)) + payload


def decode_message(buf: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple[WireMessage | None, int]:
    """Decode one frame from the head of buf.

    Returns (message, bytes consumed), or (None, 0) when more bytes are
    needed. Raises ProtocolError on malformed frames.
    """
    if len(buf) < HEADER.size:
        return None, 0
    magic, version, tag, length = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unknown protocol version {version}")
    if length > max_payload:
        raise ProtocolError(f"declared payload length {length} exceeds cap {max_payload}")
    total = HEADER.size + length
    if len(buf) < total:
        return None, 0
    payload = bytes(buf[HEADER.size:total])

    if tag == TAG_HELLO:
        if len(payload) != 8:
            raise ProtocolError("Hello payload must be 8 bytes")
        producer_id, _flags = struct.unpack("<II", payload)
        msg: WireMessage = Hello(producer_id, version)
    elif tag == TAG_HELLO_ACK:
        msg = HelloAck(bool(payload[0]))
    elif tag == TAG_STEP_HEADER:
        step, time, block_count = struct.unpack("<QdI", payload)
        msg = StepHeader(step, time, block_count)
    elif tag == TAG_BLOCK_PAYLOAD:
        msg = BlockPayload(decode_block(payload))
    elif tag == TAG_STEP_ACK:
        (step,) = struct.unpack("<Q", payload)
        msg = StepAck(step)
    elif tag == TAG_BYE:
        if payload:
            raise ProtocolError("Bye carries no payload")
        msg = Bye()
    else:
        raise ProtocolError(f"unknown message tag 0x{tag:02x}")
    return msg, total
