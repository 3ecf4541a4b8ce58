"""Schema-driven RPC wire format.

Frame layout (all multi-byte integers big-endian):

    [len u32]                length of everything after this word
    [version u8 = 0x01]
    [direction u8]           0 = request, 1 = response
    [method_id u8]
    [seq_id u32]
    [field ...]*             each: [wire_type u8][field_id u16][payload]
    [STOP 0x00]

Payloads: BOOL/I8 one byte, I16/I32/I64 two/four/eight bytes,
BYTES and STRING are [len u32][data], LIST is [elem_type u8][count u32]
followed by the element payloads. The fixed header is HEADER_SIZE bytes
including the length word; the body (fields plus STOP) starts at
BODY_OFFSET.

Encoding is canonical: fields are emitted in schema order, so equal
messages produce identical frames and distinct messages distinct frames.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

VERSION = 0x01
STOP = 0x00
HEADER_SIZE = 11  # len word + version + direction + method_id + seq_id
BODY_OFFSET = 11
DEFAULT_MAX_PAYLOAD = 64 * 1024

DIR_REQUEST = 0
DIR_RESPONSE = 1

# method id reserved for error status frames (never valid in a schema)
ERROR_METHOD_ID = 0xFF


class WireType(IntEnum):
    BOOL = 1
    I8 = 2
    I16 = 3
    I32 = 4
    I64 = 5
    BYTES = 6
    STRING = 7
    LIST = 8


_INT_SIZES = {WireType.BOOL: 1, WireType.I8: 1, WireType.I16: 2,
              WireType.I32: 4, WireType.I64: 8}


class CodecError(Exception):
    pass


class SchemaViolation(CodecError):
    pass


class PayloadTooLarge(CodecError):
    pass


class TruncatedFrame(CodecError):
    pass


class UnknownMethod(CodecError):
    pass


class MalformedField(CodecError):
    pass


class BadVersion(CodecError):
    pass


@dataclass(frozen=True)
class FieldSchema:
    field_id: int
    name: str
    wire_type: WireType
    elem_type: WireType | None = None  # only for LIST


@dataclass(frozen=True)
class MethodSchema:
    method_id: int
    name: str
    request: tuple[FieldSchema, ...]
    response: tuple[FieldSchema, ...]

    def fields(self, direction: int) -> tuple[FieldSchema, ...]:
        return self.request if direction == DIR_REQUEST else self.response


@dataclass(frozen=True)
class ServiceSchema:
    service_name: str
    methods: tuple[MethodSchema, ...]

    def __post_init__(self):
        ids = [m.method_id for m in self.methods]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate method ids in {self.service_name}")
        for m in self.methods:
            for fs in m.request + m.response:
                if not fs.name:
                    raise ValueError("field names must be non-empty")
            for side in (m.request, m.response):
                fids = [f.field_id for f in side]
                if len(set(fids)) != len(fids):
                    raise ValueError(f"duplicate field ids in {m.name}")

    def method_by_id(self, method_id: int) -> MethodSchema:
        for m in self.methods:
            if m.method_id == method_id:
                return m
        raise UnknownMethod(f"method id {method_id} not in {self.service_name}")

    def method_by_name(self, name: str) -> MethodSchema:
        for m in self.methods:
            if m.name == name:
                return m
        raise UnknownMethod(f"method {name!r} not in {self.service_name}")


@dataclass
class RpcMessage:
    seq_id: int
    method: str
    direction: int
    fields: dict = field(default_factory=dict)  # name -> value

    def __eq__(self, other):
        return (isinstance(other, RpcMessage)
                and self.seq_id == other.seq_id
                and self.method == other.method
                and self.direction == other.direction
                and self.fields == other.fields)


def _check_int(value, wire_type: WireType):
    bits = _INT_SIZES[wire_type] * 8
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if wire_type is WireType.BOOL:
        lo, hi = 0, 1
    if not isinstance(value, (int, bool)) or not (lo <= int(value) <= hi):
        raise SchemaViolation(f"value {value!r} out of range for {wire_type.name}")


def _encode_value(out: bytearray, wire_type: WireType, value,
                  elem_type: WireType | None, max_payload: int):
    if wire_type in _INT_SIZES:
        _check_int(value, wire_type)
        size = _INT_SIZES[wire_type]
        out += int(value).to_bytes(size, "big", signed=wire_type is not WireType.BOOL)
    elif wire_type in (WireType.BYTES, WireType.STRING):
        if not isinstance(value, (bytes, bytearray)):
            raise SchemaViolation(f"{wire_type.name} value must be bytes")
        if len(value) > max_payload:
            raise PayloadTooLarge(f"{len(value)} > {max_payload}")
        out += struct.pack(">I", len(value))
        out += value
    elif wire_type is WireType.LIST:
        if not isinstance(value, (list, tuple)):
            raise SchemaViolation("LIST value must be a sequence")
        out.append(int(elem_type))
        out += struct.pack(">I", len(value))
        for item in value:
            _encode_value(out, elem_type, item, None, max_payload)
    else:  # pragma: no cover - enum is closed
        raise SchemaViolation(f"unsupported wire type {wire_type}")


def serialize(msg: RpcMessage, schema: ServiceSchema,
              max_payload: int = DEFAULT_MAX_PAYLOAD) -> bytes:
    """Encode a schema-valid message into a frame (canonical bytes)."""
    method = schema.method_by_name(msg.method)
    fields = method.fields(msg.direction)
    known = {f.name for f in fields}
    extra = set(msg.fields) - known
    if extra:
        raise SchemaViolation(f"unknown fields {sorted(extra)} for {msg.method}")

    body = bytearray()
    for fs in fields:
        if fs.name not in msg.fields:
            raise SchemaViolation(f"missing field {fs.name!r} in {msg.method}")
        body.append(int(fs.wire_type))
        body += struct.pack(">H", fs.field_id)
        _encode_value(body, fs.wire_type, msg.fields[fs.name], fs.elem_type,
                      max_payload)
    body.append(STOP)

    head = struct.pack(">IBBBI", 7 + len(body), VERSION, msg.direction,
                       method.method_id, msg.seq_id)
    return head + bytes(body)


def parse_header(frame: bytes) -> tuple[int, int, int, int]:
    """Return (method_id, seq_id, direction, body_offset) without touching
    the body."""
    if len(frame) < HEADER_SIZE:
        raise TruncatedFrame(f"{len(frame)} bytes < fixed header")
    length, version, direction, method_id, seq_id = struct.unpack_from(">IBBBI", frame)
    if version != VERSION:
        raise BadVersion(f"version {version:#x}")
    if length + 4 > len(frame):
        raise TruncatedFrame(f"declared {length} bytes, have {len(frame) - 4}")
    return method_id, seq_id, direction, BODY_OFFSET


def _decode_value(frame: bytes, off: int, wire_type: WireType, end: int):
    if wire_type in _INT_SIZES:
        size = _INT_SIZES[wire_type]
        if off + size > end:
            raise TruncatedFrame("frame ends mid-value")
        value = int.from_bytes(frame[off:off + size], "big",
                               signed=wire_type is not WireType.BOOL)
        if wire_type is WireType.BOOL:
            if value not in (0, 1):
                raise MalformedField(f"bool byte {value:#x}")
            value = bool(value)
        return value, off + size
    if wire_type in (WireType.BYTES, WireType.STRING):
        if off + 4 > end:
            raise TruncatedFrame("frame ends mid-length")
        (size,) = struct.unpack_from(">I", frame, off)
        off += 4
        if off + size > end:
            raise TruncatedFrame("frame ends mid-payload")
        return bytes(frame[off:off + size]), off + size
    if wire_type is WireType.LIST:
        if off + 5 > end:
            raise TruncatedFrame("frame ends mid-list header")
        try:
            elem = WireType(frame[off])
        except ValueError as exc:
            raise MalformedField(f"bad list element type {frame[off]:#x}") from exc
        (count,) = struct.unpack_from(">I", frame, off + 1)
        off += 5
        items = []
        for _ in range(count):
            item, off = _decode_value(frame, off, elem, end)
            items.append(item)
        return items, off
    raise MalformedField(f"wire type {wire_type:#x}")  # pragma: no cover


def deserialize(frame: bytes, schema: ServiceSchema) -> RpcMessage:
    """Decode a frame back into the unique message that produced it."""
    method_id, seq_id, direction, off = parse_header(frame)
    method = schema.method_by_id(method_id)
    expected = {f.field_id: f for f in method.fields(direction)}
    end = 4 + struct.unpack_from(">I", frame)[0]

    fields = {}
    while True:
        if off >= end:
            raise TruncatedFrame("missing STOP byte")
        tag = frame[off]
        if tag == STOP:
            off += 1
            break
        try:
            wire_type = WireType(tag)
        except ValueError as exc:
            raise MalformedField(f"bad wire type {tag:#x}") from exc
        if off + 3 > end:
            raise TruncatedFrame("frame ends mid-field header")
        (field_id,) = struct.unpack_from(">H", frame, off + 1)
        fs = expected.get(field_id)
        if fs is None or fs.wire_type is not wire_type:
            raise MalformedField(f"field id {field_id} / type {wire_type.name} "
                                 f"not in schema for {method.name}")
        value, off = _decode_value(frame, off + 3, wire_type, end)
        fields[fs.name] = value

    missing = {f.name for f in method.fields(direction)} - set(fields)
    if missing:
        raise MalformedField(f"missing fields {sorted(missing)}")
    return RpcMessage(seq_id=seq_id, method=method.name, direction=direction,
                      fields=fields)


def build_error_frame(seq_id: int, status_code: int) -> bytes:
    """Status frame for the error response path (unknown method, malformed
    input, faults). Uses the reserved method id so it can never collide
    with a schema method; carries one I8 status field."""
    body = bytes([int(WireType.I8), 0xFF, 0xFF, status_code & 0xFF, STOP])
    head = struct.pack(">IBBBI", 7 + len(body), VERSION, DIR_RESPONSE,
                       ERROR_METHOD_ID, seq_id)
    return head + body


def is_error_frame(frame: bytes) -> bool:
    try:
        method_id, _, direction, _ = parse_header(frame)
    except CodecError:
        return False
    return method_id == ERROR_METHOD_ID and direction == DIR_RESPONSE


@dataclass(frozen=True)
class StageCosts:
    """Byte counts feeding the per-stage timing models."""

    header_bytes: int
    dispatch_lookups: int
    deser_bytes: int
    ser_bytes: int
    resp_header_bytes: int


def body_size(msg: RpcMessage, schema: ServiceSchema) -> int:
    """Body length in bytes (fields plus STOP) for a schema-valid message."""
    return len(serialize(msg, schema)) - HEADER_SIZE


def stage_costs(request: RpcMessage, response: RpcMessage,
                schema: ServiceSchema) -> StageCosts:
    """Per-stage byte counts for one request/response exchange."""
    return StageCosts(
        header_bytes=HEADER_SIZE,
        dispatch_lookups=1,
        deser_bytes=body_size(request, schema),
        ser_bytes=body_size(response, schema),
        resp_header_bytes=HEADER_SIZE,
    )


# --------------------------------------------------------------------------
# Schema definition files
#
# One service per file:
#     service NAME
#     method ID NAME
#       request FIELD_ID NAME TYPE [ELEM_TYPE]
#       response FIELD_ID NAME TYPE [ELEM_TYPE]
# Blank lines and '#' comments are ignored. ELEM_TYPE is required for LIST.

BUILTIN_SERVICES = ("memcached", "post_storage", "unique_id")


def parse_schema_text(text: str) -> ServiceSchema:
    service_name = None
    methods: list[MethodSchema] = []
    cur: dict | None = None

    def flush():
        if cur is not None:
            methods.append(MethodSchema(cur["id"], cur["name"],
                                        tuple(cur["request"]),
                                        tuple(cur["response"])))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kw = parts[0]
        if kw == "service":
            service_name = parts[1]
        elif kw == "method":
            flush()
            cur = {"id": int(parts[1]), "name": parts[2],
                   "request": [], "response": []}
        elif kw in ("request", "response"):
            if cur is None:
                raise ValueError(f"line {lineno}: field outside a method")
            wire_type = WireType[parts[3]]
            elem = WireType[parts[4]] if len(parts) > 4 else None
            if wire_type is WireType.LIST and elem is None:
                raise ValueError(f"line {lineno}: LIST needs an element type")
            cur[kw].append(FieldSchema(int(parts[1]), parts[2], wire_type, elem))
        else:
            raise ValueError(f"line {lineno}: unknown keyword {kw!r}")
    flush()
    if service_name is None:
        raise ValueError("no 'service' line in schema file")
    return ServiceSchema(service_name, tuple(methods))


def load_schema(path) -> ServiceSchema:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_schema_text(fh.read())


def builtin_schema(service: str) -> ServiceSchema:
    """Load one of the shipped service schemas by name."""
    from importlib import resources

    if service not in BUILTIN_SERVICES:
        raise KeyError(f"no builtin schema {service!r}")
    text = (resources.files("arcsim") / "schemas" / f"{service}.schema").read_text()
    return parse_schema_text(text)
