"""Canonical binary encoding for everything that gets hashed, signed or sent.

The format is a small typed TLV. Two equal values always encode to the same
bytes: dict entries are sorted by their encoded key and integers that fit in
64 bits use a fixed 8-byte width, so payload sizes do not depend on the
magnitude of the numbers they carry. Byte strings are embedded raw, which the
taint scanner relies on.
"""

from __future__ import annotations

import struct
from typing import Any

__all__ = ["encode", "decode", "DecodeError"]


class DecodeError(ValueError):
    pass


_NONE = b"N"
_TRUE = b"T"
_FALSE = b"F"
_INT = b"i"
_BIGINT = b"I"
_BYTES = b"b"
_STR = b"s"
_LIST = b"l"
_DICT = b"d"

_I64_MIN = -(2**63)
_I64_MAX = 2**63 - 1


def _enc(obj: Any, out: list[bytes]) -> None:
    if obj is None:
        out.append(_NONE)
    elif obj is True:
        out.append(_TRUE)
    elif obj is False:
        out.append(_FALSE)
    elif isinstance(obj, int):
        if _I64_MIN <= obj <= _I64_MAX:
            out.append(_INT + struct.pack(">q", obj))
        else:
            sign = b"-" if obj < 0 else b"+"
            mag = abs(obj)
            raw = mag.to_bytes((mag.bit_length() + 7) // 8, "big")
            out.append(_BIGINT + sign + struct.pack(">I", len(raw)) + raw)
    elif isinstance(obj, (bytes, bytearray, memoryview)):
        raw = bytes(obj)
        out.append(_BYTES + struct.pack(">I", len(raw)) + raw)
    elif isinstance(obj, str):
        raw = obj.encode("utf-8")
        out.append(_STR + struct.pack(">I", len(raw)) + raw)
    elif isinstance(obj, (list, tuple)):
        out.append(_LIST + struct.pack(">I", len(obj)))
        for item in obj:
            _enc(item, out)
    elif isinstance(obj, dict):
        items = sorted((encode(k), v) for k, v in obj.items())
        out.append(_DICT + struct.pack(">I", len(items)))
        for ek, v in items:
            out.append(ek)
            _enc(v, out)
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def encode(obj: Any) -> bytes:
    out: list[bytes] = []
    _enc(obj, out)
    return b"".join(out)


_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")
_T_NONE, _T_TRUE, _T_FALSE, _T_INT, _T_BIGINT, _T_BYTES, _T_STR, _T_LIST, _T_DICT = (
    t[0] for t in (_NONE, _TRUE, _FALSE, _INT, _BIGINT, _BYTES, _STR, _LIST, _DICT)
)


def _need(buf: bytes, end: int) -> None:
    if end > len(buf):
        raise DecodeError("truncated input")


def _dec(buf: bytes, pos: int) -> tuple[Any, int]:
    _need(buf, pos + 1)
    tag = buf[pos]
    pos += 1
    if tag == _T_INT:
        _need(buf, pos + 8)
        return _I64.unpack_from(buf, pos)[0], pos + 8
    if tag == _T_BYTES or tag == _T_STR:
        _need(buf, pos + 4)
        n = _U32.unpack_from(buf, pos)[0]
        pos += 4
        _need(buf, pos + n)
        raw = buf[pos : pos + n]
        return (raw if tag == _T_BYTES else raw.decode("utf-8")), pos + n
    if tag == _T_LIST:
        _need(buf, pos + 4)
        count = _U32.unpack_from(buf, pos)[0]
        pos += 4
        items = []
        for _ in range(count):
            item, pos = _dec(buf, pos)
            items.append(item)
        return items, pos
    if tag == _T_DICT:
        _need(buf, pos + 4)
        count = _U32.unpack_from(buf, pos)[0]
        pos += 4
        result = {}
        for _ in range(count):
            key, pos = _dec(buf, pos)
            if isinstance(key, list):
                key = tuple(key)
            value, pos = _dec(buf, pos)
            result[key] = value
        return result, pos
    if tag == _T_NONE:
        return None, pos
    if tag == _T_TRUE:
        return True, pos
    if tag == _T_FALSE:
        return False, pos
    if tag == _T_BIGINT:
        _need(buf, pos + 5)
        sign = buf[pos : pos + 1]
        n = _U32.unpack_from(buf, pos + 1)[0]
        pos += 5
        _need(buf, pos + n)
        mag = int.from_bytes(buf[pos : pos + n], "big")
        return (-mag if sign == b"-" else mag), pos + n
    raise DecodeError(f"unknown tag {bytes([tag])!r}")


def decode(buf: bytes) -> Any:
    try:
        obj, pos = _dec(bytes(buf), 0)
    except (struct.error, UnicodeDecodeError) as exc:
        raise DecodeError(str(exc)) from exc
    if pos != len(buf):
        raise DecodeError("trailing bytes")
    return obj
