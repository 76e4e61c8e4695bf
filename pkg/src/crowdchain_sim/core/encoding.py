"""
规范编码
所有上链负载、证明陈述与见证都使用长度前缀编码，保证编码是单射的
"""
import struct
from typing import List, Optional, Sequence

from .exceptions import DecodeError

_LEN = struct.Struct(">I")
_U64 = struct.Struct(">Q")


def encode_fields(*fields: bytes) -> bytes:
    """按顺序编码若干字节串：每个字段前加 4 字节大端长度"""
    out = bytearray()
    for item in fields:
        if not isinstance(item, (bytes, bytearray)):
            raise TypeError(f"字段必须是 bytes，收到 {type(item).__name__}")
        out += _LEN.pack(len(item))
        out += item
    return bytes(out)


def decode_fields(data: bytes, count: Optional[int] = None) -> List[bytes]:
    """
    解析 encode_fields 的输出

    Args:
        data: 编码后的字节串
        count: 期望的字段数（None 表示不检查）

    Raises:
        DecodeError: 长度前缀越界、存在尾随字节或字段数不符
    """
    if not isinstance(data, (bytes, bytearray)):
        raise DecodeError("输入不是字节串")
    fields: List[bytes] = []
    offset = 0
    total = len(data)
    while offset < total:
        if offset + _LEN.size > total:
            raise DecodeError("长度前缀被截断")
        (size,) = _LEN.unpack_from(data, offset)
        offset += _LEN.size
        if offset + size > total:
            raise DecodeError("字段长度越界")
        fields.append(bytes(data[offset:offset + size]))
        offset += size
    if count is not None and len(fields) != count:
        raise DecodeError(f"字段数不符: 期望 {count}，实际 {len(fields)}")
    return fields


def encode_int(value: int) -> bytes:
    """编码非负整数（8 字节大端）"""
    if value < 0:
        raise ValueError("只支持非负整数")
    return _U64.pack(value)


def decode_int(data: bytes) -> int:
    """解析 encode_int 的输出"""
    if len(data) != _U64.size:
        raise DecodeError("整数字段长度必须为 8")
    return _U64.unpack(data)[0]


def encode_list(items: Sequence[bytes]) -> bytes:
    """编码字节串列表（作为单个字段嵌套）"""
    return encode_fields(*items)


def decode_list(data: bytes) -> List[bytes]:
    return decode_fields(data)


def encode_int_list(values: Sequence[int]) -> bytes:
    return encode_fields(*(encode_int(v) for v in values))


def decode_int_list(data: bytes) -> List[int]:
    return [decode_int(item) for item in decode_fields(data)]


def encode_str(value: str) -> bytes:
    return value.encode("utf-8")


def decode_str(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError(f"非法 UTF-8 字符串: {e}")
