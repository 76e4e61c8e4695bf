"""
规范编码测试
"""
import pytest
from hypothesis import given, strategies as st

from crowdchain_sim.core.encoding import (
    decode_fields,
    decode_int,
    decode_int_list,
    decode_str,
    encode_fields,
    encode_int,
    encode_int_list,
)
from crowdchain_sim.core.exceptions import DecodeError


@given(st.lists(st.binary(max_size=64), max_size=8))
def test_fields_roundtrip(items):
    assert decode_fields(encode_fields(*items)) == items


@given(st.lists(st.binary(max_size=16), max_size=4), st.lists(st.binary(max_size=16), max_size=4))
def test_encoding_is_injective(a, b):
    if a != b:
        assert encode_fields(*a) != encode_fields(*b)


def test_field_count_checked():
    with pytest.raises(DecodeError):
        decode_fields(encode_fields(b"a", b"b"), 3)


@pytest.mark.parametrize("data", [b"\x00\x00", b"\x00\x00\x00\x05ab", b"\x00\x00\x00\x01"])
def test_truncated_input(data):
    with pytest.raises(DecodeError):
        decode_fields(data)


def test_ints():
    assert decode_int(encode_int(2 ** 64 - 1)) == 2 ** 64 - 1
    assert decode_int_list(encode_int_list([3, 0, 7])) == [3, 0, 7]
    with pytest.raises(ValueError):
        encode_int(-1)
    with pytest.raises(DecodeError):
        decode_int(b"\x01")


def test_invalid_utf8():
    with pytest.raises(DecodeError):
        decode_str(b"\xff\xfe")
