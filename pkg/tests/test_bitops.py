import numpy as np
import pytest

from siqrng.bitops import (
    as_bits,
    bits_to_str,
    pack_bits,
    read_bit_file,
    symbols_to_bits,
    unpack_bits,
    write_bit_file,
)
from siqrng.errors import SerializationError


def test_as_bits_accepts_strings_lists_arrays():
    for source in ("0110", [0, 1, 1, 0], np.array([0, 1, 1, 0], dtype=np.uint8)):
        assert as_bits(source).tolist() == [0, 1, 1, 0]


def test_as_bits_rejects_non_binary():
    with pytest.raises(ValueError):
        as_bits([0, 2, 1])


def test_bits_round_trip_string():
    assert bits_to_str(as_bits("10011")) == "10011"


def test_symbols_to_bits_big_endian():
    assert bits_to_str(symbols_to_bits([0, 1, 1, 0], 2)) == "0110"
    assert bits_to_str(symbols_to_bits([3, 0], 4)) == "1100"
    assert symbols_to_bits([], 2).size == 0


def test_symbols_to_bits_rejects_non_power_of_two():
    with pytest.raises(SerializationError):
        symbols_to_bits([0, 1], 3)


def test_symbols_to_bits_rejects_out_of_range():
    with pytest.raises(SerializationError):
        symbols_to_bits([4], 4)


def test_pack_unpack_little_endian_bit_order():
    bits = as_bits("10000000" + "01000000")
    packed = pack_bits(bits)
    assert packed == bytes([0b00000001, 0b00000010])
    assert unpack_bits(packed, 16).tolist() == bits.tolist()


def test_bit_file_round_trip(tmp_path, rng):
    bits = rng.integers(0, 2, size=1001, dtype=np.uint8)
    path = tmp_path / "bits.bin"
    n = write_bit_file(path, bits)
    assert n == 1001
    back = read_bit_file(path, 1001)
    assert np.array_equal(back, bits)


def test_unpack_requesting_too_many_bits_fails():
    with pytest.raises(ValueError):
        unpack_bits(b"\x00", 9)
