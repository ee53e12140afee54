import random

import pytest

from bundlemux import cbor
from oracles import cbor_encode


def random_item(rng: random.Random, depth=0):
    choices = ["uint", "bytes", "text", "bool"]
    if depth < 3:
        choices += ["array", "map"]
    kind = rng.choice(choices)
    if kind == "uint":
        return rng.randrange(0, 2**64)
    if kind == "bytes":
        return rng.randbytes(rng.randrange(0, 40))
    if kind == "text":
        return "".join(rng.choice("abc/:.é") for _ in range(rng.randrange(0, 12)))
    if kind == "bool":
        return rng.choice([True, False, None])
    if kind == "array":
        return [random_item(rng, depth + 1) for _ in range(rng.randrange(0, 5))]
    return {rng.randrange(0, 50): random_item(rng, depth + 1)
            for _ in range(rng.randrange(0, 5))}


def test_encoding_matches_oracle():
    rng = random.Random(7)
    for _ in range(500):
        item = random_item(rng)
        assert cbor.encode(item) == cbor_encode(item)


def test_round_trip():
    rng = random.Random(8)
    for _ in range(500):
        item = random_item(rng)
        assert cbor.decode(cbor.encode(item)) == item


def test_minimal_length_integer_boundaries():
    for n, expected in [(0, "00"), (23, "17"), (24, "1818"), (255, "18ff"),
                        (256, "190100"), (65535, "19ffff"), (65536, "1a00010000"),
                        (2**32 - 1, "1affffffff"), (2**32, "1b0000000100000000")]:
        assert cbor.encode(n).hex() == expected


def test_indefinite_array_decode():
    data = b"\x9f\x01\x02\x9f\x03\xff\xff"
    assert cbor.decode(data) == [1, 2, [3]]


def test_truncated_raises_specific_error():
    full = cbor.encode([1, b"abcd", "xy"])
    for cut in range(len(full)):
        with pytest.raises(cbor.CborTruncated):
            cbor.decode_prefix(full[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(cbor.CborError):
        cbor.decode(b"\x01\x02")


def test_rejects_floats_and_tags():
    with pytest.raises(cbor.CborError):
        cbor.decode(b"\xf9\x3c\x00")  # half float
    with pytest.raises(cbor.CborError):
        cbor.decode(b"\xc2\x41\x01")  # tag 2


def test_negative_int_round_trip():
    assert cbor.decode(cbor.encode(-1)) == -1
    assert cbor.decode(cbor.encode(-500)) == -500


def test_decode_prefix_reports_consumption():
    payload = cbor.encode({0: 5}) + b"rest"
    obj, end = cbor.decode_prefix(payload)
    assert obj == {0: 5}
    assert payload[end:] == b"rest"
