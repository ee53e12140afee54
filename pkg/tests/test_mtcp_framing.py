import random

import pytest

from bundlemux.cla.mtcp import MtcpDeframer, mtcp_frame
from bundlemux.errors import FrameTooLarge, MalformedFrame
from conftest import load_vector


def test_frame_20_octets_golden():
    assert mtcp_frame(b"\xAB" * 20) == load_vector("mtcp/frame_20.hex")


def test_frame_300_octets_golden():
    assert mtcp_frame(b"\xCD" * 300) == load_vector("mtcp/frame_300.hex")


def test_deframe_single():
    deframer = MtcpDeframer()
    assert deframer.feed(mtcp_frame(b"hello")) == [b"hello"]


def test_stream_split_at_every_boundary():
    first, second = b"\x01" * 40, b"\x02" * 300
    stream = mtcp_frame(first) + mtcp_frame(second)
    for cut in range(len(stream) + 1):
        deframer = MtcpDeframer()
        got = deframer.feed(stream[:cut]) + deframer.feed(stream[cut:])
        assert got == [first, second], f"split at {cut}"


def test_byte_at_a_time():
    payloads = [b"a", b"bb" * 200, b""]
    stream = b"".join(mtcp_frame(p) for p in payloads)
    deframer = MtcpDeframer()
    got = []
    for i in range(len(stream)):
        got += deframer.feed(stream[i:i + 1])
    assert got == payloads


def test_non_byte_string_is_malformed():
    deframer = MtcpDeframer()
    with pytest.raises(MalformedFrame):
        deframer.feed(b"\x84\x01\x02")  # array, not byte string


def test_indefinite_byte_string_is_malformed():
    deframer = MtcpDeframer()
    with pytest.raises(MalformedFrame):
        deframer.feed(b"\x5f\x41\x01\xff")


def test_frame_too_large():
    deframer = MtcpDeframer(max_frame=1024)
    with pytest.raises(FrameTooLarge):
        deframer.feed(b"\x5a\x00\x10\x00\x00")  # declares 1 MiB


def test_random_frames_random_chunks():
    rng = random.Random(5)
    payloads = [rng.randbytes(rng.randrange(0, 500)) for _ in range(20)]
    stream = b"".join(mtcp_frame(p) for p in payloads)
    deframer = MtcpDeframer()
    got = []
    pos = 0
    while pos < len(stream):
        step = rng.randrange(1, 64)
        got += deframer.feed(stream[pos:pos + step])
        pos += step
    assert got == payloads
