import dataclasses
import random

import pytest

from bundlemux.bundle import (CanonicalBlock, FLAG_IS_FRAGMENT,
                              FLAG_MUST_NOT_FRAGMENT, bundle_age_block,
                              make_bundle)
from bundlemux.crc import CrcType
from bundlemux.eid import parse_eid
from bundlemux.errors import IncompleteAdu, InconsistentFragments, MustNotFragment
from bundlemux.fragment import fragment_bundle, reassemble
from gen import random_bundle

DEST = parse_eid("dtn://b.dtn/app")


def test_three_fragments_arithmetic():
    b = make_bundle(DEST, payload=bytes(range(10)))
    frags = fragment_bundle(b, 4)
    assert [(f.fragment_offset, len(f.payload)) for f in frags] == \
        [(0, 4), (4, 4), (8, 2)]
    assert all(f.total_adu_length == 10 for f in frags)
    assert all(f.is_fragment for f in frags)
    assert b"".join(f.payload for f in frags) == b.payload


def test_fitting_bundle_returned_unchanged():
    b = make_bundle(DEST, payload=b"abcd")
    assert fragment_bundle(b, 4) == [b]


def test_must_not_fragment():
    b = make_bundle(DEST, payload=b"abcdef", proc_flags=FLAG_MUST_NOT_FRAGMENT)
    with pytest.raises(MustNotFragment):
        fragment_bundle(b, 2)


def test_replicated_blocks_in_every_fragment():
    age = bundle_age_block(100, 2)  # replicate flag set by constructor
    opaque = CanonicalBlock(50, 3, 0, CrcType.NONE, b"once")
    b = make_bundle(DEST, payload=bytes(12), extension_blocks=(age, opaque))
    frags = fragment_bundle(b, 5)
    assert len(frags) == 3
    assert frags[0].find_block(50) is not None
    assert all(f.find_block(7) is not None for f in frags)
    assert all(f.find_block(50) is None for f in frags[1:])


def test_offsets_rebased_for_refragmentation():
    b = make_bundle(DEST, payload=bytes(range(20)))
    first_pass = fragment_bundle(b, 10)
    second = fragment_bundle(first_pass[1], 4)
    assert [f.fragment_offset for f in second] == [10, 14, 18]
    assert all(f.total_adu_length == 20 for f in second)


def test_reassemble_inverse():
    b = make_bundle(DEST, payload=bytes(range(10)))
    frags = fragment_bundle(b, 4)
    assert reassemble(frags) == b


def test_reassemble_gap_reports_missing_range():
    b = make_bundle(DEST, payload=bytes(range(10)))
    frags = fragment_bundle(b, 4)
    with pytest.raises(IncompleteAdu) as err:
        reassemble([frags[0], frags[2]])
    assert err.value.missing == [(4, 8)]


def test_reassemble_duplicate_fragment_idempotent():
    b = make_bundle(DEST, payload=bytes(range(10)))
    frags = fragment_bundle(b, 4)
    assert reassemble([frags[0]] + frags) == b


def test_reassemble_overlap_lowest_offset_wins():
    b = make_bundle(DEST, payload=b"ABCDEFGHIJ")
    frags = fragment_bundle(b, 4)
    overlap = dataclasses.replace(
        frags[1], fragment_offset=2,
        blocks=(dataclasses.replace(frags[1].blocks[-1], data=b"xxEFGH"),))
    assert reassemble([frags[0], overlap, frags[2]]).payload == b"ABCDEFGHIJ"


def test_reassemble_mixed_sets_rejected():
    a = fragment_bundle(make_bundle(DEST, payload=bytes(10)), 4)
    b = fragment_bundle(make_bundle(DEST, payload=bytes(12)), 4)
    with pytest.raises(InconsistentFragments):
        reassemble([a[0], b[1]])


def test_reassemble_non_fragment_rejected():
    with pytest.raises(InconsistentFragments):
        reassemble([make_bundle(DEST, payload=b"x")])


def test_property_fragment_then_reassemble():
    rng = random.Random(99)
    for _ in range(200):
        b = random_bundle(rng, max_payload=500, fragments=False)
        if b.must_not_fragment or len(b.payload) == 0:
            continue
        max_payload = rng.randrange(1, len(b.payload) + 2)
        frags = fragment_bundle(b, max_payload)
        if len(frags) == 1:
            assert frags[0] == b
            continue
        rng.shuffle(frags)
        restored = reassemble(frags)
        assert restored == dataclasses.replace(
            b, proc_flags=b.proc_flags & ~FLAG_IS_FRAGMENT)


def test_fragment_payload_concatenation_conserved():
    rng = random.Random(98)
    for _ in range(100):
        b = random_bundle(rng, max_payload=300, fragments=False)
        if b.must_not_fragment or not b.payload:
            continue
        frags = fragment_bundle(b, max(1, len(b.payload) // 3))
        ordered = sorted(frags, key=lambda f: f.fragment_offset or 0)
        assert b"".join(f.payload for f in ordered) == b.payload
