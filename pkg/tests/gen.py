"""Seeded random generator for valid v7 bundles, used by round-trip and
fragmentation property tests."""

import random

from bundlemux.bundle import (Bundle, CanonicalBlock, CreationTimestamp,
                              FLAG_ACK_REQUESTED, FLAG_ADMIN_RECORD,
                              FLAG_IS_FRAGMENT, FLAG_MUST_NOT_FRAGMENT,
                              bundle_age_block, hop_count_block, make_bundle,
                              previous_node_block)
from bundlemux.crc import CrcType
from bundlemux.eid import DTN_NONE, EidScheme, EndpointId


def random_eid(rng: random.Random, allow_none=True) -> EndpointId:
    roll = rng.random()
    if allow_none and roll < 0.1:
        return DTN_NONE
    if roll < 0.5:
        node = rng.randrange(0, 2**20)
        service = rng.randrange(0, 2**16)
        return EndpointId(EidScheme.IPN, node_number=node, service_number=service)
    name = "node%d.dtn" % rng.randrange(0, 1000)
    demux = rng.choice(["", "app", "a/b", "x%d" % rng.randrange(100)])
    return EndpointId(EidScheme.DTN, f"//{name}/{demux}")


def random_bundle(rng: random.Random, max_payload=65536, fragments=True) -> Bundle:
    crc_type = rng.choice([CrcType.NONE, CrcType.CRC16_X25, CrcType.CRC32C])
    flags = 0
    for bit in (FLAG_ADMIN_RECORD, FLAG_MUST_NOT_FRAGMENT, FLAG_ACK_REQUESTED):
        if rng.random() < 0.2:
            flags |= bit

    blocks = []
    number = 2
    for _ in range(rng.randrange(0, 5)):
        kind = rng.randrange(4)
        block_crc = rng.choice([CrcType.NONE, CrcType.CRC16_X25, CrcType.CRC32C])
        if kind == 0:
            blocks.append(hop_count_block(rng.randrange(1, 64), 0, number, block_crc))
        elif kind == 1:
            blocks.append(bundle_age_block(rng.randrange(0, 10**6), number, block_crc))
        elif kind == 2:
            blocks.append(previous_node_block(
                random_eid(rng, allow_none=False).node_id(), number, block_crc))
        else:
            data = rng.randbytes(rng.randrange(0, 64))
            block_flags = rng.choice([0, 1, 4, 5, 16])
            blocks.append(CanonicalBlock(
                rng.randrange(11, 192), number, block_flags, block_crc, data))
        number += 1

    payload = rng.randbytes(rng.randrange(0, max_payload + 1))
    creation = CreationTimestamp(rng.randrange(0, 2**40), rng.randrange(0, 2**16))

    b = make_bundle(
        destination=random_eid(rng),
        source=random_eid(rng),
        payload=payload,
        report_to=random_eid(rng),
        creation=creation,
        lifetime_ms=rng.randrange(0, 2**32),
        proc_flags=flags,
        crc_type=crc_type,
        payload_crc_type=rng.choice([CrcType.NONE, CrcType.CRC16_X25, CrcType.CRC32C]),
        extension_blocks=tuple(blocks),
    )
    if fragments and rng.random() < 0.15 and not b.must_not_fragment:
        import dataclasses
        total = len(payload) + rng.randrange(0, 1000)
        offset = rng.randrange(0, max(1, total - len(payload) + 1))
        b = dataclasses.replace(
            b, proc_flags=b.proc_flags | FLAG_IS_FRAGMENT,
            fragment_offset=offset, total_adu_length=total)
        b.validate()
    return b
