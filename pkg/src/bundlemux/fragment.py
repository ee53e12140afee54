"""Bundle fragmentation and ADU reassembly."""

from dataclasses import replace

from .bundle import Bundle, FLAG_IS_FRAGMENT
from .errors import IncompleteAdu, InconsistentFragments, MustNotFragment


def fragment_bundle(b: Bundle, max_payload: int) -> "list[Bundle]":
    """Split a bundle into fragments carrying at most max_payload octets each.

    A bundle that already fits is returned unchanged as a single-element
    list. Extension blocks flagged replicate-in-fragments appear in every
    fragment; all others only in the first.
    """
    if max_payload < 1:
        raise ValueError("max_payload must be >= 1")
    if b.must_not_fragment:
        raise MustNotFragment(str(b.destination))
    payload = b.payload
    if len(payload) <= max_payload:
        return [b]

    base_offset = b.fragment_offset if b.is_fragment else 0
    total = b.total_adu_length if b.is_fragment else len(payload)
    payload_block = b.blocks[-1]
    extensions = b.blocks[:-1]
    replicated = tuple(blk for blk in extensions if blk.replicate_in_fragments)

    fragments = []
    for offset in range(0, len(payload), max_payload):
        chunk = payload[offset:offset + max_payload]
        blocks = (extensions if offset == 0 else replicated) \
            + (replace(payload_block, data=chunk),)
        fragments.append(replace(
            b,
            proc_flags=b.proc_flags | FLAG_IS_FRAGMENT,
            fragment_offset=base_offset + offset,
            total_adu_length=total,
            blocks=blocks,
        ))
    return fragments


def _fragment_key(b: Bundle):
    return (b.source, b.creation, b.total_adu_length)


def reassemble(fragments: "list[Bundle]") -> Bundle:
    """Rebuild the original bundle from a complete fragment set.

    Duplicate and overlapping ranges are tolerated; on overlap the fragment
    with the lowest offset wins. The fragment at offset 0 supplies the block
    structure of the result.
    """
    if not fragments:
        raise IncompleteAdu([(0, 0)])
    key = _fragment_key(fragments[0])
    for frag in fragments:
        if not frag.is_fragment:
            raise InconsistentFragments(f"{frag.destination} is not a fragment")
        if _fragment_key(frag) != key:
            raise InconsistentFragments(
                f"fragment set mixes {key} and {_fragment_key(frag)}")
        if (frag.destination, frag.report_to, frag.lifetime_ms, frag.proc_flags) != \
                (fragments[0].destination, fragments[0].report_to,
                 fragments[0].lifetime_ms, fragments[0].proc_flags):
            raise InconsistentFragments("fragments disagree on primary fields")

    total = fragments[0].total_adu_length
    ordered = sorted(fragments, key=lambda f: f.fragment_offset)
    adu = bytearray()
    covered = 0
    missing = []
    for frag in ordered:
        start, data = frag.fragment_offset, frag.payload
        end = start + len(data)
        if start > covered:
            missing.append((covered, start))
            covered = start
        if end > covered:
            adu += data[covered - start:]
            covered = end
    if covered < total:
        missing.append((covered, total))
    if missing:
        raise IncompleteAdu(missing)

    first = ordered[0]
    if first.fragment_offset != 0:
        raise IncompleteAdu([(0, first.fragment_offset)])
    payload_block = replace(first.blocks[-1], data=bytes(adu))
    return replace(
        first,
        proc_flags=first.proc_flags & ~FLAG_IS_FRAGMENT,
        fragment_offset=None,
        total_adu_length=None,
        blocks=first.blocks[:-1] + (payload_block,),
    )
