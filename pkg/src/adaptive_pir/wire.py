"""Canonical binary layout for shares, queries and answers.

A message is::

    b"APIR" | version u8 | kind u8 | q u32 | width u8 | section*

and each section is a big-endian ``u32`` byte length followed by its payload.
Field symbols are unsigned big-endian integers of ``width`` bytes, the fewest
that hold ``q - 1``. Header sections hold ``u32`` integers.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .protocol import QueryBundle, ResponseBundle, StorageShare

MAGIC = b"APIR"
VERSION = 1
KIND_SHARE, KIND_QUERY, KIND_RESPONSE = 1, 2, 3


def symbol_width(q: int) -> int:
    return max(1, ((q - 1).bit_length() + 7) // 8)


def pack_symbols(values, q: int) -> bytes:
    width = symbol_width(q)
    flat = np.asarray(values, dtype=np.int64).ravel()
    # big-endian bytes of each value, trimmed to ``width``
    be = flat.astype(">u8").view(np.uint8).reshape(-1, 8)[:, 8 - width:]
    return be.tobytes()


def unpack_symbols(data: bytes, q: int) -> np.ndarray:
    width = symbol_width(q)
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, width)
    full = np.zeros((raw.shape[0], 8), dtype=np.uint8)
    full[:, 8 - width:] = raw
    return full.view(">u8").ravel().astype(np.int64)


def _section(payload: bytes) -> bytes:
    return struct.pack(">I", len(payload)) + payload


def _ints(*values) -> bytes:
    return struct.pack(f">{len(values)}I", *values)


def _header(kind: int, q: int) -> bytes:
    return MAGIC + struct.pack(">BBIB", VERSION, kind, q, symbol_width(q))


def _read(blob: bytes, expect_kind: int):
    if blob[:4] != MAGIC:
        raise ValueError("not an APIR message")
    version, kind, q, width = struct.unpack(">BBIB", blob[4:11])
    if version != VERSION or kind != expect_kind or width != symbol_width(q):
        raise ValueError(f"unexpected header version={version} kind={kind}")
    sections, pos = [], 11
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos:pos + 4])
        sections.append(blob[pos + 4:pos + 4 + length])
        pos += 4 + length
    if pos != len(blob):
        raise ValueError("truncated section")
    return q, sections


def encode_share(share: StorageShare) -> bytes:
    M, P = share.values.shape
    return (_header(KIND_SHARE, share.q) + _section(_ints(share.server, M, P))
            + _section(pack_symbols(share.values, share.q)))


def decode_share(blob: bytes) -> StorageShare:
    q, (head, body) = _read(blob, KIND_SHARE)
    server, M, P = struct.unpack(">3I", head)
    return StorageShare(server, unpack_symbols(body, q).reshape(M, P), q)


def encode_query(bundle: QueryBundle, q: int) -> bytes:
    """One section per column: ``u32 col, u32 rows`` then ``M*rows*K`` symbols."""
    ncols, M, _, K = bundle.values.shape
    parts = [_header(KIND_QUERY, q), _section(_ints(bundle.server, ncols, M, K))]
    for c, spec in enumerate(bundle.specs):
        parts.append(_section(_ints(spec.col, len(spec.rows)) + pack_symbols(bundle.column(c), q)))
    return b"".join(parts)


def decode_query_values(blob: bytes) -> tuple[int, list[np.ndarray]]:
    """Server id and the per-column ``(M, rows, K)`` query arrays."""
    q, sections = _read(blob, KIND_QUERY)
    server, ncols, M, K = struct.unpack(">4I", sections[0])
    columns = []
    for sec in sections[1:]:
        _, rows = struct.unpack(">2I", sec[:8])
        columns.append(unpack_symbols(sec[8:], q).reshape(M, rows, K))
    if len(columns) != ncols:
        raise ValueError("column count mismatch")
    return server, columns


def encode_response(resp: ResponseBundle, q: int) -> bytes:
    return (_header(KIND_RESPONSE, q) + _section(_ints(resp.server, resp.col, resp.h, resp.j))
            + _section(pack_symbols(resp.values, q)))


def decode_response(blob: bytes) -> ResponseBundle:
    q, (head, body) = _read(blob, KIND_RESPONSE)
    server, col, h, j = struct.unpack(">4I", head)
    return ResponseBundle(server, col, h, j, tuple(unpack_symbols(body, q).tolist()))


def digest(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()[:16]
