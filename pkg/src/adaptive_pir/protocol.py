"""The adaptive scheme over full files.

Every file is a ``P x K`` matrix. File row ``i`` is stored with framework row
``i mod lam``. The user sends each server one column-query per column of the
query array. Servers answer the columns in order, layer by layer. The user
waits until some ``S`` is covered: ``N - S`` servers have answered layers
``0..S``. It then decodes layer ``S`` first and works down to layer 0.
Rows recovered in deeper layers make up for the ``S`` missing servers.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    BadIndex,
    InconsistentDecode,
    OrderViolation,
    ShapeMismatch,
    SOutOfRange,
)
from .field import PrimeField
from .framework import BasisSet
from .params import SystemParams
from .qarray import ColumnSpec, QueryArray, build_query_array, column_specs


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """``M`` files of shape ``(P, K)`` over one field."""

    field: PrimeField
    files: np.ndarray

    def __post_init__(self):
        files = np.array(self.files, dtype=np.int64)
        if files.ndim != 3 or 0 in files.shape:
            raise ShapeMismatch(f"expected (M, P, K) files, got shape {files.shape}")
        if np.any((files < 0) | (files >= self.field.q)):
            raise ShapeMismatch("file symbols must be reduced residues")
        object.__setattr__(self, "files", _frozen(files))

    @property
    def M(self) -> int:
        return self.files.shape[0]

    @property
    def P(self) -> int:
        return self.files.shape[1]

    @property
    def K(self) -> int:
        return self.files.shape[2]

    @classmethod
    def random(cls, params: SystemParams, field_: PrimeField, seed) -> Dataset:
        rng = np.random.default_rng(seed)
        return cls(field_, field_.random(rng, (params.M, params.P, params.K)))

    @classmethod
    def zeros(cls, params: SystemParams, field_: PrimeField) -> Dataset:
        return cls(field_, np.zeros((params.M, params.P, params.K), dtype=np.int64))

    def to_json(self) -> str:
        return json.dumps({"q": self.field.q, "files": self.files.tolist()})

    @classmethod
    def from_json(cls, text: str) -> Dataset:
        doc = json.loads(text)
        return cls(PrimeField(doc["q"]), np.array(doc["files"], dtype=np.int64))

    def to_csv(self) -> str:
        """Files stacked vertically: ``M * P`` lines of ``K`` symbols."""
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.files.reshape(-1, self.K).tolist())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, field_: PrimeField, M: int) -> Dataset:
        rows = [[int(v) for v in line] for line in csv.reader(io.StringIO(text)) if line]
        flat = np.array(rows, dtype=np.int64)
        if flat.ndim != 2 or flat.shape[0] % M:
            raise ShapeMismatch(f"{flat.shape[0]} CSV rows do not split into {M} files")
        return cls(field_, flat.reshape(M, -1, flat.shape[1]))

    def check(self, params: SystemParams):
        if self.files.shape != (params.M, params.P, params.K):
            raise ShapeMismatch(
                f"dataset shape {self.files.shape} != {(params.M, params.P, params.K)}"
            )


@dataclass(frozen=True)
class StorageShare:
    """Server ``server``'s evaluation of every file row: shape ``(M, P)``."""

    server: int
    values: np.ndarray
    q: int


@dataclass(frozen=True)
class QueryBundle:
    """All column-queries for one server.

    ``values[c, m, s, k]`` is the query for file ``m``, the ``s``-th row of
    column ``c`` (``specs[c].rows[s]``) and symbol ``k``; slots beyond the
    column's row count are zero.
    """

    server: int
    specs: tuple[ColumnSpec, ...]
    values: np.ndarray

    def column(self, c: int) -> np.ndarray:
        return self.values[c, :, : len(self.specs[c].rows), :]


@dataclass(frozen=True)
class ResponseBundle:
    server: int
    col: int
    h: int
    j: int
    values: tuple[int, ...]


@dataclass
class NoiseTranscript:
    """Noise used by one session, regenerated from ``seed``.

    ``storage[m, i, x]`` pads file ``m`` row ``i``; ``query[c, m, res, k, t]``
    is shared by the rows of column ``c`` with residue ``res``.
    """

    seed: int
    storage: Optional[np.ndarray] = None
    query: Optional[np.ndarray] = None


def _rng(seed, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def storage_noise(basis: BasisSet, seed) -> np.ndarray:
    p = basis.params
    return basis.field.random(_rng(seed, 0), (p.M, p.P, p.X))


def query_noise(basis: BasisSet, seed) -> np.ndarray:
    p = basis.params
    return basis.field.random(_rng(seed, 1), (p.P, p.M, p.lam, p.K, p.T))


@lru_cache(maxsize=64)
def specs_for(arr: QueryArray) -> tuple[ColumnSpec, ...]:
    return tuple(column_specs(arr))


def _row_table(basis: BasisSet, servers=None) -> np.ndarray:
    """``(P, n, K+X)`` storage basis values for every file row."""
    p = basis.params
    S = basis.storage_table()
    if servers is not None:
        S = S[:, list(servers), :]
    return S[np.arange(p.P) % p.lam]


def storage_values(basis: BasisSet, files: np.ndarray, noise: np.ndarray, servers=None) -> np.ndarray:
    """Shares ``(..., n, M, P)``; ``noise`` may carry extra leading batch axes."""
    p, F = basis.params, basis.field
    rows = _row_table(basis, servers)
    data = F.einsum("mik,ink->nmi", files, rows[:, :, : p.K])
    pad = F.einsum("...mix,inx->...nmi", noise, rows[:, :, p.K:])
    return (data + pad) % F.q


def encode_storage(basis: BasisSet, data: Dataset, noise_seed,
                   transcript: Optional[NoiseTranscript] = None) -> list[StorageShare]:
    p, F = basis.params, basis.field
    data.check(p)
    if data.field != basis.field:
        raise ShapeMismatch(f"dataset over {data.field}, basis over {basis.field}")
    noise = storage_noise(basis, noise_seed)
    if transcript is not None:
        transcript.storage = noise
    values = storage_values(basis, data.files, noise)
    return [StorageShare(n, _frozen(values[n]), F.q) for n in range(p.N)]


def _column_groups(specs: Sequence[ColumnSpec]):
    groups: dict = {}
    for c, spec in enumerate(specs):
        groups.setdefault(spec.residues, []).append(c)
    return groups


def query_values(basis: BasisSet, specs: Sequence[ColumnSpec], theta: int,
                 noise: np.ndarray, servers=None) -> np.ndarray:
    """Queries ``(..., n, P, M, lam, K)`` with rows padded to ``lam`` slots.

    ``noise`` is ``(..., P, M, lam, K, T)`` and may carry batch axes.
    """
    p, F = basis.params, basis.field
    servers = list(range(p.N)) if servers is None else list(servers)
    batch = noise.shape[:-5]
    out = np.zeros(batch + (len(servers), len(specs), p.M, p.lam, p.K), dtype=np.int64)
    for residues, cols in _column_groups(specs).items():
        r = len(residues)
        V = basis.query_table(residues)[:, :, :, servers]
        z = noise[..., cols, :, :, :, :][..., list(residues), :, :]
        vals = F.einsum("...cmskt,sktn->...ncmsk", z, V[:, :, : p.T, :])
        vals[..., theta, :, :] = (vals[..., theta, :, :] + np.transpose(V[:, :, p.T, :], (2, 0, 1))[:, None]) % F.q
        out[..., cols, :, :r, :] = vals
    return out


def make_queries(basis: BasisSet, arr: QueryArray, theta: int, noise_seed,
                 transcript: Optional[NoiseTranscript] = None) -> list[QueryBundle]:
    p = basis.params
    if not 0 <= theta < p.M:
        raise BadIndex(f"theta={theta} outside [0, {p.M})")
    if arr.lam != p.lam:
        raise ShapeMismatch(f"query array has lambda={arr.lam}, system has {p.lam}")
    specs = specs_for(arr)
    noise = query_noise(basis, noise_seed)
    if transcript is not None:
        transcript.query = noise
    values = query_values(basis, specs, theta, noise)
    return [QueryBundle(n, specs, _frozen(values[n])) for n in range(p.N)]


def _padded_rows(specs: Sequence[ColumnSpec], lam: int) -> np.ndarray:
    rows = np.zeros((len(specs), lam), dtype=np.int64)
    for c, spec in enumerate(specs):
        rows[c, : len(spec.rows)] = spec.rows
    return rows


def answer_values(share_values: np.ndarray, query: np.ndarray, specs, q: int) -> np.ndarray:
    """``(P, K)`` answers of one server."""
    lam = query.shape[-2]
    gathered = share_values[:, _padded_rows(specs, lam)]  # (M, P, lam)
    prod = query * np.transpose(gathered, (1, 0, 2))[..., None] % q
    return prod.sum(axis=(1, 2)) % q


def server_answer(share: StorageShare, bundle: QueryBundle) -> list[ResponseBundle]:
    """Answers for every column, in sending order (layer by layer)."""
    if share.server != bundle.server:
        raise ShapeMismatch(f"share of server {share.server} with queries for {bundle.server}")
    A = answer_values(share.values, bundle.values, bundle.specs, share.q)
    return [
        ResponseBundle(share.server, spec.col, spec.h, spec.j, tuple(A[spec.col].tolist()))
        for spec in bundle.specs
    ]


@dataclass(frozen=True)
class NeedMore:
    """Not enough answers yet. ``progress[n]`` counts answers from server n."""

    progress: tuple[int, ...]

    def __bool__(self):
        return False


class AdaptiveDecoder:
    """Single-consumer decoder fed one answer at a time.

    After each answer it looks for the smallest ``S`` such that ``N - S``
    servers have answered every column of layers ``0..S``; once found it
    decodes and the file becomes available as :attr:`result`.
    """

    def __init__(self, basis: BasisSet, arr: QueryArray, theta: Optional[int] = None):
        self.basis = basis
        self.params = basis.params
        self.arr = arr
        self.theta = theta
        self.specs = specs_for(arr)
        p = self.params
        self._answers = np.zeros((p.N, p.P, p.K), dtype=np.int64)
        self.progress = [0] * p.N
        self.result: Optional[np.ndarray] = None
        self.committed_S: Optional[int] = None
        self.consumed = [0] * p.N
        self.column_counts: list[int] = []

    @property
    def received(self) -> int:
        return sum(self.progress)

    def feed(self, server: int, bundle: ResponseBundle):
        """Record one answer; return the file once decodable, else NeedMore."""
        p = self.params
        if not 0 <= server < p.N or bundle.server != server:
            raise OrderViolation(f"answer from server {bundle.server} delivered as {server}")
        if bundle.col != self.progress[server]:
            raise OrderViolation(
                f"server {server} sent column {bundle.col}, expected {self.progress[server]}"
            )
        if len(bundle.values) != p.K:
            raise ShapeMismatch(f"answer carries {len(bundle.values)} symbols, expected {p.K}")
        self._answers[server, bundle.col] = bundle.values
        self.progress[server] += 1
        return self.poll()

    def ready_S(self) -> Optional[int]:
        p = self.params
        for S in range(p.lam):
            if sum(1 for c in self.progress if c >= p.thresholds[S]) >= p.N - S:
                return S
        return None

    def poll(self):
        if self.result is not None:
            return self.result
        S = self.ready_S()
        if S is None:
            return NeedMore(tuple(self.progress))
        self._decode(S)
        return self.result

    def _decode(self, S: int):
        p, F, basis = self.params, self.basis.field, self.basis
        W = np.zeros((p.P, p.K), dtype=np.int64)
        have = np.zeros(p.P, dtype=bool)
        consumed = [0] * p.N
        counts = [0] * p.thresholds[S]
        for h in range(S, -1, -1):
            known_count = S - h
            for spec in self.specs:
                if spec.h != h:
                    continue
                delivered = [n for n in range(p.N) if self.progress[n] > spec.col]
                counts[spec.col] = len(delivered)
                servers = tuple(delivered[: p.N - S])
                known_rows = spec.compensation[:known_count]
                if not all(have[a] for a in known_rows):
                    raise InconsistentDecode(f"compensation rows of column {spec.col} not decoded yet")
                unknown_rows = [a for a in spec.rows if a not in known_rows]
                known = tuple(a % p.lam for a in known_rows)
                unknown = tuple(a % p.lam for a in unknown_rows)
                for n in servers:
                    consumed[n] += 1
                for k in range(p.K):
                    G = basis.decode_map(servers, unknown, known, k)
                    vec = np.concatenate([self._answers[list(servers), spec.col, k],
                                          W[list(known_rows), k]])
                    vals = F.matmul(G, vec)
                    for a, v in zip(unknown_rows, vals.tolist()):
                        if have[a] and W[a, k] != v:
                            raise InconsistentDecode(f"row {a} decoded twice with different values")
                        W[a, k] = v
                for a in unknown_rows:
                    have[a] = True
        if not have.all():
            raise InconsistentDecode("layer 0 did not cover every row")
        W.setflags(write=False)
        self.result = W
        self.committed_S = S
        self.consumed = consumed
        self.column_counts = counts


def adaptive_decode(basis: BasisSet, arr: QueryArray, theta: Optional[int],
                    responses: Iterable[tuple[int, ResponseBundle]]) -> Union[np.ndarray, NeedMore]:
    dec = AdaptiveDecoder(basis, arr, theta)
    out = dec.poll()
    for server, bundle in responses:
        out = dec.feed(server, bundle)
        if dec.result is not None:
            return dec.result
    return out


def rate_and_cost(params: SystemParams, S: int) -> tuple[Fraction, Fraction]:
    """Download cost in symbols and retrieval rate with ``S`` stragglers."""
    if not 0 <= S < params.lam:
        raise SOutOfRange(f"S={S} outside [0, {params.lam})")
    D = Fraction((params.N - S) * params.K * params.thresholds[S])
    R = Fraction(params.P * params.K) / D
    return D, R


def query_array_for(params: SystemParams) -> QueryArray:
    return build_query_array(params.lam)
