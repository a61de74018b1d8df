"""Coding back-ends for storage and queries over ``lam`` framework rows.

A back-end supplies, for each framework row ``i``:

* storage basis functions ``b[i,k](x)``, ``k < K+X``: the share of row ``i``
  held by server ``n`` is ``sum_k coeff[k] * b[i,k](alpha_n)`` where the
  first ``K`` coefficients are file symbols and the last ``X`` are noise;
* query basis functions ``v[R][i,k,t](x)``, ``t <= T``, for a set ``R`` of
  rows retrieved together: ``t < T`` carry query noise, ``t = T`` marks the
  desired file;
* a decoder that recovers the ``R`` rows of the desired file from enough
  server answers, optionally helped by rows already known.

Two back-ends are provided. ``LagrangeBasis`` uses Lagrange interpolation
polynomials so every answer is a polynomial in ``alpha_n`` whose values at
the data points are the wanted symbols. ``CSABasis`` uses Cauchy terms
``1/(x - beta)`` for data and monomials for noise, so wanted symbols appear
as Cauchy coefficients and interference collapses onto low-degree monomials.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from math import comb
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    EnumerationTooLarge,
    InsufficientResponses,
    PoleHit,
    SingularMatrix,
    SingularSystem,
)
from .field import FieldElement, FieldMatrix
from .params import EncodingParameters, SystemParams, select_parameters

ENUMERATION_LIMIT = 10**6


class FrameworkKind(str, Enum):
    LAGRANGE = "lagrange"
    CSA = "csa"


@dataclass(frozen=True)
class PartialFileRequest:
    theta: int
    R: tuple[int, ...]

    def __post_init__(self):
        R = tuple(sorted(set(int(i) for i in self.R)))
        if not R:
            raise ValueError("R must be nonempty")
        object.__setattr__(self, "R", R)

    @property
    def r(self) -> int:
        return len(self.R)


def _as_int(x) -> int:
    return x.value if isinstance(x, FieldElement) else int(x)


class BasisSet:
    """Shared machinery; subclasses define the two scalar basis evaluators."""

    kind: FrameworkKind

    def __init__(self, params: SystemParams, enc: Optional[EncodingParameters] = None):
        self.params = params
        self.enc = enc if enc is not None else select_parameters(params)
        self.field = self.enc.field
        self.q = self.field.q
        self.alphas = self.enc.alpha_array
        self.betas = self.enc.beta_array
        if self.betas.shape != (params.lam, params.K + params.X) or self.alphas.shape != (params.N,):
            raise ValueError("encoding parameters do not match the system shape")
        self._storage_table = None
        self._query_tables: dict = {}
        self._decode_maps: dict = {}

    def __repr__(self):
        p = self.params
        return f"{type(self).__name__}(N={p.N}, K={p.K}, X={p.X}, T={p.T}, q={self.q})"

    # scalar evaluators, x is a plain residue
    def storage_eval(self, i: int, k: int, x: int) -> int:
        raise NotImplementedError

    def query_eval(self, R: tuple[int, ...], i: int, k: int, t: int, x: int) -> int:
        raise NotImplementedError

    def _check_query_args(self, R, i, k, t):
        p = self.params
        if i not in R:
            raise ValueError(f"row {i} is not in R={R}")
        if not 0 <= k < p.K or not 0 <= t <= p.T:
            raise ValueError(f"k={k} or t={t} out of range")

    # tables over the server points
    def storage_table(self) -> np.ndarray:
        """``S[i, n, k] = b[i,k](alpha_n)``, shape (lam, N, K+X)."""
        if self._storage_table is None:
            p = self.params
            S = np.empty((p.lam, p.N, p.K + p.X), dtype=np.int64)
            for i in range(p.lam):
                for n, a in enumerate(self.alphas.tolist()):
                    for k in range(p.K + p.X):
                        S[i, n, k] = self.storage_eval(i, k, a)
            S.setflags(write=False)
            self._storage_table = S
        return self._storage_table

    def query_table(self, R: Sequence[int]) -> np.ndarray:
        """``V[s, k, t, n] = v[R][R[s],k,t](alpha_n)``, shape (r, K, T+1, N)."""
        R = tuple(sorted(R))
        if R not in self._query_tables:
            p = self.params
            V = np.empty((len(R), p.K, p.T + 1, p.N), dtype=np.int64)
            for s, i in enumerate(R):
                for k in range(p.K):
                    for t in range(p.T + 1):
                        for n, a in enumerate(self.alphas.tolist()):
                            V[s, k, t, n] = self.query_eval(R, i, k, t, a)
            V.setflags(write=False)
            self._query_tables[R] = V
        return self._query_tables[R]

    def needed_responses(self, r: int, d: int) -> int:
        """Answers needed to decode ``r`` rows when ``d`` of them are known."""
        p = self.params
        return p.K + p.X + p.T - 1 + r - d

    def decode_map(self, servers: tuple[int, ...], unknown: tuple[int, ...],
                   known: tuple[int, ...], k: int) -> np.ndarray:
        """Matrix G with ``G @ concat(answers[servers, k], known_rows[:, k])``
        equal to the ``k``-th symbol of each unknown row."""
        key = (servers, unknown, known, k)
        G = self._decode_maps.get(key)
        if G is None:
            if len(servers) != self.needed_responses(len(unknown) + len(known), len(known)):
                raise InsufficientResponses(
                    f"{len(servers)} answers for {len(unknown)} unknown rows"
                )
            try:
                G = self._build_decode_map(servers, unknown, known, k)
            except SingularMatrix as exc:
                raise SingularSystem(str(exc)) from exc
            G.setflags(write=False)
            if len(self._decode_maps) > 200_000:
                self._decode_maps.clear()
            self._decode_maps[key] = G
        return G

    def _build_decode_map(self, servers, unknown, known, k) -> np.ndarray:
        raise NotImplementedError


class LagrangeBasis(BasisSet):
    kind = FrameworkKind.LAGRANGE

    def storage_eval(self, i, k, x):
        q, row = self.q, self.betas[i].tolist()
        num = den = 1
        for j, bj in enumerate(row):
            if j != k:
                num = num * (x - bj) % q
                den = den * (row[k] - bj) % q
        if den == 0:
            raise PoleHit(f"repeated interpolation point in row {i}")
        return num * self.field.inv(den) % q

    def query_eval(self, R, i, k, t, x):
        self._check_query_args(R, i, k, t)
        q, T = self.q, self.params.T
        alphas, betas = self.alphas.tolist(), self.betas
        num = den = 1
        if t < T:
            # vanishes at the other noise points and at every data point of R
            for j in range(T):
                if j != t:
                    num = num * (x - alphas[j]) % q
                    den = den * (alphas[t] - alphas[j]) % q
            for j in R:
                b = int(betas[j, k])
                num = num * (x - b) % q
                den = den * (alphas[t] - b) % q
        else:
            # equals 1 at row i's data point, 0 at the other rows and noise points
            bi = int(betas[i, k])
            for j in R:
                if j != i:
                    b = int(betas[j, k])
                    num = num * (x - b) % q
                    den = den * (bi - b) % q
            for j in range(T):
                num = num * (x - alphas[j]) % q
                den = den * (bi - alphas[j]) % q
        if den == 0:
            raise PoleHit("query interpolation points collide")
        return num * self.field.inv(den) % q

    def _build_decode_map(self, servers, unknown, known, k):
        # the answer polynomial is pinned by its values at the server points
        # and at the data points of the known rows; read it at the unknown ones
        nodes = [int(self.alphas[n]) for n in servers] + [int(self.betas[i, k]) for i in known]
        targets = [int(self.betas[i, k]) for i in unknown]
        try:
            return self.field.lagrange_weights(nodes, targets)
        except ValueError as exc:
            raise SingularMatrix(str(exc)) from exc


class CSABasis(BasisSet):
    kind = FrameworkKind.CSA

    def storage_eval(self, i, k, x):
        q, K = self.q, self.params.K
        if k >= K:
            return pow(x, k - K, q)
        diff = (x - int(self.betas[i, k])) % q
        if diff == 0:
            raise PoleHit(f"x={x} is the data point of row {i}, column {k}")
        return self.field.inv(diff)

    def query_eval(self, R, i, k, t, x):
        self._check_query_args(R, i, k, t)
        q, K, T = self.q, self.params.K, self.params.T
        row = self.betas[i, :K].tolist()
        if t < T:
            out = pow(x, t, q)
            for b in row:
                out = out * (x - b) % q
            return out
        num = den = 1
        for j, b in enumerate(row):
            if j != k:
                num = num * (x - b) % q
                den = den * (row[k] - b) % q
        if den == 0:
            raise PoleHit(f"repeated data point in row {i}")
        return num * self.field.inv(den) % q

    def system_matrix(self, servers: Sequence[int], rows: Sequence[int], k: int) -> np.ndarray:
        """Cauchy columns for ``rows`` then monomials up to degree K+X+T-2."""
        p, q = self.params, self.q
        a = self.alphas[list(servers)]
        cauchy = (a[:, None] - self.betas[list(rows), k][None, :]) % q
        if np.any(cauchy == 0):
            raise PoleHit("server point coincides with a data point")
        cauchy = self.field.inv_array(cauchy)
        powers = np.ones((len(servers), p.K + p.X + p.T - 1), dtype=np.int64)
        for j in range(1, powers.shape[1]):
            powers[:, j] = powers[:, j - 1] * a % q
        return np.concatenate([cauchy, powers], axis=1)

    def _build_decode_map(self, servers, unknown, known, k):
        q, F = self.q, self.field
        C = self.system_matrix(servers, unknown, k)
        Cinv = F.inverse_matrix(C)[: len(unknown)]
        if not known:
            return Cinv
        # subtract the Cauchy terms of the known rows before solving
        Ck = self.system_matrix(servers, known, k)[:, : len(known)]
        return np.concatenate([Cinv, (-F.matmul(Cinv, Ck)) % q], axis=1)


def make_basis(kind, params: SystemParams, enc: Optional[EncodingParameters] = None) -> BasisSet:
    kind = FrameworkKind(kind)
    cls = LagrangeBasis if kind is FrameworkKind.LAGRANGE else CSABasis
    return cls(params, enc)


def storage_basis_eval(basis: BasisSet, i: int, k: int, x) -> FieldElement:
    return basis.field(basis.storage_eval(i, k, _as_int(x) % basis.q))


def query_basis_eval(basis: BasisSet, R, i: int, k: int, t: int, x) -> FieldElement:
    R = tuple(sorted(R))
    return basis.field(basis.query_eval(R, i, k, t, _as_int(x) % basis.q))


# --------------------------------------------------------------------------
# the framework as a small PIR scheme over lam rows


def framework_encode(basis: BasisSet, files: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Shares ``(N, M, lam)`` of files ``(M, lam, K)`` with noise ``(M, lam, X)``."""
    S = basis.storage_table()
    coeffs = np.concatenate([files, noise], axis=2) % basis.q
    # out[n, m, i] = sum_k coeffs[m, i, k] * S[i, n, k]
    prod = coeffs[None, :, :, :] * np.transpose(S, (1, 0, 2))[:, None, :, :] % basis.q
    return prod.sum(axis=3) % basis.q


def framework_query(basis: BasisSet, R: Sequence[int], theta: int, noise: np.ndarray) -> np.ndarray:
    """Queries ``(N, M, r, K)`` from noise ``(M, r, K, T)``."""
    q, T = basis.q, basis.params.T
    V = basis.query_table(R)
    # Q[n, m, s, k] = sum_t noise[m, s, k, t] * V[s, k, t, n]
    prod = noise[None, ...] * np.transpose(V[:, :, :T, :], (3, 0, 1, 2))[:, None, ...] % q
    Q = prod.sum(axis=4) % q
    Q[:, theta] = (Q[:, theta] + np.transpose(V[:, :, T, :], (2, 0, 1))) % q
    return Q


def framework_answer(stored: np.ndarray, Q: np.ndarray, R: Sequence[int], q: int) -> np.ndarray:
    """Answers ``(N, K)``: each server sums query times share over files and rows."""
    rows = stored[:, :, list(sorted(R))]
    return (Q * rows[..., None] % q).sum(axis=(1, 2)) % q


def decode_partial(basis: BasisSet, req: PartialFileRequest, responses: Mapping[int, Sequence],
                   known_rows: Optional[Mapping[int, Sequence]] = None) -> FieldMatrix:
    """Recover rows ``req.R`` of the desired file, ordered as ``req.R``.

    Uses the lowest-indexed servers among ``responses``, exactly as many as
    the known rows leave undetermined.
    """
    K = basis.params.K
    known_rows = dict(known_rows or {})
    if any(i not in req.R for i in known_rows):
        raise ValueError("known rows must belong to R")
    known = tuple(sorted(known_rows))
    unknown = tuple(i for i in req.R if i not in known_rows)
    need = basis.needed_responses(req.r, len(known))
    if len(responses) < need:
        raise InsufficientResponses(f"{len(responses)} answers, need {need}")
    servers = tuple(sorted(responses)[:need])
    y = np.array([[_as_int(v) for v in responses[n]] for n in servers], dtype=np.int64).reshape(need, K)
    w = np.array([[_as_int(v) for v in known_rows[i]] for i in known], dtype=np.int64).reshape(len(known), K)
    out = {i: w[s] for s, i in enumerate(known)}
    decoded = np.zeros((len(unknown), K), dtype=np.int64)
    for k in range(K):
        G = basis.decode_map(servers, unknown, known, k)
        decoded[:, k] = basis.field.matmul(G, np.concatenate([y[:, k], w[:, k]]))
    for s, i in enumerate(unknown):
        out[i] = decoded[s]
    return FieldMatrix(basis.field, [out[i] for i in req.R])


# --------------------------------------------------------------------------
# certification


@dataclass
class FrameworkCertificate:
    kind: str
    params: dict
    q: int
    f0: bool = True
    f1: bool = True
    f2: bool = True
    f3: bool = True
    checked: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.f0 and self.f1 and self.f2 and self.f3

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "params": self.params, "q": self.q,
            "F0": self.f0, "F1": self.f1, "F2": self.f2, "F3": self.f3,
            "ok": self.ok, "checked": self.checked, "witnesses": self.witnesses,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def nonempty_subsets(n: int):
    for size in range(1, n + 1):
        yield from combinations(range(n), size)


def check_enumeration(params: SystemParams, sizes: Sequence[int]):
    for size in sizes:
        if comb(params.N, size) > ENUMERATION_LIMIT:
            raise EnumerationTooLarge(f"C({params.N},{size}) exceeds {ENUMERATION_LIMIT}")


def certify_framework(basis: BasisSet, exhaustive_trials: int = 5, seed: int = 0,
                      max_witnesses: int = 5) -> FrameworkCertificate:
    """Check all four framework conditions by exhaustive subset enumeration.

    F0 and F1 are matrix-rank checks. F2 (no known rows) and F3 (some known
    rows) run encode, query, answer and decode for the all-zero file plus
    ``exhaustive_trials`` random files, over every response subset.
    """
    p, F = basis.params, basis.field
    check_enumeration(p, (p.K + p.X, p.X, p.T))
    cert = FrameworkCertificate(basis.kind.value, p.to_dict(), basis.q)
    S = basis.storage_table()

    def fail(cond, witness):
        setattr(cert, cond.lower(), False)
        if len(cert.witnesses) < max_witnesses:
            cert.witnesses.append({"condition": cond, **witness})

    n0 = 0
    for i in range(p.lam):
        for sub in combinations(range(p.N), p.K + p.X):
            n0 += 1
            B = S[i][list(sub), :]
            if not F.nonsingular(B):
                fail("F0", {"row": i, "servers": list(sub), "matrix": B.tolist()})
    n1 = 0
    if p.X > 0:
        for i in range(p.lam):
            for sub in combinations(range(p.N), p.X):
                n1 += 1
                B = S[i][list(sub), p.K:]
                if not F.nonsingular(B):
                    fail("F1", {"row": i, "servers": list(sub), "matrix": B.tolist()})
    for R in nonempty_subsets(p.lam):
        V = basis.query_table(R)
        for s, i in enumerate(R):
            for k in range(p.K):
                for sub in combinations(range(p.N), p.T):
                    n1 += 1
                    Vm = V[s, k, : p.T, :][:, list(sub)].T
                    if not F.nonsingular(Vm):
                        fail("F1", {"R": list(R), "row": i, "k": k, "servers": list(sub),
                                    "matrix": Vm.tolist()})

    rng = np.random.default_rng(seed)
    n_trials = exhaustive_trials + 1
    n23 = {"F2": 0, "F3": 0}
    for R in nonempty_subsets(p.lam):
        r = len(R)
        answers = np.empty((n_trials, p.N, p.K), dtype=np.int64)
        truth = np.empty((n_trials, r, p.K), dtype=np.int64)
        for trial in range(n_trials):
            files = F.random(rng, (p.M, p.lam, p.K))
            if trial == 0:
                files[:] = 0
            theta = int(rng.integers(p.M))
            stored = framework_encode(basis, files, F.random(rng, (p.M, p.lam, p.X)))
            Q = framework_query(basis, R, theta, F.random(rng, (p.M, r, p.K, p.T)))
            answers[trial] = framework_answer(stored, Q, R, basis.q)
            truth[trial] = files[theta][list(R)]
        for d in range(r):
            cond = "F2" if d == 0 else "F3"
            need = basis.needed_responses(r, d)
            if comb(p.N, need) * comb(r, d) > ENUMERATION_LIMIT:
                raise EnumerationTooLarge(f"C({p.N},{need}) response subsets")
            for servers in combinations(range(p.N), need):
                for known in combinations(R, d):
                    n23[cond] += 1
                    unknown = tuple(i for i in R if i not in known)
                    kslots = [R.index(i) for i in known]
                    uslots = [R.index(i) for i in unknown]
                    for k in range(p.K):
                        try:
                            G = basis.decode_map(servers, unknown, known, k)
                        except SingularSystem:
                            fail(cond, {"R": list(R), "servers": list(servers),
                                        "known": list(known), "k": k, "reason": "singular"})
                            continue
                        vec = np.concatenate(
                            [answers[:, list(servers), k], truth[:, kslots, k]], axis=1
                        )
                        got = F.matmul(vec, G.T)
                        bad = np.flatnonzero(np.any(got != truth[:, uslots, k], axis=1))
                        if bad.size:
                            fail(cond, {"R": list(R), "servers": list(servers),
                                        "known": list(known), "k": k, "trial": int(bad[0])})
    cert.checked = {"F0": n0, "F1": n1, **n23, "trials": n_trials}
    return cert
