"""System sizing and the evaluation points used by every coding back-end.

``derive_system`` turns (N, K, X, T, M) into the layer structure: the number
of layers ``lam``, the row count ``P`` of every file, the per-layer column
counts ``gamma`` and the cumulative response thresholds ``thresholds``.

``select_parameters`` picks the evaluation points. Servers evaluate at
``alphas[n] = n``; row ``i`` of the framework interpolates data at the first
``K`` entries of ``betas[i]`` and noise at the remaining ``X`` entries,
which reuse ``alphas[0..X)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import FieldTooSmall, InsufficientServers
from .field import PrimeField, smallest_prime_at_least


@dataclass(frozen=True)
class SystemParams:
    N: int
    K: int
    X: int
    T: int
    M: int = 1
    lam: int = field(init=False)
    P: int = field(init=False)
    gamma: tuple[int, ...] = field(init=False)
    thresholds: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        for name in ("N", "K", "X", "T", "M"):
            if not isinstance(getattr(self, name), (int, np.integer)):
                raise TypeError(f"{name} must be an integer")
        if self.K < 1 or self.T < 1 or self.M < 1 or self.X < 0:
            raise ValueError("need K >= 1, T >= 1, M >= 1 and X >= 0")
        lam = self.N - (self.K + self.X + self.T - 1)
        if lam < 1:
            raise InsufficientServers(
                f"N <= K+X+T-1 (N={self.N}, K+X+T-1={self.K + self.X + self.T - 1})"
            )
        P = lam * math.lcm(*range(1, lam + 1))
        gamma = [P // lam] + [P // ((lam - h) * (lam - h + 1)) for h in range(1, lam)]
        thresholds = list(np.cumsum(gamma).tolist())
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "gamma", tuple(gamma))
        object.__setattr__(self, "thresholds", tuple(int(f) for f in thresholds))

    @property
    def max_stragglers(self) -> int:
        return self.lam - 1

    def to_dict(self) -> dict:
        return {
            "N": self.N, "K": self.K, "X": self.X, "T": self.T, "M": self.M,
            "lambda": self.lam, "P": self.P,
            "gamma": list(self.gamma), "thresholds": list(self.thresholds),
        }


def derive_system(N: int, K: int, X: int, T: int, M: int = 1) -> SystemParams:
    return SystemParams(N, K, X, T, M)


def required_field_size(params: SystemParams) -> int:
    """Smallest field size for which the canonical point assignment exists."""
    return params.N + max(params.K, params.lam)


@dataclass(frozen=True)
class EncodingParameters:
    """Evaluation points: ``alphas`` (N,) and ``betas`` (lam, K+X) as int residues."""

    field: PrimeField
    alphas: tuple[int, ...]
    betas: tuple[tuple[int, ...], ...]

    @property
    def q(self) -> int:
        return self.field.q

    @property
    def alpha_array(self) -> np.ndarray:
        return np.array(self.alphas, dtype=np.int64)

    @property
    def beta_array(self) -> np.ndarray:
        return np.array(self.betas, dtype=np.int64).reshape(len(self.betas), -1)

    def to_json(self) -> str:
        return json.dumps(
            {"q": self.q, "alphas": list(self.alphas), "betas": [list(r) for r in self.betas]},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> EncodingParameters:
        doc = json.loads(text)
        F = PrimeField(doc["q"])
        return cls(
            F,
            tuple(int(a) % F.q for a in doc["alphas"]),
            tuple(tuple(int(b) % F.q for b in row) for row in doc["betas"]),
        )


def select_parameters(params: SystemParams, q: Optional[int | PrimeField] = None) -> EncodingParameters:
    """Canonical points over GF(q); ``q`` defaults to the smallest usable prime."""
    bound = required_field_size(params)
    if q is None:
        F = smallest_prime_at_least(bound)
    else:
        F = q if isinstance(q, PrimeField) else PrimeField(q)
    if F.q < bound:
        raise FieldTooSmall(f"GF({F.q}) is smaller than the required {bound}")

    N, K, X, lam = params.N, params.K, params.X, params.lam
    alphas = tuple(range(N))
    betas = [[0] * (K + X) for _ in range(lam)]
    if K > lam:
        # K fresh data points for row 0; each later row rotates them by one
        for i in range(lam):
            for k in range(K):
                betas[i][k] = N + (k + i) % K
    else:
        # lam fresh data points down column 0; each later column rotates them by one
        for i in range(lam):
            for k in range(K):
                betas[i][k] = N + (i + k) % lam
    for i in range(lam):
        for j in range(X):
            betas[i][K + j] = alphas[j]
    return EncodingParameters(F, alphas, tuple(tuple(r) for r in betas))


@dataclass(frozen=True)
class ConstraintReport:
    """Outcome of the four distinctness constraints.

    ``violations`` maps a constraint name to the first offending pair of
    indices, or to None when the constraint holds.
    """

    violations: dict

    @property
    def p0(self) -> bool:
        return self.violations["P0"] is None

    @property
    def p1(self) -> bool:
        return self.violations["P1"] is None

    @property
    def p2(self) -> bool:
        return self.violations["P2"] is None

    @property
    def p3(self) -> bool:
        return self.violations["P3"] is None

    @property
    def ok(self) -> bool:
        return all(v is None for v in self.violations.values())

    def to_dict(self) -> dict:
        return {name: {"ok": v is None, "witness": v} for name, v in sorted(self.violations.items())}


def _first_duplicate(values, labels):
    seen = {}
    for value, label in zip(values, labels):
        if value in seen:
            return [seen[value], label]
        seen[value] = label
    return None


def verify_constraints(enc: EncodingParameters, params: SystemParams) -> ConstraintReport:
    N, K, X, lam = params.N, params.K, params.X, params.lam
    betas = enc.beta_array
    if len(enc.alphas) != N or betas.shape != (lam, K + X):
        raise ValueError("encoding parameters do not match the system shape")

    p0 = None
    for i in range(lam):
        p0 = _first_duplicate(betas[i].tolist(), [[i, k] for k in range(K + X)])
        if p0:
            break
    p1 = None
    for k in range(K):
        p1 = _first_duplicate(betas[:, k].tolist(), [[i, k] for i in range(lam)])
        if p1:
            break
    p2 = _first_duplicate(list(enc.alphas), list(range(N)))
    p3 = None
    alpha_index = {}
    for n, a in enumerate(enc.alphas):
        alpha_index.setdefault(a, n)
    for i in range(lam):
        for k in range(K):
            if int(betas[i, k]) in alpha_index:
                p3 = [alpha_index[int(betas[i, k])], [i, k]]
                break
        if p3:
            break
    return ConstraintReport({"P0": p0, "P1": p1, "P2": p2, "P3": p3})
