"""Secrecy and privacy audits.

Each audit has two halves. The structural half checks that the relevant
noise matrices are nonsingular for every server subset of the colluding size.
That is exactly what makes the colluders' view uniform. The empirical half
samples fresh noise many times and runs chi-square tests on the colluders'
view. Many coordinates are tested at once, so the smallest p-value is
Bonferroni-adjusted before it is compared with ``alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product
from math import comb
from typing import Optional

import numpy as np
from scipy import stats

from .errors import EnumerationTooLarge
from .framework import ENUMERATION_LIMIT, BasisSet
from .params import SystemParams
from .protocol import query_values, specs_for, storage_values
from .qarray import QueryArray


@dataclass
class AuditReport:
    kind: str
    matrices_checked: int = 0
    matrices_ok: bool = True
    singular: list = field(default_factory=list)
    draws: int = 0
    servers: list = field(default_factory=list)
    tests: int = 0
    min_p: Optional[float] = None
    adjusted_p: Optional[float] = None
    alpha: float = 0.01
    exact_ok: Optional[bool] = None
    notes: list = field(default_factory=list)

    @property
    def empirical_ok(self) -> bool:
        return self.adjusted_p is None or self.adjusted_p > self.alpha

    @property
    def passed(self) -> bool:
        return self.matrices_ok and self.empirical_ok and self.exact_ok is not False

    def to_dict(self) -> dict:
        def rnd(v):
            return None if v is None else round(float(v), 6)

        return {
            "kind": self.kind,
            "matrices_checked": self.matrices_checked,
            "matrices_ok": self.matrices_ok,
            "singular": self.singular[:5],
            "draws": self.draws,
            "servers": self.servers,
            "tests": self.tests,
            "min_p": rnd(self.min_p),
            "adjusted_p": rnd(self.adjusted_p),
            "alpha": self.alpha,
            "exact_ok": self.exact_ok,
            "passed": self.passed,
            "notes": self.notes,
        }


def _subsets(N: int, size: int, mode: str, rng, sample: int):
    if comb(N, size) > ENUMERATION_LIMIT and mode == "all":
        raise EnumerationTooLarge(f"C({N},{size}) exceeds {ENUMERATION_LIMIT}")
    if mode == "all" or comb(N, size) <= sample:
        return list(combinations(range(N), size))
    if mode != "sample":
        raise ValueError(f"unknown subset mode {mode!r}")
    seen = set()
    while len(seen) < sample:
        seen.add(tuple(sorted(rng.choice(N, size, replace=False).tolist())))
    return sorted(seen)


def _joint_index(view: np.ndarray, q: int) -> np.ndarray:
    """Collapse the last axis (one symbol per colluding server) into one cell id."""
    weights = q ** np.arange(view.shape[-1], dtype=np.int64)
    return (view * weights).sum(axis=-1)


def _view_width(q: int, size: int, draws: int) -> int:
    """How many colluders' symbols fit a chi-square table with >= 5 expected per cell."""
    width = size
    while width > 1 and q**width * 5 > draws:
        width -= 1
    return width


def _view_servers(params: SystemParams, size: int) -> list[int]:
    # the highest-indexed servers; low indices coincide with interpolation points
    return list(range(params.N - size, params.N))


def check_secrecy(basis: BasisSet, params: Optional[SystemParams] = None, X_subsets: str = "all",
                  draws: int = 10_000, seed: int = 0, alpha: float = 0.01,
                  sample: int = 200, chunk: int = 2000) -> AuditReport:
    p, F = basis.params, basis.field
    if params is not None and params != p:
        raise ValueError("params do not match the basis")
    rep = AuditReport("secrecy", alpha=alpha)
    if p.X == 0:
        rep.notes.append("X=0: nothing to hide")
        return rep
    rng = np.random.default_rng(seed)
    S = basis.storage_table()
    for sub in _subsets(p.N, p.X, X_subsets, rng, sample):
        for i in range(p.lam):
            rep.matrices_checked += 1
            if not F.nonsingular(S[i][list(sub), p.K:]):
                rep.matrices_ok = False
                rep.singular.append({"row": i, "servers": list(sub)})
    if draws <= 0:
        return rep

    width = _view_width(F.q, p.X, draws)
    servers = _view_servers(p, p.X)[:width]
    if width < p.X:
        rep.notes.append(f"joint view limited to {width} servers for table size")
    files = F.random(rng, (p.M, p.P, p.K))
    cells = F.q**width
    counts = np.zeros((p.M * p.P, cells), dtype=np.int64)
    done = 0
    while done < draws:
        n = min(chunk, draws - done)
        noise = F.random(rng, (n, p.M, p.P, p.X))
        view = storage_values(basis, files, noise, servers)  # (n, w, M, P)
        idx = _joint_index(np.moveaxis(view, 1, -1).reshape(n, p.M * p.P, width), F.q)
        for coord in range(p.M * p.P):
            counts[coord] += np.bincount(idx[:, coord], minlength=cells)
        done += n
    pvals = [stats.chisquare(row).pvalue for row in counts]
    rep.draws, rep.servers, rep.tests = draws, servers, len(pvals)
    rep.min_p = float(min(pvals))
    rep.adjusted_p = min(1.0, rep.min_p * len(pvals))
    return rep


def exact_privacy_check(basis: BasisSet, arr: QueryArray, limit: int = 10**5) -> bool:
    """Compare, by full enumeration of one column's noise, the distribution of
    every T-subset view of a query coordinate for the desired file and for
    any other file. Coordinates use independent noise, so per-coordinate
    equality gives equality of the joint view."""
    p, q = basis.params, basis.q
    if q**p.T > limit:
        raise EnumerationTooLarge(f"q^T = {q ** p.T} noise vectors exceeds {limit}")
    zs = np.array(list(product(range(q), repeat=p.T)), dtype=np.int64)
    for residues in {spec.residues for spec in specs_for(arr)}:
        V = basis.query_table(residues)
        for s in range(len(residues)):
            for k in range(p.K):
                for sub in combinations(range(p.N), p.T):
                    noise_part = basis.field.matmul(zs, V[s, k, : p.T][:, list(sub)])
                    desired = (noise_part + V[s, k, p.T][list(sub)]) % q
                    a = np.sort(_joint_index(noise_part, q))
                    b = np.sort(_joint_index(desired, q))
                    if not np.array_equal(a, b):
                        return False
    return True


def check_privacy(basis: BasisSet, arr: QueryArray, params: Optional[SystemParams] = None,
                  T_subsets: str = "all", draws: int = 10_000, seed: int = 0,
                  alpha: float = 0.01, sample: int = 200, chunk: int = 1000,
                  exact: bool = False) -> AuditReport:
    p, F = basis.params, basis.field
    if params is not None and params != p:
        raise ValueError("params do not match the basis")
    rep = AuditReport("privacy", alpha=alpha)
    rng = np.random.default_rng(seed)
    specs = specs_for(arr)
    subsets = _subsets(p.N, p.T, T_subsets, rng, sample)
    for residues in sorted({spec.residues for spec in specs}):
        V = basis.query_table(residues)
        for s, i in enumerate(residues):
            for k in range(p.K):
                for sub in subsets:
                    rep.matrices_checked += 1
                    if not F.nonsingular(V[s, k, : p.T][:, list(sub)]):
                        rep.matrices_ok = False
                        rep.singular.append({"R": list(residues), "row": i, "k": k, "servers": list(sub)})
    if exact:
        rep.exact_ok = exact_privacy_check(basis, arr)
    if draws <= 0:
        return rep
    if p.M < 2:
        rep.notes.append("M=1: a single file, no index to hide")
        return rep

    width = _view_width(F.q, p.T, draws)
    servers = _view_servers(p, p.T)[:width]
    if width < p.T:
        rep.notes.append(f"joint view limited to {width} servers for table size")
    cells = F.q**width
    coords = [(c, s) for c, spec in enumerate(specs) for s in range(len(spec.rows))]
    # counts[theta, coordinate(c, s, m, k), cell]
    counts = np.zeros((2, len(coords) * p.M * p.K, cells), dtype=np.int64)
    cidx = np.array([c for c, _ in coords])
    sidx = np.array([s for _, s in coords])
    for theta in (0, 1):
        done = 0
        while done < draws:
            n = min(chunk, draws - done)
            noise = F.random(rng, (n, p.P, p.M, p.lam, p.K, p.T))
            view = query_values(basis, specs, theta, noise, servers)  # (n, w, P, M, lam, K)
            view = view[:, :, cidx, :, sidx, :]  # (coords, n, w, M, K)
            view = np.moveaxis(view, 2, -1).transpose(1, 0, 2, 3, 4)  # (n, coords, M, K, w)
            idx = _joint_index(view.reshape(n, -1, width), F.q)
            for col in range(idx.shape[1]):
                counts[theta, col] += np.bincount(idx[:, col], minlength=cells)
            done += n
    pvals = []
    for col in range(counts.shape[1]):
        table = counts[:, col]
        table = table[:, table.sum(axis=0) > 0]
        pvals.append(stats.chi2_contingency(table, correction=False).pvalue)
    rep.draws, rep.servers, rep.tests = draws, servers, len(pvals)
    rep.min_p = float(min(pvals))
    rep.adjusted_p = min(1.0, rep.min_p * len(pvals))
    return rep
