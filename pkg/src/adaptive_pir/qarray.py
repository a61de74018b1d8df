"""The layered query array.

The array has ``lam`` rows and ``P`` columns split into ``lam`` layers; layer
``h`` has ``gamma[h]`` columns. Each column lists the file rows one
column-query retrieves. Layer 0 covers every row exactly once; deeper layers
re-request rows already covered, so that when ``S`` servers straggle the
rows recovered in layers ``S..h+1`` can stand in for the missing responses in
layer ``h``.

Cells hold either a row index or :data:`STAR` (no request in that slot).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import permutations
from typing import Optional, Union

from .errors import ConditionsViolated
from .params import SystemParams


class _Star:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "*"

    def __reduce__(self):
        return (_Star, ())


STAR = _Star()
Cell = Union[int, _Star]


def _layout(lam: int):
    P = lam * math.lcm(*range(1, lam + 1))
    gamma = [P // lam] + [P // ((lam - h) * (lam - h + 1)) for h in range(1, lam)]
    return P, gamma


@dataclass(frozen=True)
class QueryArray:
    lam: int
    P: int
    gamma: tuple[int, ...]
    cells: tuple[tuple[Cell, ...], ...]

    @property
    def offsets(self) -> tuple[int, ...]:
        """Global index of the first column of each layer."""
        out, acc = [], 0
        for g in self.gamma:
            out.append(acc)
            acc += g
        return tuple(out)

    def locate(self, col: int) -> tuple[int, int]:
        """Global column index -> (layer, column within the layer)."""
        if not 0 <= col < self.P:
            raise IndexError(f"column {col} outside [0, {self.P})")
        for h in reversed(range(self.lam)):
            if col >= self.offsets[h]:
                return h, col - self.offsets[h]
        raise AssertionError("unreachable")

    def global_column(self, h: int, j: int) -> int:
        if not 0 <= j < self.gamma[h]:
            raise IndexError(f"column {j} outside layer {h}")
        return self.offsets[h] + j

    def cell(self, h: int, i: int, j: int) -> Cell:
        return self.cells[i][self.global_column(h, j)]

    def column(self, h: int, j: int) -> tuple[Cell, ...]:
        c = self.global_column(h, j)
        return tuple(row[c] for row in self.cells)

    def subarray(self, h: int) -> list[list[Cell]]:
        lo = self.offsets[h]
        return [list(row[lo:lo + self.gamma[h]]) for row in self.cells]

    def retrieval_set(self, h: int, j: int) -> list[int]:
        return [v for v in self.column(h, j) if v is not STAR]

    def to_json(self) -> str:
        doc = {
            "lambda": self.lam,
            "P": self.P,
            "gamma": list(self.gamma),
            "cells": [["*" if v is STAR else v for v in row] for row in self.cells],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> QueryArray:
        doc = json.loads(text)
        cells = tuple(tuple(STAR if v == "*" else int(v) for v in row) for row in doc["cells"])
        return cls(doc["lambda"], doc["P"], tuple(doc["gamma"]), cells)

    def pretty(self) -> str:
        """One bracketed line per row, layers separated by ``|``."""
        width = max(len(str(v)) for row in self.cells for v in row)
        lines = []
        for row in self.cells:
            blocks = []
            for h, lo in enumerate(self.offsets):
                chunk = row[lo:lo + self.gamma[h]]
                blocks.append(" ".join(str(v).rjust(width) for v in chunk))
            lines.append("[" + " | ".join(blocks) + "]")
        return "\n".join(lines)


def build_query_array(params: Union[SystemParams, int]) -> QueryArray:
    lam = params.lam if isinstance(params, SystemParams) else int(params)
    if lam < 1:
        raise ValueError("lambda must be positive")
    P, gamma = _layout(lam)
    rows: list[list[Cell]] = [[i + j * lam for j in range(gamma[0])] for i in range(lam)]
    for h in range(1, lam):
        blocks = gamma[h] // lam
        layer = [[STAR] * gamma[h] for _ in range(lam)]
        for i in range(lam):
            # values come from row i of the layers already built, taking every
            # lam-th column starting at (i + h - 1) mod lam
            known = rows[i][(i + h - 1) % lam::lam][: (lam - h) * blocks]
            # slots in row i that stay integer: (i + r) mod lam + s*lam for r >= h,
            # filled in ascending column order
            slots = sorted((i + r) % lam + s * lam for r in range(h, lam) for s in range(blocks))
            for value, col in zip(known, slots):
                layer[i][col] = value
        for i in range(lam):
            rows[i].extend(layer[i])
    return QueryArray(lam, P, tuple(gamma), tuple(tuple(r) for r in rows))


@dataclass(frozen=True)
class ConditionReport:
    """Per-condition pass flags with the first failing column, if any."""

    c0: bool
    c1: bool
    c2: bool
    c3: bool
    counterexamples: dict

    @property
    def ok(self) -> bool:
        return self.c0 and self.c1 and self.c2 and self.c3

    def to_dict(self) -> dict:
        return {
            "C0": self.c0, "C1": self.c1, "C2": self.c2, "C3": self.c3,
            "ok": self.ok, "counterexamples": self.counterexamples,
        }


def _has_compensation_set(members: list[int], later_layers: list[set]) -> bool:
    """True when distinct members can be matched to each later layer in turn."""
    need = len(later_layers)
    if need == 0:
        return True
    for choice in permutations(members, need):
        if all(a in layer for a, layer in zip(choice, later_layers)):
            return True
    return False


def verify_conditions(arr: QueryArray) -> ConditionReport:
    lam, P = arr.lam, arr.P
    bad: dict = {}

    if len(arr.cells) != lam or any(len(row) != P for row in arr.cells) or sum(arr.gamma) != P:
        raise ValueError("query array shape is inconsistent")

    c0 = True
    for i, row in enumerate(arr.cells):
        for col, v in enumerate(row):
            if v is STAR:
                continue
            if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < P:
                c0 = False
                bad.setdefault("C0", {"row": i, "column": col, "value": repr(v)})

    c1 = True
    for h in range(lam):
        for j in range(arr.gamma[h]):
            members = arr.retrieval_set(h, j)
            if len(members) != lam - h or len({v % lam for v in members if isinstance(v, int)}) != lam - h:
                c1 = False
                bad.setdefault("C1", {"layer": h, "column": j, "members": [str(v) for v in members]})

    covered = {v for j in range(arr.gamma[0]) for v in arr.retrieval_set(0, j)}
    c2 = covered == set(range(P))
    if not c2:
        missing = sorted(set(range(P)) - covered)
        bad["C2"] = {"missing": missing[:10]}

    layer_union = [
        {v for j in range(arr.gamma[h]) for v in arr.retrieval_set(h, j)} for h in range(lam)
    ]
    c3 = True
    for h in range(lam - 1):
        for j in range(arr.gamma[h]):
            if not _has_compensation_set(arr.retrieval_set(h, j), layer_union[h + 1:]):
                c3 = False
                bad.setdefault("C3", {"layer": h, "column": j})
    return ConditionReport(c0, c1, c2, c3, bad)


@dataclass(frozen=True)
class ColumnSpec:
    """One column-query: which file rows it covers and its compensation rows.

    ``rows`` lists the file rows of the column ordered by residue mod lam, so
    ``residues[s] == rows[s] % lam`` is increasing. ``compensation[r - h - 1]``
    is a row of this column that is also requested somewhere in layer ``r``.
    """

    h: int
    j: int
    col: int
    rows: tuple[int, ...]
    residues: tuple[int, ...]
    compensation: tuple[int, ...]


def column_specs(arr: QueryArray, report: Optional[ConditionReport] = None) -> list[ColumnSpec]:
    report = report or verify_conditions(arr)
    if not report.ok:
        raise ConditionsViolated(f"query array fails its conditions: {report.counterexamples}")
    lam = arr.lam
    layer_union = [
        {v for j in range(arr.gamma[h]) for v in arr.retrieval_set(h, j)} for h in range(lam)
    ]
    specs = []
    for h in range(lam):
        for j in range(arr.gamma[h]):
            rows = tuple(sorted(arr.retrieval_set(h, j), key=lambda v: v % lam))
            comp = []
            for r in range(h + 1, lam):
                a = arr.cell(h, (j - r + 1) % lam, j)
                if a is STAR or a not in layer_union[r]:
                    raise ConditionsViolated(
                        f"no compensation row for layer {h} column {j} toward layer {r}"
                    )
                comp.append(a)
            specs.append(
                ColumnSpec(
                    h=h,
                    j=j,
                    col=arr.global_column(h, j),
                    rows=rows,
                    residues=tuple(v % lam for v in rows),
                    compensation=tuple(comp),
                )
            )
    return specs
