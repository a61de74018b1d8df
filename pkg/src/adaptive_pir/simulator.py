"""Discrete-tick sessions against in-process servers.

On every tick each server that is not straggling sends its next answer, in
server-index order. Stragglers send nothing on that tick. A server that
leaves the straggler set resumes with its next unsent answer. The decoder
sees the answers in the order they are sent. A session ends as soon as the
decoder returns the file.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DecodeExhausted
from .framework import BasisSet, FrameworkKind, make_basis
from .params import SystemParams, select_parameters
from .protocol import (
    AdaptiveDecoder,
    Dataset,
    encode_storage,
    make_queries,
    query_array_for,
    rate_and_cost,
    server_answer,
)
from .wire import digest, encode_response


def fmt_fraction(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class StragglerModel:
    """Which servers stay silent on a given tick.

    kind ``none``: nobody. ``fixed_set``: ``servers`` on every tick.
    ``fixed_count``: a fresh uniform ``count``-subset every ``reshuffle_every``
    ticks. ``adversarial``: ``schedule[tick % len(schedule)]``.
    """

    kind: str = "none"
    servers: tuple[int, ...] = ()
    count: int = 0
    reshuffle_every: int = 1
    schedule: tuple[tuple[int, ...], ...] = ()
    seed: int = 0

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def fixed_set(cls, servers):
        return cls("fixed_set", servers=tuple(sorted(set(servers))))

    @classmethod
    def fixed_count(cls, count: int, reshuffle_every: int, seed: int = 0):
        return cls("fixed_count", count=count, reshuffle_every=reshuffle_every, seed=seed)

    @classmethod
    def adversarial(cls, schedule):
        return cls("adversarial", schedule=tuple(tuple(sorted(set(s))) for s in schedule))

    def validate(self, params: SystemParams):
        # sizes up to lam are accepted so starvation can be exercised on purpose
        if self.kind not in ("none", "fixed_set", "fixed_count", "adversarial"):
            raise ConfigError(f"unknown straggler model {self.kind!r}")
        if any(not 0 <= n < params.N for n in self.servers):
            raise ConfigError(f"straggler ids must lie in [0, {params.N})")
        if len(self.servers) > params.lam:
            raise ConfigError(f"at most lambda={params.lam} permanent stragglers")
        if self.kind == "fixed_count":
            if not 0 <= self.count <= params.lam:
                raise ConfigError(f"count must lie in [0, {params.lam}]")
            if self.reshuffle_every < 1:
                raise ConfigError("reshuffle_every must be at least 1")
        if self.kind == "adversarial":
            if not self.schedule:
                raise ConfigError("adversarial schedule is empty")
            if any(not 0 <= n < params.N for s in self.schedule for n in s):
                raise ConfigError(f"schedule ids must lie in [0, {params.N})")

    @property
    def permanent(self) -> bool:
        return self.kind in ("none", "fixed_set")

    def slow_sets(self, N: int):
        """Infinite iterator of the silent set for ticks 0, 1, 2, ..."""
        rng = np.random.default_rng(self.seed)
        tick = 0
        current: frozenset = frozenset()
        while True:
            if self.kind == "none":
                yield frozenset()
            elif self.kind == "fixed_set":
                yield frozenset(self.servers)
            elif self.kind == "fixed_count":
                if tick % self.reshuffle_every == 0:
                    current = frozenset(rng.choice(N, self.count, replace=False).tolist())
                yield current
            else:
                yield frozenset(self.schedule[tick % len(self.schedule)])
            tick += 1

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "fixed_set":
            out["servers"] = list(self.servers)
        elif self.kind == "fixed_count":
            out.update(count=self.count, reshuffle_every=self.reshuffle_every, seed=self.seed)
        elif self.kind == "adversarial":
            out["schedule"] = [list(s) for s in self.schedule]
        return out


@dataclass(frozen=True)
class SessionConfig:
    params: SystemParams
    framework: FrameworkKind = FrameworkKind.LAGRANGE
    theta: int = 0
    file_seed: int = 0
    noise_seed: int = 1
    stragglers: StragglerModel = StragglerModel()
    tick_time: float = 1.0
    q: Optional[int] = None
    dataset: Optional[Dataset] = None
    max_ticks: Optional[int] = None


@dataclass
class SessionReport:
    params: dict
    framework: str
    stragglers: dict
    decode_ok: bool
    committed_S: Optional[int]
    consumed: list
    received: list
    downloaded_symbols: int
    expected_cost: Optional[Fraction]
    rate: Optional[Fraction]
    ticks: int
    sim_time: float
    wall_time: float
    trace: list
    column_counts: list

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "params": self.params,
            "framework": self.framework,
            "stragglers": self.stragglers,
            "decode_ok": self.decode_ok,
            "committed_S": self.committed_S,
            "consumed_per_server": self.consumed,
            "received_per_server": self.received,
            "downloaded_symbols": self.downloaded_symbols,
            "expected_cost": None if self.expected_cost is None else fmt_fraction(self.expected_cost),
            "rate": None if self.rate is None else fmt_fraction(self.rate),
            "rate_decimal": None if self.rate is None else f"{float(self.rate):.6f}",
            "ticks": self.ticks,
            "sim_time": self.sim_time,
            "straggler_trace": self.trace,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


class _Session:
    """Shared setup: basis, shares, queries and every server's answers."""

    def __init__(self, cfg: SessionConfig, basis: Optional[BasisSet] = None):
        p = cfg.params
        cfg.stragglers.validate(p)
        if not 0 <= cfg.theta < p.M:
            raise ConfigError(f"theta={cfg.theta} outside [0, {p.M})")
        if basis is None:
            basis = make_basis(cfg.framework, p, select_parameters(p, cfg.q))
        self.basis = basis
        self.arr = query_array_for(p)
        data = cfg.dataset or Dataset.random(p, basis.field, cfg.file_seed)
        self.data = data
        shares = encode_storage(basis, data, cfg.noise_seed)
        queries = make_queries(basis, self.arr, cfg.theta, cfg.noise_seed)
        self.answers = [server_answer(shares[n], queries[n]) for n in range(p.N)]


def run_session(cfg: SessionConfig, basis: Optional[BasisSet] = None,
                transcript: Optional[io.TextIOBase] = None) -> SessionReport:
    """Run one session; raises DecodeExhausted if the stream dries up first."""
    start = time.perf_counter()
    p = cfg.params
    sess = _Session(cfg, basis)
    dec = AdaptiveDecoder(sess.basis, sess.arr, cfg.theta)
    q = sess.basis.q
    sent = [0] * p.N
    trace = []
    max_ticks = cfg.max_ticks or (p.P * (len(cfg.stragglers.schedule) + 1) * 4 + 64)
    ticks = 0
    slow_iter = cfg.stragglers.slow_sets(p.N)
    while dec.result is None and ticks < max_ticks:
        slow = next(slow_iter)
        trace.append(sorted(slow))
        any_sent = False
        for n in range(p.N):
            if n in slow or sent[n] >= p.P:
                continue
            resp = sess.answers[n][sent[n]]
            sent[n] += 1
            any_sent = True
            if transcript is not None:
                transcript.write(json.dumps({
                    "event": "response", "tick": ticks, "server": n, "column": resp.col,
                    "digest": digest(encode_response(resp, q)),
                }) + "\n")
            dec.feed(n, resp)
            if dec.result is not None:
                break
        ticks += 1
        if all(s >= p.P for s in sent):
            break
        if not any_sent and cfg.stragglers.permanent:
            break

    ok = dec.result is not None and np.array_equal(dec.result, sess.data.files[cfg.theta])
    S = dec.committed_S
    cost = rate = None
    if S is not None:
        cost, rate = rate_and_cost(p, S)
    report = SessionReport(
        params=p.to_dict(),
        framework=FrameworkKind(cfg.framework).value,
        stragglers=cfg.stragglers.to_dict(),
        decode_ok=bool(ok),
        committed_S=S,
        consumed=list(dec.consumed),
        received=list(dec.progress),
        downloaded_symbols=sum(dec.consumed) * p.K,
        expected_cost=cost,
        rate=rate,
        ticks=ticks,
        sim_time=ticks * cfg.tick_time,
        wall_time=time.perf_counter() - start,
        trace=trace,
        column_counts=list(dec.column_counts),
    )
    if transcript is not None:
        transcript.write(json.dumps({"event": "end", "tick": ticks, "decode_ok": report.decode_ok,
                                     "committed_S": S}) + "\n")
    if dec.result is None:
        raise DecodeExhausted(f"no threshold met after {ticks} ticks", report)
    return report


@dataclass
class RateRow:
    S: int
    trials: int
    successes: int
    measured_rate: Optional[Fraction]
    formula_rate: Fraction
    cost: Fraction
    threshold: int

    @property
    def success_fraction(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


@dataclass
class RateTable:
    params: SystemParams
    framework: str
    rows: list

    CSV_FIELDS = ("S", "measured_rate", "measured_rate_decimal", "formula_rate",
                  "formula_rate_decimal", "download_cost", "responses_per_server",
                  "success_fraction", "trials")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for row in self.rows:
            m = row.measured_rate
            w.writerow([
                row.S,
                "" if m is None else fmt_fraction(m),
                "" if m is None else f"{float(m):.6f}",
                fmt_fraction(row.formula_rate),
                f"{float(row.formula_rate):.6f}",
                fmt_fraction(row.cost),
                row.threshold,
                f"{row.success_fraction:.6f}",
                row.trials,
            ])
        return buf.getvalue()


def sweep_rates(params: SystemParams, framework=FrameworkKind.LAGRANGE,
                S_range: Optional[Sequence[int]] = None, trials: int = 100,
                seed: int = 0, q: Optional[int] = None) -> RateTable:
    """Fixed straggler sets of each size; the measured rate is the desired
    symbols divided by the symbols the decoder consumed."""
    S_range = list(range(params.lam)) if S_range is None else list(S_range)
    basis = make_basis(framework, params, select_parameters(params, q))
    rng = np.random.default_rng(seed)
    rows = []
    for S in S_range:
        cost, formula = rate_and_cost(params, S)
        ok, rates = 0, set()
        for _ in range(trials):
            stragglers = rng.choice(params.N, S, replace=False).tolist()
            cfg = SessionConfig(
                params, framework, theta=int(rng.integers(params.M)),
                file_seed=int(rng.integers(2**31)), noise_seed=int(rng.integers(2**31)),
                stragglers=StragglerModel.fixed_set(stragglers), q=q,
            )
            rep = run_session(cfg, basis)
            measured = Fraction(params.P * params.K, rep.downloaded_symbols)
            rates.add(measured)
            ok += rep.decode_ok and rep.committed_S == S
        measured = rates.pop() if len(rates) == 1 else None
        rows.append(RateRow(S, trials, ok, measured, formula, cost, params.thresholds[S]))
    return RateTable(params, FrameworkKind(framework).value, rows)


@dataclass
class ChurnRow:
    reshuffle_every: int
    stragglers: int
    trials: int
    decode_ok: int
    exhausted: int
    committed: dict
    min_column_margin: Optional[int]

    @property
    def ok_fraction(self) -> float:
        return self.decode_ok / self.trials if self.trials else 0.0


@dataclass
class ChurnReport:
    params: SystemParams
    framework: str
    rows: list

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "framework": self.framework,
            "rows": [
                {
                    "reshuffle_every": r.reshuffle_every,
                    "stragglers": r.stragglers,
                    "trials": r.trials,
                    "decode_ok_fraction": round(r.ok_fraction, 6),
                    "exhausted": r.exhausted,
                    "committed_S": {str(k): v for k, v in sorted(r.committed.items())},
                    "min_column_margin": r.min_column_margin,
                }
                for r in self.rows
            ],
        }


def stress_identity_churn(params: SystemParams, framework=FrameworkKind.LAGRANGE,
                          reshuffle_grid: Sequence[int] = (1, 3, 10), trials: int = 100,
                          seed: int = 0, stragglers: Optional[int] = None,
                          q: Optional[int] = None) -> ChurnReport:
    """FixedCount sessions with the straggler identities reshuffled.

    ``min_column_margin`` is the smallest surplus, over all decoded columns,
    of servers that delivered the column beyond the ``N - S`` the decoder
    used; it is never negative when decoding succeeds.
    """
    S = params.lam - 1 if stragglers is None else stragglers
    basis = make_basis(framework, params, select_parameters(params, q))
    rng = np.random.default_rng(seed)
    rows = []
    for every in reshuffle_grid:
        if every < 1:
            raise ConfigError("reshuffle intervals must be at least 1")
        ok = exhausted = 0
        committed: dict = {}
        margin = None
        for _ in range(trials):
            cfg = SessionConfig(
                params, framework, theta=int(rng.integers(params.M)),
                file_seed=int(rng.integers(2**31)), noise_seed=int(rng.integers(2**31)),
                stragglers=StragglerModel.fixed_count(S, every, int(rng.integers(2**31))), q=q,
            )
            try:
                rep = run_session(cfg, basis)
            except DecodeExhausted:
                exhausted += 1
                continue
            ok += rep.decode_ok
            committed[rep.committed_S] = committed.get(rep.committed_S, 0) + 1
            used = params.N - rep.committed_S
            m = min(rep.column_counts) - used
            margin = m if margin is None else min(margin, m)
        rows.append(ChurnRow(every, S, trials, ok, exhausted, committed, margin))
    return ChurnReport(params, FrameworkKind(framework).value, rows)
