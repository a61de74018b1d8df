"""Command-line entry point.

Exit codes: 0 when every check passes, 1 when a check fails (the report is
still printed), 2 for usage or configuration errors. ``--seed`` defaults to
``$ADAPTIVE_PIR_SEED`` and then to 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema

from .audit import check_privacy, check_secrecy
from .errors import DecodeExhausted, PIRError
from .field import PrimeField
from .framework import FrameworkKind, certify_framework, make_basis
from .params import SystemParams, required_field_size, select_parameters, verify_constraints
from .protocol import Dataset, rate_and_cost
from .qarray import build_query_array, verify_conditions
from .simulator import (
    SessionConfig,
    StragglerModel,
    fmt_fraction,
    run_session,
    sweep_rates,
)

SCHEMA_ID = "adaptive-pir/session/v1"

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema", "params"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "params": {
            "type": "object",
            "required": ["N", "K", "X", "T"],
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "K": {"type": "integer", "minimum": 1},
                "X": {"type": "integer", "minimum": 0},
                "T": {"type": "integer", "minimum": 1},
                "M": {"type": "integer", "minimum": 1},
            },
        },
        "framework": {"enum": [k.value for k in FrameworkKind]},
        "q": {"type": ["integer", "null"], "minimum": 2},
        "theta": {"type": "integer", "minimum": 0},
        "file_seed": {"type": "integer", "minimum": 0},
        "noise_seed": {"type": "integer", "minimum": 0},
        "stragglers": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["none", "fixed_set", "fixed_count", "adversarial"]},
                "servers": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "count": {"type": "integer", "minimum": 0},
                "reshuffle_every": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "schedule": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                },
            },
        },
        "tick_time": {"type": "number", "exclusiveMinimum": 0},
        "max_ticks": {"type": "integer", "minimum": 1},
        "dataset": {"type": "string"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "report": {"type": "string"},
                "transcript": {"type": "string"},
            },
        },
        "verbosity": {"type": "integer", "minimum": 0},
    },
}


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get("ADAPTIVE_PIR_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"ADAPTIVE_PIR_SEED={raw!r} is not an integer")


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text + ("" if text.endswith("\n") else "\n"))
    sys.stdout.write(text + ("" if text.endswith("\n") else "\n"))


def _params(args) -> SystemParams:
    return SystemParams(args.N, args.K, args.X, args.T, args.M)


def _add_system(sp, with_framework=True):
    sp.add_argument("-N", type=int, required=True, help="number of servers")
    sp.add_argument("-K", type=int, required=True, help="storage code dimension")
    sp.add_argument("-X", type=int, required=True, help="colluding servers that learn nothing about files")
    sp.add_argument("-T", type=int, required=True, help="colluding servers that learn nothing about the index")
    sp.add_argument("-M", type=int, default=1, help="number of files")
    sp.add_argument("--q", type=int, default=None, help="prime field size (default: smallest valid)")
    if with_framework:
        sp.add_argument("--framework", choices=[k.value for k in FrameworkKind], default="lagrange")
    sp.add_argument("--out", default=None, help="also write the output to this file")


def cmd_params(args) -> int:
    p = _params(args)
    enc = select_parameters(p, args.q)
    report = verify_constraints(enc, p)
    doc = {
        **p.to_dict(),
        "required_field_size": required_field_size(p),
        "q": enc.q,
        "alphas": list(enc.alphas),
        "betas": [list(r) for r in enc.betas],
        "constraints": report.to_dict(),
        "rates": {
            str(S): {"rate": fmt_fraction(R), "rate_decimal": f"{float(R):.6f}", "download_cost": fmt_fraction(D)}
            for S in range(p.lam)
            for D, R in [rate_and_cost(p, S)]
        },
    }
    if args.format == "json":
        _emit(_dump(doc), args.out)
    else:
        lines = [
            f"N={p.N} K={p.K} X={p.X} T={p.T} M={p.M}",
            f"lambda={p.lam} P={p.P}",
            "gamma=" + ",".join(map(str, p.gamma)),
            "thresholds=" + ",".join(map(str, p.thresholds)),
            f"required_field_size={required_field_size(p)} q={enc.q}",
            "constraints=" + ("ok" if report.ok else "FAILED"),
        ]
        for S in range(p.lam):
            D, R = rate_and_cost(p, S)
            lines.append(f"S={S} rate={fmt_fraction(R)} ({float(R):.6f}) download_cost={fmt_fraction(D)}")
        _emit("\n".join(lines), args.out)
    return 0 if report.ok else 1


def cmd_qarray(args) -> int:
    if args.lam is not None:
        lam = args.lam
    elif None not in (args.N, args.K, args.X, args.T):
        lam = SystemParams(args.N, args.K, args.X, args.T).lam
    else:
        raise UsageError("give --lambda or all of -N -K -X -T")
    if lam < 1:
        raise UsageError("lambda must be positive")
    arr = build_query_array(lam)
    report = verify_conditions(arr) if args.verify else None
    if args.format == "json":
        doc = json.loads(arr.to_json())
        if report is not None:
            doc["conditions"] = report.to_dict()
        text = _dump(doc)
    else:
        text = arr.pretty()
        if report is not None:
            flags = " ".join(f"{c}={'pass' if ok else 'FAIL'}" for c, ok in
                             (("C0", report.c0), ("C1", report.c1), ("C2", report.c2), ("C3", report.c3)))
            text += "\n" + flags
    _emit(text, args.out)
    return 0 if report is None or report.ok else 1


def cmd_certify(args) -> int:
    p = _params(args)
    basis = make_basis(args.framework, p, select_parameters(p, args.q))
    cert = certify_framework(basis, args.trials, seed=args.seed)
    _emit(_dump(cert.to_dict()), args.out)
    return 0 if cert.ok else 1


def load_config(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise UsageError(f"config schema error at {where}: {exc.message}")
    return doc


def session_from_config(doc: dict, base: Path) -> SessionConfig:
    pd = doc["params"]
    p = SystemParams(pd["N"], pd["K"], pd["X"], pd["T"], pd.get("M", 1))
    st = doc.get("stragglers", {"kind": "none"})
    kind = st["kind"]
    if kind == "none":
        model = StragglerModel.none()
    elif kind == "fixed_set":
        model = StragglerModel.fixed_set(st.get("servers", []))
    elif kind == "fixed_count":
        model = StragglerModel.fixed_count(st.get("count", 0), st.get("reshuffle_every", 1), st.get("seed", 0))
    else:
        model = StragglerModel.adversarial(st.get("schedule", []))
    q = doc.get("q")
    dataset = None
    if "dataset" in doc:
        path = base / doc["dataset"]
        text = path.read_text()
        if path.suffix == ".csv":
            F = PrimeField(q) if q else select_parameters(p).field
            dataset = Dataset.from_csv(text, F, p.M)
        else:
            dataset = Dataset.from_json(text)
        if q is None:
            q = dataset.field.q
    return SessionConfig(
        params=p,
        framework=FrameworkKind(doc.get("framework", "lagrange")),
        theta=doc.get("theta", 0),
        file_seed=doc.get("file_seed", 0),
        noise_seed=doc.get("noise_seed", 1),
        stragglers=model,
        tick_time=float(doc.get("tick_time", 1.0)),
        q=q,
        dataset=dataset,
        max_ticks=doc.get("max_ticks"),
    )


def cmd_simulate(args) -> int:
    doc = load_config(args.config)
    cfg = session_from_config(doc, Path(args.config).resolve().parent)
    outputs = doc.get("output", {})
    transcript_path = args.transcript or outputs.get("transcript")
    report_path = args.out or outputs.get("report")
    handle = open(transcript_path, "w") if transcript_path else None
    try:
        report = run_session(cfg, transcript=handle)
        code = 0 if report.decode_ok else 1
    except DecodeExhausted as exc:
        report = exc.report
        code = 1
    finally:
        if handle:
            handle.close()
    _emit(_dump(report.to_dict(timing=args.timing)), report_path)
    return code


def cmd_rates(args) -> int:
    p = _params(args)
    S_range = None
    if args.S:
        S_range = [int(s) for s in args.S.split(",")]
        if any(not 0 <= s < p.lam for s in S_range):
            raise UsageError(f"S values must lie in [0, {p.lam})")
    table = sweep_rates(p, args.framework, S_range, args.trials, args.seed, args.q)
    _emit(table.to_csv(), args.out)
    ok = all(r.success_fraction == 1.0 and r.measured_rate == r.formula_rate for r in table.rows)
    return 0 if ok else 1


def cmd_audit(args) -> int:
    p = _params(args)
    basis = make_basis(args.framework, p, select_parameters(p, args.q))
    reports = {}
    if args.mode in ("secrecy", "both"):
        reports["secrecy"] = check_secrecy(basis, p, args.subsets, draws=args.draws, seed=args.seed)
    if args.mode in ("privacy", "both"):
        arr = build_query_array(p.lam)
        reports["privacy"] = check_privacy(basis, arr, p, args.subsets, draws=args.draws,
                                           seed=args.seed, exact=args.exact)
    doc = {name: rep.to_dict() for name, rep in reports.items()}
    doc["passed"] = all(rep.passed for rep in reports.values())
    _emit(_dump(doc), args.out)
    return 0 if doc["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-pir", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("params", help="derive system sizes and evaluation points")
    _add_system(sp, with_framework=False)
    sp.add_argument("--format", choices=["text", "json"], default="text")
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("qarray", help="print the query array")
    sp.add_argument("--lambda", dest="lam", type=int, default=None)
    for flag in ("-N", "-K", "-X", "-T"):
        sp.add_argument(flag, type=int, default=None)
    sp.add_argument("--verify", action="store_true", help="check the array conditions")
    sp.add_argument("--format", choices=["pretty", "json"], default="pretty")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_qarray)

    sp = sub.add_parser("certify", help="exhaustively certify a coding back-end")
    _add_system(sp)
    sp.add_argument("--trials", type=int, default=5, help="random files per subset besides the zero file")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("simulate", help="run one session from a JSON config")
    sp.add_argument("config")
    sp.add_argument("--out", default=None, help="write the report here")
    sp.add_argument("--transcript", default=None, help="write JSON-lines events here")
    sp.add_argument("--timing", action="store_true", help="include wall-clock time (not reproducible)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("rates", help="retrieval rate per straggler count, as CSV")
    _add_system(sp)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--S", default=None, help="comma-separated straggler counts (default: all)")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("audit", help="secrecy and privacy audits")
    _add_system(sp)
    sp.add_argument("--mode", choices=["secrecy", "privacy", "both"], default="both")
    sp.add_argument("--subsets", choices=["all", "sample"], default="all")
    sp.add_argument("--draws", type=int, default=10_000)
    sp.add_argument("--exact", action="store_true", help="also enumerate one column's noise exactly")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if getattr(args, "seed", "absent") is None:
            args.seed = default_seed()
        return args.func(args)
    except (UsageError, PIRError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
