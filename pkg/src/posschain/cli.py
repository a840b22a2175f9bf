"""Command-line front end: ingest -> fit -> compare -> shots / simulate.

Commands are deterministic given their inputs and seed; every run writes a
manifest listing each output file with its SHA-256 digest so reruns can be
verified byte-for-byte. Exit codes: 0 ok, 2 parse failure, 3 data failure,
4 usage, 5 invalid chain spec.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .classical import fit_nbd, fit_pareto, fit_poisson
from .errors import (
    AbsorptionTimeout,
    DegenerateData,
    DomainError,
    InsufficientBins,
    InsufficientData,
    NonConvergence,
    ParseError,
    PosschainError,
    UnderdispersedData,
    UnsegmentableStream,
)
from .events import load_events, validate_stream
from .markov import fit_adjusted, fit_simple
from .segmenter import (
    group_by_team,
    histogram,
    load_possessions,
    possessions_to_csv,
    segment,
)
from .serialize import (
    SCHEMA,
    automaton_from_document,
    load_json,
    model_document,
    model_from_document,
)
from .sim import SimConfig, sample_chain, samples_to_events, samples_to_possessions
from .stats import compare_report

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DATA = 3
EXIT_USAGE = 4
EXIT_SPEC = 5

MODEL_CHOICES = ("simple", "adjusted", "poisson", "nbd", "pareto")

_FITTERS = {
    "simple": fit_simple,
    "adjusted": fit_adjusted,
    "poisson": fit_poisson,
    "nbd": fit_nbd,
    "pareto": fit_pareto,
}


@dataclass
class RunManifest:
    """Reproducibility record: what ran, on what, and what came out."""

    command: str
    inputs: list[str]
    seed: int | None
    tool_version: str
    started_at: str
    finished_at: str = ""
    outputs: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "command": self.command,
            "inputs": self.inputs,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": self.outputs,
        }


class _Writer:
    """Atomic output writer that accumulates manifest digests."""

    def __init__(self, out_dir: Path, command: str, inputs: list[str], seed: int | None):
        self.out_dir = out_dir
        self.manifest = RunManifest(
            command=command,
            inputs=[str(p) for p in inputs],
            seed=seed,
            tool_version=__version__,
            started_at=_now(),
        )
        out_dir.mkdir(parents=True, exist_ok=True)

    def write_bytes(self, name: str, data: bytes) -> Path:
        path = self.out_dir / name
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        self.manifest.outputs[name] = hashlib.sha256(data).hexdigest()
        return path

    def write_json(self, name: str, doc: dict) -> Path:
        return self.write_bytes(
            name, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")
        )

    def write_csv(self, name: str, rows: list[list]) -> Path:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerows(rows)
        return self.write_bytes(name, buf.getvalue().encode("utf-8"))

    def finish(self) -> Path:
        self.manifest.finished_at = _now()
        path = self.out_dir / "manifest.json"
        path.write_bytes(
            (json.dumps(self.manifest.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")
        )
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _safe_name(token: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in token) or "unnamed"


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(args) -> int:
    mapping = None
    if args.mapping:
        raw = load_json(args.mapping)
        if not isinstance(raw, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in raw.items()
        ):
            _err(f"mapping file {args.mapping} must be a flat string-to-string object")
            return EXIT_USAGE
        mapping = raw

    try:
        stream = load_events(args.input, args.format, kind_mapping=mapping)
    except ParseError as exc:
        _err(str(exc))
        return EXIT_PARSE

    writer = _Writer(Path(args.out_dir), "ingest", [args.input], None)
    report = validate_stream(stream)
    writer.write_json("validation_report.json", {"schema": SCHEMA, **report.to_dict()})

    if not report.ok:
        writer.finish()
        _err(f"{len(report.violations)} validation violation(s); see validation_report.json")
        return EXIT_DATA

    possessions = segment(stream)
    writer.write_bytes("possessions.csv", possessions_to_csv(possessions))
    writer.finish()
    print(f"{len(stream)} events -> {len(possessions)} possessions, 0 violations")
    return EXIT_OK


def _fit_team(model_names: list[str], team: str, possessions) -> dict[str, object]:
    hist = histogram(possessions)
    fitted: dict[str, object] = {}
    for name in model_names:
        try:
            fitted[name] = _FITTERS[name](hist)
        except (InsufficientData, DegenerateData, UnderdispersedData, NonConvergence) as exc:
            raise _TeamFitError(team, name, exc) from exc
    return {"hist": hist, "models": fitted}


class _TeamFitError(PosschainError):
    def __init__(self, team: str, model: str, cause: Exception):
        super().__init__(f"cannot fit {model} for team {team!r}: {cause}")
        self.team = team


_TABLE_COLUMNS = ("team", "p_k", "p_s", "b")


def _table_cell(value: float | None) -> str:
    return "" if value is None else f"{value:.6g}"


def cmd_fit(args) -> int:
    model_names = [m.strip() for m in args.model.split(",") if m.strip()]
    bad = [m for m in model_names if m not in MODEL_CHOICES]
    if bad or not model_names:
        _err(f"unknown model(s) {bad}; choose from {', '.join(MODEL_CHOICES)}")
        return EXIT_USAGE

    try:
        possessions = load_possessions(args.input)
    except ParseError as exc:
        _err(str(exc))
        return EXIT_PARSE

    groups = (
        group_by_team(possessions) if args.per_team else {"all": list(possessions)}
    )
    if not groups:
        _err("possessions file is empty")
        return EXIT_DATA

    teams = list(groups)
    try:
        if args.workers > 1:
            with ThreadPoolExecutor(max_workers=args.workers) as pool:
                results = list(
                    pool.map(lambda t: _fit_team(model_names, t, groups[t]), teams)
                )
        else:
            results = [_fit_team(model_names, t, groups[t]) for t in teams]
    except _TeamFitError as exc:
        _err(str(exc))
        return EXIT_DATA

    writer = _Writer(Path(args.out_dir), "fit", [args.input], None)
    table_rows: list[list] = [list(_TABLE_COLUMNS)]
    for team, result in zip(teams, results):
        hist = result["hist"]
        cells: dict[str, float | None] = {"p_k": None, "p_s": None, "b": None}
        for name, model in result["models"].items():
            doc = model_document(model, hist)
            suffix = "" if team == "all" else f"_{_safe_name(team)}"
            writer.write_json(f"model_{name}{suffix}.json", doc)
            if name == "simple":
                cells["p_k"] = model.p_k
                cells["p_s"] = model.p_s
            elif name == "adjusted":
                cells["b"] = model.b
        table_rows.append(
            [team, _table_cell(cells["p_k"]), _table_cell(cells["p_s"]), _table_cell(cells["b"])]
        )

    writer.write_csv("fit_table.csv", table_rows)
    writer.finish()
    widths = [max(len(str(row[i])) for row in table_rows) for i in range(len(_TABLE_COLUMNS))]
    for row in table_rows:
        print("  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip())
    return EXIT_OK


def cmd_compare(args) -> int:
    model_names = [m.strip() for m in args.model.split(",") if m.strip()]
    bad = [m for m in model_names if m not in MODEL_CHOICES]
    if bad or not model_names:
        _err(f"unknown model(s) {bad}; choose from {', '.join(MODEL_CHOICES)}")
        return EXIT_USAGE

    try:
        possessions = load_possessions(args.input)
    except ParseError as exc:
        _err(str(exc))
        return EXIT_PARSE

    try:
        hist = histogram(possessions)
        models = [_FITTERS[name](hist) for name in model_names]
        report = compare_report(hist, models)
    except (
        InsufficientData,
        DegenerateData,
        UnderdispersedData,
        NonConvergence,
        InsufficientBins,
        DomainError,
    ) as exc:
        _err(str(exc))
        return EXIT_DATA

    writer = _Writer(Path(args.out_dir), "compare", [args.input], None)
    writer.write_json("comparison.json", {"schema": SCHEMA, **report.to_dict()})
    writer.write_csv("comparison_series.csv", report.series_rows())
    writer.write_csv("comparison_flat.csv", report.flat_rows())
    writer.finish()
    print("AIC ranking:", ", ".join(report.ranking()))
    return EXIT_OK


def cmd_shots(args) -> int:
    try:
        doc = load_json(args.input)
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"cannot read model document {args.input}: {exc}")
        return EXIT_PARSE
    try:
        model = model_from_document(doc)
    except (DomainError, KeyError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    if model.model_type != "simple":
        _err(f"shot curves need the simple chain model, got {model.model_type!r}")
        return EXIT_USAGE

    rows: list[list] = [["x", "shot_probability"]]
    for x in range(1, args.x_max + 1):
        rows.append([x, float(model.shot_cdf(x))])
    rows.append(["asymptote", model.shot_limit])

    writer = _Writer(Path(args.out_dir), "shots", [args.input], None)
    writer.write_csv("shot_curve.csv", rows)
    writer.finish()
    print(f"shot curve written for x = 1..{args.x_max}; asymptote {model.shot_limit:.6g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        doc = load_json(args.input)
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"cannot read chain spec {args.input}: {exc}")
        return EXIT_PARSE
    try:
        spec = automaton_from_document(doc)
    except (DomainError, KeyError) as exc:
        _err(f"invalid chain spec: {exc}")
        return EXIT_SPEC

    config = SimConfig(seed=args.seed, n_possessions=args.n)
    samples = sample_chain(spec, config, workers=args.workers)
    writer = _Writer(Path(args.out_dir), "simulate", [args.input], args.seed)
    try:
        if args.emit == "events":
            from .events import serialize_events

            writer.write_bytes("events.csv", serialize_events(samples_to_events(samples)))
        else:
            writer.write_bytes(
                "possessions.csv", possessions_to_csv(samples_to_possessions(samples))
            )
    except AbsorptionTimeout as exc:
        _err(str(exc))
        return EXIT_DATA
    writer.finish()
    print(f"{len(samples)} possessions simulated (seed {args.seed})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 4, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="posschain", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[], help="parse + validate events, emit possessions")
    p.add_argument("--input", required=True, help="event file (CSV or JSON-lines)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--mapping", help="JSON file mapping provider kind tokens to the vocabulary")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit model(s) to a possessions file")
    p.add_argument("--input", required=True, help="possessions file (CSV or JSON-lines)")
    p.add_argument("--model", required=True,
                   help="model name or comma list: " + ", ".join(MODEL_CHOICES))
    p.add_argument("--per-team", action="store_true", dest="per_team")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="rank fitted models on one histogram")
    p.add_argument("--input", required=True, help="possessions file (CSV or JSON-lines)")
    p.add_argument("--model", required=True,
                   help="comma list of models to fit and compare")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("shots", help="shot-probability curve from a simple-model document")
    p.add_argument("--input", required=True, help="model JSON document")
    p.add_argument("--x-max", type=_positive_int, default=30, dest="x_max")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_shots)

    p = sub.add_parser("simulate", help="draw possessions from a chain-spec document")
    p.add_argument("--input", required=True, help="chain spec JSON document")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--emit", choices=("possessions", "events"), default="possessions")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ParseError as exc:
        _err(str(exc))
        return EXIT_PARSE
    except OSError as exc:
        _err(str(exc))
        return EXIT_PARSE
    except UnsegmentableStream as exc:
        _err(str(exc))
        return EXIT_DATA
    except PosschainError as exc:
        _err(str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
