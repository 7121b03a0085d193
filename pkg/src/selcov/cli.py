"""``selcov`` command line.

Subcommands::

    curve      labeled predictions -> curve.csv, curve.svg, curve.json
    select     curve.csv + one objective -> policy.json
    annotate   predictions + policy/threshold -> decisions.jsonl, annotate.json
    replicate  fruiting predictions + reference table -> replication.json
    shift      flowering predictions -> shifts.csv, species_traits.csv, shift_summary.json
    subsets    shifts.csv + species_traits.csv -> subsets.json
    synth      spec JSON -> predictions.jsonl (+ oracle_curve.csv or reference.csv), synth.json

Every subcommand accepts ``--config FILE``: ``key = value`` lines whose keys
are long flag names without the leading dashes (``target-accuracy = 0.97``;
``#`` starts a comment; booleans take true/false). Flags given on the command
line win over the file. ``--out`` defaults to ``$SELCOV_OUT`` or the current
directory.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import shlex
import sys
from pathlib import Path
from typing import Any

from . import __version__
from .core import IngestConfig, ingest_predictions, write_jsonl
from .engine import (
    CurveTable,
    GridSpec,
    ThresholdPolicy,
    apply_threshold,
    curve_svg,
    fixed_policy,
    select_threshold_for_accuracy,
    select_threshold_for_coverage,
    sweep_curve,
    write_decisions_jsonl,
)
from .errors import DataError, SelcovError, UsageError
from .phenology import (
    CHARACTERISTICS,
    FLOWERING,
    FRUITING,
    ShiftFilters,
    aggregate_shifts,
    categorize_species,
    group_by_species,
    observations_from_records,
    read_reference_csv,
    read_shift_csv,
    read_traits_csv,
    replication_report,
    shifts_for_observations,
    species_mean_doy,
    species_traits_from_records,
    subset_welch_table,
    write_reference_csv,
    write_shift_csv,
    write_traits_csv,
)
from .synth import (
    CalibrationSpec,
    analytic_curve_oracle,
    generate_synthetic_phenology,
    generate_synthetic_predictions,
    spec_from_dict,
)

OUT_ENV = "SELCOV_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit code 1 instead of argparse's 2
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or .)")
    p.add_argument("--seed", type=int, default=0, help="seed recorded with the run (used by synth)")
    p.add_argument("--config", default=None, help="key = value file mirroring long flags")


def _objective_group(p: argparse.ArgumentParser, *, allow_policy: bool, required: bool) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    if allow_policy:
        g.add_argument("--policy", help="policy.json written by `select`")
    g.add_argument("--threshold", type=float, help="fixed minimum confidence")
    return g


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="selcov", description="Confidence-threshold annotation and phenology statistics.")
    parser.add_argument("--version", action="version", version=f"selcov {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("curve", help="accuracy/coverage curve from labeled predictions")
    p.add_argument("--in", dest="input", required=True, help="predictions (JSONL or CSV)")
    p.add_argument("--grid", default=None, help="start:stop:step (default 1/K:1.0:0.001)")
    p.add_argument("--format", choices=("auto", "jsonl", "csv"), default="auto")
    p.add_argument("--title", default="Accuracy / rejection vs confidence threshold")
    _common(p)

    p = sub.add_parser("select", help="pick a threshold from a curve")
    p.add_argument("--curve", required=True, help="curve.csv written by `curve`")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--target-accuracy", type=float)
    g.add_argument("--min-coverage", type=float)
    g.add_argument("--threshold", type=float)
    _common(p)

    p = sub.add_parser("annotate", help="accept/reject predictions")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("auto", "jsonl", "csv"), default="auto")
    _objective_group(p, allow_policy=True, required=True)
    _common(p)

    p = sub.add_parser("replicate", help="species mean fruiting DoY vs a reference study")
    p.add_argument("--in", dest="input", required=True, help="fruiting predictions with specimen metadata")
    p.add_argument("--reference", required=True, help="CSV species,mean_doy,std_doy,n,group")
    p.add_argument("--format", choices=("auto", "jsonl", "csv"), default="auto")
    p.add_argument("--positive-class", type=int, default=1)
    _objective_group(p, allow_policy=True, required=False)
    _common(p)

    p = sub.add_parser("shift", help="per-species flowering shift regressions")
    p.add_argument("--in", dest="input", required=True, help="flowering predictions with specimen metadata")
    p.add_argument("--format", choices=("auto", "jsonl", "csv"), default="auto")
    p.add_argument("--positive-class", type=int, default=1)
    p.add_argument("--min-samples", type=int, default=75)
    p.add_argument("--min-per-era", type=int, default=37)
    p.add_argument("--era", type=int, default=1950, help="first year of the later era")
    p.add_argument("--significant-only", action="store_true",
                   help="average shift over significant species only")
    _objective_group(p, allow_policy=True, required=False)
    _common(p)

    p = sub.add_parser("subsets", help="Welch tests of shifts between trait categories")
    p.add_argument("--shifts", required=True, help="shifts.csv written by `shift`")
    p.add_argument("--traits", required=True, help="species_traits.csv written by `shift`")
    p.add_argument("--characteristic", action="append", choices=CHARACTERISTICS,
                   help="repeatable; default: all")
    _common(p)

    p = sub.add_parser("synth", help="generate synthetic datasets from a spec")
    p.add_argument("--spec", required=True, help="JSON spec (kind: calibration | phenology)")
    _common(p)
    return parser


# --- config handling ----------------------------------------------------------

def _config_args(path: str, parser: argparse.ArgumentParser) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"--config: {path}: {exc}") from None
    flags = {}
    for action in parser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                flags[opt[2:]] = action
    args = []
    for key, value in cp.items("run"):
        name = key.strip().replace("_", "-")
        action = flags.get(name)
        if action is None or name == "config":
            raise UsageError(f"--config: unknown key {key!r} in {path}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.strip().lower() in ("1", "true", "yes", "on"):
                args.append(f"--{name}")
            continue
        if isinstance(action, argparse._AppendAction):
            for v in value.split(","):
                args += [f"--{name}", v.strip()]
            continue
        args += [f"--{name}", value.strip()]
    return args


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _find_config(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config: expected a file path")
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    config = _find_config(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if config is not None and command is not None:
        cfg = _config_args(config, _subparser(parser, command))
        given = {a.split("=")[0] for a in argv if a.startswith("--")}
        merged, i = [], 0
        while i < len(cfg):
            flag = cfg[i]
            takes_value = i + 1 < len(cfg) and not cfg[i + 1].startswith("--")
            if flag not in given:
                merged.append(flag)
                if takes_value:
                    merged.append(cfg[i + 1])
            i += 2 if takes_value else 1
        pos = argv.index(command)
        argv = [*argv[:pos + 1], *merged, *argv[pos + 1:]]
    args = parser.parse_args(argv)
    if args.out is None:
        args.out = os.environ.get(OUT_ENV, ".")
    return args


def _repro_command(args: argparse.Namespace) -> str:
    parts = ["selcov", args.command]
    for key, value in sorted(vars(args).items()):
        if key in ("command", "config") or value is None or value is False:
            continue
        flag = "--in" if key == "input" else "--" + key.replace("_", "-")
        if value is True:
            parts.append(flag)
        elif isinstance(value, list):
            for v in value:
                parts += [flag, str(v)]
        else:
            parts += [flag, str(value)]
    return shlex.join(parts)


def _config_dict(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k != "config"}


# --- output helpers -------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"--out: cannot create {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"--out: {out} is not writable")
    return out


def _load(args):
    if not Path(args.input).is_file():
        raise UsageError(f"--in: no such file {args.input}")
    records, report = ingest_predictions(args.input, IngestConfig(format=getattr(args, "format", "auto")))
    for line, reason in report.malformed_lines[:20]:
        print(f"warning: {args.input}:{line}: skipped: {reason}", file=sys.stderr)
    if report.malformed_count > 20:
        print(f"warning: {report.malformed_count - 20} more malformed lines skipped", file=sys.stderr)
    return records, report


def _policy(args, default: float | None = None) -> ThresholdPolicy:
    if getattr(args, "policy", None):
        if not Path(args.policy).is_file():
            raise UsageError(f"--policy: no such file {args.policy}")
        return ThresholdPolicy.load(args.policy)
    t = args.threshold if args.threshold is not None else default
    if t is None:
        raise UsageError("one of --policy or --threshold is required")
    if not 0.0 <= t <= 1.0:
        raise UsageError(f"--threshold: {t} outside [0, 1]")
    return fixed_policy(t)


def _base_payload(args) -> dict[str, Any]:
    return {"config": _config_dict(args), "reproduce": _repro_command(args)}


# --- commands --------------------------------------------------------------------

def cmd_curve(args) -> list[Path]:
    out = _outdir(args)
    records, report = _load(args)
    grid = GridSpec.parse(args.grid) if args.grid else GridSpec.default(report.class_count)
    curve = sweep_curve(records, grid)
    paths = [out / "curve.csv", out / "curve.svg", out / "curve.json"]
    curve.to_csv(paths[0])
    paths[1].write_text(curve_svg(curve, args.title), encoding="utf-8")
    payload = _base_payload(args)
    payload.update({"grid": str(grid), "points": len(curve.points), "dataset": report.to_dict()})
    _write_json(paths[2], payload)
    return paths


def cmd_select(args) -> list[Path]:
    out = _outdir(args)
    if not Path(args.curve).is_file():
        raise UsageError(f"--curve: no such file {args.curve}")
    curve = CurveTable.from_csv(args.curve)
    if args.target_accuracy is not None:
        if not 0 < args.target_accuracy <= 1:
            raise UsageError("--target-accuracy must be in (0, 1]")
        policy = select_threshold_for_accuracy(curve, args.target_accuracy)
    elif args.min_coverage is not None:
        if not 0 < args.min_coverage <= 1:
            raise UsageError("--min-coverage must be in (0, 1]")
        policy = select_threshold_for_coverage(curve, args.min_coverage)
    else:
        if not 0 <= args.threshold <= 1:
            raise UsageError("--threshold must be in [0, 1]")
        point = next((p for p in curve.points if p.threshold == args.threshold), None)
        policy = ThresholdPolicy(args.threshold, fixed_policy(args.threshold).objective, point)
    payload = _base_payload(args)
    payload["policy"] = policy.to_dict()
    path = out / "policy.json"
    _write_json(path, payload)
    return [path]


def cmd_annotate(args) -> list[Path]:
    out = _outdir(args)
    policy = _policy(args)
    records, report = _load(args)
    decisions = apply_threshold(records, policy)
    accepted = sum(d.accepted for d in decisions)
    paths = [out / "decisions.jsonl", out / "annotate.json"]
    write_decisions_jsonl(decisions, paths[0])
    payload = _base_payload(args)
    payload.update({
        "policy": policy.to_dict(),
        "total": len(decisions),
        "accepted": accepted,
        "rejected": len(decisions) - accepted,
        "coverage": accepted / len(decisions),
        "dataset": report.to_dict(),
    })
    _write_json(paths[1], payload)
    return paths


def cmd_replicate(args) -> list[Path]:
    out = _outdir(args)
    policy = _policy(args, default=0.5)
    if not Path(args.reference).is_file():
        raise UsageError(f"--reference: no such file {args.reference}")
    reference, grouping = read_reference_csv(args.reference)
    records, report = _load(args)
    obs = observations_from_records(records, FRUITING, policy, args.positive_class)
    model = species_mean_doy(group_by_species(
        (o for o in obs if o.species in reference), reference.keys()))
    rep = replication_report(model, reference, grouping)
    payload = _base_payload(args)
    payload.update({
        "policy": policy.to_dict(),
        "report": rep.to_dict(),
        "species_estimates": [
            {"species": e.species, "mean_doy": e.mean_doy, "std_doy": e.std_doy, "n": e.n}
            for e in model.values()
        ],
        "dataset": report.to_dict(),
    })
    path = out / "replication.json"
    _write_json(path, payload)
    return [path]


def cmd_shift(args) -> list[Path]:
    out = _outdir(args)
    policy = _policy(args, default=0.5)
    filters = ShiftFilters(args.min_samples, args.min_per_era, args.era)
    records, report = _load(args)
    obs = observations_from_records(records, FLOWERING, policy, args.positive_class)
    all_species = sorted({r.specimen.species for r in records if r.specimen is not None})
    estimates = shifts_for_observations(obs, filters, all_species)
    agg = aggregate_shifts(estimates, significant_only=args.significant_only)
    traits = species_traits_from_records(records, obs)
    paths = [out / "shifts.csv", out / "species_traits.csv", out / "shift_summary.json"]
    write_shift_csv(estimates, paths[0])
    write_traits_csv(traits, paths[1])
    payload = _base_payload(args)
    payload.update({
        "policy": policy.to_dict(),
        "filters": {"min_samples": filters.min_samples, "min_per_era": filters.min_per_era,
                    "era_boundary": filters.era_boundary},
        "aggregate": agg.to_dict(),
        "observations": len(obs),
        "dataset": report.to_dict(),
    })
    _write_json(paths[2], payload)
    return paths


def cmd_subsets(args) -> list[Path]:
    out = _outdir(args)
    for flag, value in (("--shifts", args.shifts), ("--traits", args.traits)):
        if not Path(value).is_file():
            raise UsageError(f"{flag}: no such file {value}")
    estimates = read_shift_csv(args.shifts)
    traits = read_traits_csv(args.traits)
    reports = []
    for ch in args.characteristic or CHARACTERISTICS:
        cat = categorize_species(estimates, ch, traits)
        reports.append(subset_welch_table(estimates, cat).to_dict())
    payload = _base_payload(args)
    payload["table"] = [row for r in reports for row in r["comparisons"]]
    payload["characteristics"] = reports
    path = out / "subsets.json"
    _write_json(path, payload)
    return [path]


def cmd_synth(args) -> list[Path]:
    out = _outdir(args)
    try:
        data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except OSError:
        raise UsageError(f"--spec: cannot read {args.spec}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg}", source=args.spec, line=exc.lineno) from None
    spec = spec_from_dict(data, seed=args.seed)
    paths = [out / "predictions.jsonl"]
    payload = _base_payload(args)
    payload["spec"] = data
    if isinstance(spec, CalibrationSpec):
        records = generate_synthetic_predictions(spec)
        write_jsonl(records, paths[0])
        grid = GridSpec.default(spec.n_classes)
        oracle = analytic_curve_oracle(spec, grid.values())
        paths.append(out / "oracle_curve.csv")
        with open(paths[1], "w", encoding="utf-8", newline="\n") as fh:
            fh.write("threshold,accuracy,coverage\n")
            for p in oracle.points:
                acc = "null" if p.accuracy is None else repr(p.accuracy)
                fh.write(f"{p.threshold!r},{acc},{p.coverage!r}\n")
        payload["records"] = len(records)
    else:
        ph = generate_synthetic_phenology(spec)
        write_jsonl(ph.records, paths[0])
        paths.append(out / "reference.csv")
        write_reference_csv(ph.reference_estimates(), ph.grouping, paths[1])
        payload["records"] = len(ph.records)
        payload["species"] = len(spec.species)
    paths.append(out / "synth.json")
    _write_json(paths[-1], payload)
    return paths


COMMANDS = {
    "curve": cmd_curve,
    "select": cmd_select,
    "annotate": cmd_annotate,
    "replicate": cmd_replicate,
    "shift": cmd_shift,
    "subsets": cmd_subsets,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        paths = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, SelcovError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(f"wrote {p}")
    print(f"reproduce: {_repro_command(args)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
