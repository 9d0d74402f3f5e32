"""Command-line entry point: simulate | constants | pillow-quantiles | test | harness.

All randomness flows from explicit --seed flags; outputs with fixed seeds are
byte-identical across runs.  Exit codes: 0 success, 1 harness tolerance
violation, 2 validation/usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .errors import RwrsError
from .harness import ExperimentConfig, run_experiment
from .inference import changepoint_test
from .limits import limit_constant, pillow_sup_quantiles
from .scenery import Scenery, evaluate_along
from .walk import model_from_dict, sample_path


def _parse_seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _load_model(path: str, allow_periodic: bool):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise RwrsError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RwrsError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc, allow_periodic=allow_periodic)


def _dump_json(doc: dict, out: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def _write_csv(rows, header, out: str) -> None:
    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)

    if out == "-":
        emit(sys.stdout)
    else:
        with open(out, "w", newline="") as fh:
            emit(fh)


def _cmd_simulate(args) -> int:
    model = _load_model(args.model, args.allow_periodic)
    path = sample_path(model, args.n, args.seed)
    marks = None
    if args.scenery_seed is not None:
        marks = evaluate_along(path, Scenery(seed=args.scenery_seed, d=model.law.d))
    if args.format == "bin":
        if marks is not None:
            raise RwrsError("binary export carries coordinates only; drop --scenery-seed")
        with open(args.out, "wb") as fh:
            fh.write(path.positions.astype("<i8").tobytes())
        return 0
    header = [f"x{i}" for i in range(model.law.d)]
    rows = [[int(c) for c in pos] for pos in path.positions]
    if marks is not None:
        header.append("mark")
        rows = [row + [repr(float(m))] for row, m in zip(rows, marks)]
    _write_csv(rows, header, args.out)
    return 0


def _cmd_constants(args) -> int:
    model = _load_model(args.model, args.allow_periodic)
    lc = limit_constant(model)
    _dump_json(
        {
            "c": lc.c,
            "regime": lc.regime,
            "provenance": lc.provenance,
            "error_bound": lc.error_bound,
            "theorem_flags": list(model.theorem_flags),
        },
        args.out,
    )
    return 0


def _cmd_pillow_quantiles(args) -> int:
    q = pillow_sup_quantiles(args.m, args.R, args.seed, threads=args.threads)
    rows = [[repr(float(level)), repr(float(value))] for level, value in q.table_rows()]
    _write_csv(rows, ["level", "sup_value"], args.out)
    return 0


def _read_values_csv(path: str) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise RwrsError(f"{path}: empty input (header row is mandatory)")
            values = [float(row[0]) for row in reader if row]
    except OSError as exc:
        raise RwrsError(f"cannot read data file {path}: {exc}") from exc
    if not values:
        raise RwrsError(f"{path}: no data rows")
    return np.asarray(values)


def _read_quantiles_csv(path: str):
    from .limits import QuantileTable

    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["level", "sup_value"]:
                raise RwrsError(f"{path}: expected header level,sup_value")
            pairs = [(float(r[0]), float(r[1])) for r in reader if r]
    except OSError as exc:
        raise RwrsError(f"cannot read quantile table {path}: {exc}") from exc
    if not pairs:
        raise RwrsError(f"{path}: no quantile rows")
    return QuantileTable(levels=np.array([p[0] for p in pairs]),
                         values=np.array([p[1] for p in pairs]))


def _cmd_test(args) -> int:
    model = _load_model(args.model, args.allow_periodic)
    values = _read_values_csv(args.input)
    quantiles = _read_quantiles_csv(args.quantiles)
    report = changepoint_test(values, model, args.alpha, quantiles)
    _dump_json(report.to_json_dict(), args.out)
    return 0


def _cmd_harness(args) -> int:
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise RwrsError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RwrsError(f"config {args.config} is not valid JSON: {exc}") from exc
    if args.experiment is not None:
        doc["kind"] = args.experiment
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.threads is not None:
        doc["threads"] = args.threads
    if "seed" not in doc:
        raise RwrsError("harness runs need an explicit seed (config key or --seed)")
    cfg = ExperimentConfig.from_dict(doc)
    report = run_experiment(cfg)
    _dump_json(report, args.out)
    if args.csv_out:
        _write_report_csv(report, args.csv_out)
    return 0 if report.get("passed", False) else 1


def _write_report_csv(report: dict, out: str) -> None:
    kind = report["experiment"]
    if kind == "covariance":
        pts = report["points"]
        rows = []
        for i, (s1, t1) in enumerate(pts):
            for j, (s2, t2) in enumerate(pts):
                rows.append([s1, t1, s2, t2, report["empirical"][i][j],
                             report["theoretical"][i][j], report["z"][i][j]])
        _write_csv(rows, ["s", "t", "s2", "t2", "empirical", "theoretical", "z"], out)
    elif kind == "lambda":
        rows = list(zip(report["n_list"], report["mean_ratio"], report["sd_ratio"],
                        report["abs_gap_to_c"]))
        _write_csv(rows, ["n", "mean_ratio", "sd_ratio", "abs_gap_to_c"], out)
    elif kind == "moment" and report.get("mode") == "scaling":
        rows = [[c["dt"], c["ds"], c["m4"]] for c in report["cells"]]
        _write_csv(rows, ["dt", "ds", "fourth_moment"], out)
    elif kind == "modulus":
        rows = list(zip(report["delta_list"], report["exceedance_frequency"]))
        _write_csv(rows, ["delta", "exceedance_frequency"], out)
    else:
        rows = [[k, json.dumps(v, sort_keys=True)] for k, v in sorted(report.items())
                if k != "config"]
        _write_csv(rows, ["key", "value"], out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwrs",
        description="Random walks in random scenery: simulation, limit objects, inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a walk path, optionally with scenery marks")
    p.add_argument("--model", required=True, help="model JSON document")
    p.add_argument("--n", type=int, required=True, help="number of steps")
    p.add_argument("--seed", type=_parse_seed, required=True, help="path seed (u64)")
    p.add_argument("--scenery-seed", type=_parse_seed, default=None,
                   help="when given, append the scenery mark at each step")
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.add_argument("--out", required=True, help="output file, or - for stdout (csv only)")
    p.add_argument("--allow-periodic", action="store_true")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("constants", help="limit constant c for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--allow-periodic", action="store_true")
    p.set_defaults(fn=_cmd_constants)

    p = sub.add_parser("pillow-quantiles", help="simulate sup |Brownian pillow| quantiles")
    p.add_argument("--m", type=int, required=True, help="grid resolution (>= 20)")
    p.add_argument("--R", type=int, required=True, help="replicates (>= 1000)")
    p.add_argument("--seed", type=_parse_seed, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=_cmd_pillow_quantiles)

    p = sub.add_parser("test", help="change-point test on observed marks")
    p.add_argument("--input", required=True, help="single-column CSV (header mandatory)")
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--quantiles", required=True, help="CSV from pillow-quantiles")
    p.add_argument("--out", default="-")
    p.add_argument("--allow-periodic", action="store_true")
    p.set_defaults(fn=_cmd_test)

    p = sub.add_parser("harness", help="run a verification experiment")
    p.add_argument("--experiment", choices=("covariance", "lambda", "moment",
                                            "modulus", "calibration"), default=None)
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=_parse_seed, default=None, help="override config seed")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="-")
    p.add_argument("--csv-out", default=None, help="also write a flat CSV table")
    p.set_defaults(fn=_cmd_harness)

    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except RwrsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
