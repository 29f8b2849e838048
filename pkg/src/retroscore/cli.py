"""Command-line surface, file ingestion, and result serialization.

Three subcommands: ``test`` runs one score test on a delimited dataset,
``simulate`` runs a rejection-rate experiment, ``mvn-check`` evaluates a
normal rectangle probability as a numerics diagnostic.  Results are
written as a self-describing JSON document embedding the invocation, so
every number in a file can be reproduced from the file alone.

Exit codes: 0 success, 2 invalid input, 3 numeric failure.  The
``RETROSCORE_SEED`` environment variable supplies a default seed when
``--seed`` is not given.
"""

from __future__ import annotations

import argparse
import csv
import fnmatch
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .data_model import CaseControlDataset, PrevalenceSpec, validate_dataset
from .errors import DataValidationError, NumericError, RetroScoreError
from .pvalue_numerics import MvnConfig, mvn_cdf
from .score_tests import METHOD_NAMES, TestResult, evaluate_methods
from .simulation import run_scenario, scenario_from_file, scenario_preset

SEED_ENV_VAR = "RETROSCORE_SEED"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


@dataclass(frozen=True)
class ColumnSpec:
    """Names the phenotype column and the covariate / genotype columns.

    Entries containing ``*`` or ``?`` are glob patterns expanded against
    the header, in header order.
    """

    phenotype: str
    covariates: tuple[str, ...] = ()
    genotypes: tuple[str, ...] = ()


def _split_delimited(line: str) -> tuple[str, list[str]]:
    delimiter = "\t" if "\t" in line else ","
    return delimiter, next(csv.reader([line], delimiter=delimiter))


def _expand_columns(patterns: Sequence[str], header: list[str], role: str) -> list[str]:
    out: list[str] = []
    for pattern in patterns:
        if any(ch in pattern for ch in "*?[]"):
            hits = [h for h in header if fnmatch.fnmatchcase(h, pattern)]
            if not hits:
                raise DataValidationError(f"no {role} columns match pattern {pattern!r}")
            out.extend(h for h in hits if h not in out)
        else:
            if pattern not in header:
                raise DataValidationError(f"missing {role} column {pattern!r}")
            if pattern not in out:
                out.append(pattern)
    return out


def read_dataset(path, column_spec: ColumnSpec) -> CaseControlDataset:
    """Read a delimited text file (comma or tab, autodetected) into a dataset."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    if len(lines) < 2:
        raise DataValidationError(f"{path}: need a header line and at least one row")
    delimiter, header = _split_delimited(lines[0])
    if column_spec.phenotype not in header:
        raise DataValidationError(f"missing phenotype column {column_spec.phenotype!r}")
    covariate_cols = _expand_columns(column_spec.covariates, header, "covariate")
    genotype_cols = _expand_columns(column_spec.genotypes, header, "genotype")
    if not genotype_cols:
        raise DataValidationError("no genotype columns selected")

    index = {name: i for i, name in enumerate(header)}
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = next(csv.reader([line], delimiter=delimiter))
        if len(fields) != len(header):
            raise DataValidationError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}"
            )
        rows.append(fields)

    def column(name: str) -> np.ndarray:
        vals = []
        for lineno, fields in enumerate(rows, start=2):
            cell = fields[index[name]]
            try:
                vals.append(float(cell))
            except ValueError as exc:
                raise DataValidationError(
                    f"{path}:{lineno}: non-numeric value {cell!r} in column {name!r}"
                ) from exc
        return np.array(vals)

    d = column(column_spec.phenotype)
    if not np.isin(d, (0.0, 1.0)).all():
        raise DataValidationError(
            f"phenotype column {column_spec.phenotype!r} must contain only 0 and 1"
        )
    x = (
        np.column_stack([column(c) for c in covariate_cols])
        if covariate_cols
        else np.zeros((len(rows), 0))
    )
    y = np.column_stack([column(c) for c in genotype_cols])
    return validate_dataset(d, x, y)


def _result_to_dict(res: TestResult) -> dict:
    return {
        "method": res.method,
        "statistic": res.statistic,
        "p_value": res.p_value,
        "alpha_grid": [float(v) for v in res.alpha_grid],
        "u1_standardized": [float(v) for v in res.u1_standardized],
        "u2_standardized": res.u2_standardized,
        "numeric_error": res.numeric_error,
        "diagnostics": {k: v for k, v in res.diagnostics.items()},
    }


def write_result_document(path, document: dict) -> None:
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def read_result_document(path) -> dict:
    return json.loads(Path(path).read_text())


def _document(command: str, args_dict: dict, seed: int, timestamp: Optional[str]) -> dict:
    return {
        "tool": {"name": "retroscore", "version": __version__},
        "invocation": {"command": command, "args": args_dict},
        "seed": seed,
        "timestamp": timestamp,
    }


def _default_seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise DataValidationError(f"{SEED_ENV_VAR} must be an integer") from exc
    return 0


_CLI_METHOD_TO_INTERNAL = {
    "fs": "fs",
    "rs": None,  # resolved by the prevalence options
    "ss": None,
    "rs-max": "rs-max",
    "ss-max": "ss-max",
}


def cmd_test(args: argparse.Namespace) -> int:
    spec = ColumnSpec(
        phenotype=args.phenotype,
        covariates=tuple(args.covariates.split(",")) if args.covariates else (),
        genotypes=tuple(args.genotypes.split(",")),
    )
    ds = read_dataset(args.input, spec)
    seed = _default_seed(args.seed)
    interval = PrevalenceSpec.interval_of(args.b1, args.b2, args.m)

    method = args.method
    alpha_p = None
    if method in ("rs", "ss"):
        if args.alpha_p is None and args.prevalence is None:
            raise DataValidationError(
                f"method {method!r} needs --alpha-p (a value or 'fitted') or --prevalence"
            )
        if args.alpha_p == "fitted":
            internal = f"{method}-alpha-hat"
        elif args.alpha_p is not None:
            internal = f"{method}-alpha-p"
            try:
                alpha_p = float(args.alpha_p)
            except ValueError as exc:
                raise DataValidationError(
                    f"--alpha-p must be a number or 'fitted', got {args.alpha_p!r}"
                ) from exc
        else:
            # Convert a known prevalence to the intercept anchor through
            # the fitted sample-adjusted intercept.
            from .logistic_mle import fit_null_theta
            from .score_engine import alpha_star_from_prevalence

            fit_theta = fit_null_theta(ds)
            alpha_p = alpha_star_from_prevalence(
                PrevalenceSpec.known_prevalence_of(args.prevalence), fit_theta, ds
            )
            internal = f"{method}-alpha-p"
    else:
        internal = _CLI_METHOD_TO_INTERNAL[method]

    results, errors = evaluate_methods(
        ds,
        [internal],
        alpha_p=alpha_p,
        interval=interval,
        mvn=MvnConfig(seed=seed),
        grid_literal=args.grid_literal,
    )
    if internal in errors:
        raise NumericError(errors[internal])
    res = results[internal]

    doc = _document(
        "test",
        {
            "input": str(args.input),
            "phenotype": args.phenotype,
            "covariates": args.covariates,
            "genotypes": args.genotypes,
            "method": method,
            "alpha_p": args.alpha_p,
            "prevalence": args.prevalence,
            "b1": args.b1,
            "b2": args.b2,
            "m": args.m,
            "grid_literal": args.grid_literal,
        },
        seed,
        datetime.now(timezone.utc).isoformat(),
    )
    doc["results"] = [_result_to_dict(res)]
    if args.output:
        write_result_document(args.output, doc)
    print(f"{method}\tstatistic={res.statistic:.10g}\tp={res.p_value:.10g}")
    return EXIT_OK


def _parse_methods(text: str) -> tuple[str, ...]:
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    unknown = set(methods) - set(METHOD_NAMES)
    if unknown:
        raise DataValidationError(
            f"unknown methods {sorted(unknown)}; valid: {', '.join(METHOD_NAMES)}"
        )
    return methods


def _pvalue_list_path(output: Path, method: str) -> Path:
    return output.with_name(f"{output.stem}.{method}.pvals.txt")


def cmd_simulate(args: argparse.Namespace) -> int:
    if (args.scenario is None) == (args.scenario_file is None):
        raise DataValidationError("give exactly one of --scenario or --scenario-file")
    if args.scenario is not None:
        sc = scenario_preset(args.scenario, args.k)
    else:
        sc = scenario_from_file(args.scenario_file)
    seed = _default_seed(args.seed)
    methods = _parse_methods(args.methods)

    table = run_scenario(
        sc,
        methods,
        reps=args.reps,
        level=args.level,
        seed=seed,
        workers=args.workers,
    )

    doc = _document(
        "simulate",
        {
            "scenario": args.scenario,
            "scenario_file": args.scenario_file,
            "k": args.k,
            "reps": args.reps,
            "level": args.level,
            "methods": args.methods,
            "workers": args.workers,
        },
        seed,
        # Simulation documents must be byte-identical across reruns with
        # the same seed, so no wall-clock timestamp is recorded.
        None,
    )
    doc["rejection_table"] = table.to_dict()
    output = Path(args.output)
    write_result_document(output, doc)
    for method, cell in table.cells.items():
        plist = _pvalue_list_path(output, method)
        lines = [
            "nan" if np.isnan(v) else f"{v:.12g}" for v in cell.p_values
        ]
        plist.write_text("\n".join(lines) + "\n")
    for method, cell in table.cells.items():
        print(
            f"{table.scenario}\t{method}\trejection={100 * cell.proportion:.2f}%"
            f"\treps={cell.completed}\tskipped={cell.skipped}"
        )
    return EXIT_OK


def _read_matrix(path) -> np.ndarray:
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise DataValidationError(f"{path}: non-numeric matrix entry") from exc
    if not rows:
        raise DataValidationError(f"{path}: empty matrix file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataValidationError(f"{path}: ragged matrix rows")
    return np.array(rows)


def cmd_mvn_check(args: argparse.Namespace) -> int:
    corr = _read_matrix(args.correlation)
    bounds = _read_matrix(args.bounds).ravel()
    seed = _default_seed(args.seed)
    try:
        res = mvn_cdf(bounds, corr, MvnConfig(seed=seed))
    except NumericError as exc:
        # A malformed matrix is an input problem, not a numerics failure.
        raise DataValidationError(str(exc)) from exc
    print(f"probability={res.prob:.10g}\terror_estimate={res.abs_error_estimate:.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retroscore",
        description=(
            "Score tests for case-control genetic association, with optional "
            "disease-prevalence information, and a simulation harness."
        ),
        epilog=f"Environment: {SEED_ENV_VAR} sets the default --seed.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run one score test on a dataset file")
    p_test.add_argument("--input", required=True, help="delimited text file with header")
    p_test.add_argument("--phenotype", required=True, help="0/1 disease column name")
    p_test.add_argument(
        "--covariates", default="", help="comma-separated covariate columns (globs ok)"
    )
    p_test.add_argument(
        "--genotypes", required=True, help="comma-separated genotype columns (globs ok)"
    )
    p_test.add_argument(
        "--method", required=True, choices=["fs", "rs", "ss", "rs-max", "ss-max"]
    )
    p_test.add_argument(
        "--alpha-p",
        dest="alpha_p",
        default=None,
        help="population log-odds intercept, or 'fitted' for the prospective variant",
    )
    p_test.add_argument(
        "--prevalence", type=float, default=None, help="known disease prevalence in (0,1)"
    )
    p_test.add_argument("--b1", type=float, default=-10.0, help="interval lower bound")
    p_test.add_argument("--b2", type=float, default=-0.5, help="interval upper bound")
    p_test.add_argument("--m", type=int, default=4, help="anchor grid size")
    p_test.add_argument(
        "--grid-literal",
        action="store_true",
        help="use the uncorrected anchor grid formula (replication only)",
    )
    p_test.add_argument("--seed", type=int, default=None)
    p_test.add_argument("--output", default=None, help="result document path (JSON)")
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", help="run a rejection-rate experiment")
    p_sim.add_argument("--scenario", default=None, help="preset name, e.g. C1, D2, E4")
    p_sim.add_argument(
        "--scenario-file", default=None, help="key = value scenario definition file"
    )
    p_sim.add_argument("--k", type=int, default=0, help="preset effect strength 0..5")
    p_sim.add_argument("--reps", type=int, default=2000)
    p_sim.add_argument("--level", type=float, default=0.05)
    p_sim.add_argument(
        "--methods", default=",".join(METHOD_NAMES), help="comma-separated method names"
    )
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--output", required=True, help="result document path (JSON)")
    p_sim.set_defaults(func=cmd_simulate)

    p_mvn = sub.add_parser("mvn-check", help="evaluate a normal rectangle probability")
    p_mvn.add_argument("--correlation", required=True, help="matrix file")
    p_mvn.add_argument("--bounds", required=True, help="upper bounds file")
    p_mvn.add_argument("--seed", type=int, default=None)
    p_mvn.set_defaults(func=cmd_mvn_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RetroScoreError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
