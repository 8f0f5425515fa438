"""Command line front end: ``tomolr {simulate, estimate, tune, experiment}``.

Exit codes: 0 success, 2 bad configuration or input, 3 numerical failure.
The basis is always the Pauli basis of the POVM dimension.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import estimators as est
from . import experiments as exp
from . import tuning
from .errors import DimensionMismatch, IncompleteMeasurement, InvalidOperator, TomographyError
from .linalg import decompose, make_pauli_basis, validate_density_matrix
from .measurement import (EPS_CLAMP, SEPARATE, COLLECTIVE, MeasurementRecord, Povm, design_matrix, simulate,
                          weight_matrix_empirical)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

logger = logging.getLogger("tomolr")


class UsageError(Exception):
    pass


# malformed inputs rather than numerical trouble
INPUT_ERRORS = (UsageError, exp.ConfigError, KeyError, DimensionMismatch, InvalidOperator, IncompleteMeasurement)


def _num_qubits(dim: int) -> int:
    q = int(round(np.log2(dim)))
    if 2**q != dim:
        raise UsageError(f"POVM dimension {dim} is not a power of two; only Pauli bases are supported")
    return q


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _load_state(path) -> np.ndarray:
    """State file: ``{"matrix": [[[re, im], ...], ...]}`` or a bare nested list."""
    doc = _load_json(path)
    raw = np.asarray(doc["matrix"] if isinstance(doc, dict) else doc, dtype=float)
    return raw[..., 0] + 1j * raw[..., 1] if raw.ndim == 3 else raw.astype(complex)


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text + ("" if text.endswith("\n") else "\n"))
    else:
        Path(out).write_text(text)


def _setup(povm_path):
    povm = Povm.from_dict(_load_json(povm_path))
    basis = make_pauli_basis(_num_qubits(povm.dim))
    return povm, basis, design_matrix(povm, basis)


def cmd_simulate(args) -> int:
    if args.scenario:
        if args.param is None:
            raise UsageError("--scenario needs --param")
        if args.scenario in ("Werner36", "werner36"):
            rho, povm, basis = exp.scenario_werner36(args.param)
        else:
            rho, povm, basis = exp.scenario_six_qubit(args.param, args.num_projectors, args.povm_seed,
                                                      args.num_qubits)
        a = design_matrix(povm, basis)
        if args.save_povm:
            povm.save(args.save_povm)
    else:
        if not (args.povm and args.state):
            raise UsageError("simulate needs --povm and --state, or --scenario")
        povm, basis, a = _setup(args.povm)
        rho = _load_state(args.state)
    theta = decompose(validate_density_matrix(rho), basis)
    record = simulate(povm, a, theta, args.n, args.mode, args.seed)
    _write(json.dumps(record.to_dict()), args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    povm, basis, a = _setup(args.povm)
    record = MeasurementRecord.from_dict(_load_json(args.record))
    kind = args.estimator.upper()
    if kind not in est.KINDS:
        raise UsageError(f"unknown estimator {args.estimator!r}; expected one of {est.KINDS}")
    if kind in est.REGULARIZED and args.gamma is None:
        raise UsageError(f"{kind} needs --gamma")
    rep = est.estimate(kind, a, record, basis.trace_vector, args.gamma or 0.0, args.eps_clamp)
    _write(rep.to_json(indent=1), args.out)
    return EXIT_OK


def cmd_tune(args) -> int:
    povm, basis, a = _setup(args.povm)
    record = MeasurementRecord.from_dict(_load_json(args.record))
    y = record.frequencies
    search = tuning.GammaSearch(n_grid=args.grid_points, gamma_max=args.gamma_max)
    kind = args.estimator.upper()
    if kind not in ("CRWLS", "CRLS"):
        raise UsageError("tune supports CRWLS and CRLS")
    if kind == "CRLS":
        f = np.clip(y, args.eps_clamp, 1 - args.eps_clamp)
        weights, noise_var = None, (f - f * f) / record.n
    else:
        weights, noise_var = weight_matrix_empirical(record, args.eps_clamp), None
    if args.method == "R":
        if not args.state:
            raise UsageError("the oracle risk (--method R) needs --state")
        theta = decompose(validate_density_matrix(_load_state(args.state)), basis)
        curve = tuning.tune_gamma_R(a, weights, theta, basis.trace_vector, search, record.n, noise_var)
    else:
        curve = tuning.tune_gamma_u(a, y, weights, basis.trace_vector, search, record.n, noise_var)
    if args.out in (None, "-"):
        sys.stdout.write("gamma,value\n")
        for g, v in zip(curve.gammas, curve.values):
            sys.stdout.write(f"{float(g)!r},{float(v)!r}\n")
    else:
        curve.write_csv(args.out)
    summary = args.summary or (None if args.out in (None, "-") else str(Path(args.out).with_suffix(".json")))
    if summary:
        curve.write_summary(summary)
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = exp.ExperimentConfig.load(args.config)
    if args.rounds is not None:
        config.rounds = args.rounds
    if args.params:
        config.state_params = args.params
    if args.n:
        config.n_list = args.n
    if args.output_dir:
        config.output_dir = args.output_dir
    if args.full:
        config.full = True
    config.validate()
    result = exp.run_experiment(config)
    errors = [r for r in result.rows if r.get("error")]
    paths = exp.emit(result, config.output_dir, args.format.split(","), full=config.full)
    for path in paths:
        logger.info("wrote %s", path)
    if errors:
        logger.warning("%d cells failed; see the 'error' field of the JSON output", len(errors))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tomolr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a measurement record")
    p.add_argument("--povm", help="POVM JSON file")
    p.add_argument("--state", help="density matrix JSON file")
    p.add_argument("--scenario", choices=["Werner36", "SixQubitUnder", "werner36", "six_qubit"])
    p.add_argument("--param", type=float, help="q or p of the canned scenario")
    p.add_argument("--num-qubits", type=int, default=6)
    p.add_argument("--num-projectors", type=int, default=200)
    p.add_argument("--povm-seed", type=int, default=0)
    p.add_argument("--save-povm", help="write the scenario POVM to this JSON file")
    p.add_argument("-n", type=int, required=True, help="copies (per effect in separate mode)")
    p.add_argument("--mode", choices=[SEPARATE, COLLECTIVE], default=SEPARATE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate the state from a record")
    p.add_argument("--povm", required=True)
    p.add_argument("--record", required=True)
    p.add_argument("--estimator", default="CWLS")
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps-clamp", type=float, default=EPS_CLAMP)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("tune", help="risk curve over gamma")
    p.add_argument("--povm", required=True)
    p.add_argument("--record", required=True)
    p.add_argument("--estimator", default="CRWLS")
    p.add_argument("--method", choices=["u", "R"], default="u", help="unbiased estimate (u) or oracle risk (R)")
    p.add_argument("--state", help="true state, needed for --method R")
    p.add_argument("--grid-points", type=int, default=61)
    p.add_argument("--gamma-max", type=float)
    p.add_argument("--eps-clamp", type=float, default=EPS_CLAMP)
    p.add_argument("-o", "--out", help="RiskCurve CSV")
    p.add_argument("--summary", help="RiskCurve JSON summary (default: next to the CSV)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("experiment", help="run a Monte-Carlo sweep from a JSON config")
    p.add_argument("config")
    p.add_argument("--rounds", type=int)
    p.add_argument("--q", "--p", dest="params", type=float, nargs="+", help="subset of state parameters")
    p.add_argument("--n", type=int, nargs="+", help="subset of sample sizes")
    p.add_argument("--output-dir")
    p.add_argument("--format", default="csv,json")
    p.add_argument("--full", action="store_true", help="include per-round arrays in the JSON")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"tomolr: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TomographyError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"tomolr: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"tomolr: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

if __name__ == "__main__":
    sys.exit(main())
