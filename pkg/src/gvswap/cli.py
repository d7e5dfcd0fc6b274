"""
Command-line entry point: ``gvswap {estimate,price,simulate,pipeline}``.

Reports are JSON documents with a fixed key order.  Apart from
``timestamp`` the output is a pure function of the flags and input files.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .contracts import Measure, SwapContract
from .eigen_swap import Sense, price_eigen
from .errors import ConfigurationError, GVSwapError, ParseError
from .markov_engine import ExpectationMode, derive_generator, resolve_initial
from .mc_oracle import SimulationConfig, mc_expected_covariance, mc_swap_price
from .regime_covariance import (
    ExpectedCovariance,
    assemble_expected_covariance,
    estimate_regime_covariance,
)
from .regime_inference import (
    IngestConfig,
    TransitionModel,
    classify_states,
    compute_returns,
    estimate_transition,
    load_price_csv,
)
from .trace_swap import price_trace

log = logging.getLogger(__name__)

SEED_ENV = "GVSWAP_SEED"

REPORT_FIELDS = (
    "transition_matrix",
    "transition_std_err",
    "stationary",
    "regime_covariance",
    "expected_covariance",
    "trace_price",
    "eigen_price",
    "weights",
    "objective",
    "mode",
    "discount_factor",
    "seed",
    "timestamp",
)


@dataclass
class RunConfig:
    input: Path | None = None
    assets: tuple[str, ...] | None = None
    maturity_days: int = 63
    daily_rate: float = 0.0004
    trace_strike: float = 90.0
    eigen_strike: float = 30.0
    notional_units: float = 1e6
    target_return: float | None = None
    mode: str = "one-step"
    initial: Any = None
    seed: int = 0
    output: Path | None = None
    expected_cov: Path | None = None
    counts: Path | None = None
    means: tuple[float, ...] | None = None
    sense: str = "max"
    returns: str = "simple"
    center: str = "state"
    paths: int = 0
    workers: int = 1
    measures: tuple[str, ...] = field(default=("trace", "max-eigen"))

    def validate(self) -> None:
        if self.input is None and self.expected_cov is None:
            raise ConfigurationError("either --input or --expected-cov is required")
        ExpectationMode.parse(self.mode)
        Sense.parse(self.sense)


def read_matrix(path: str | Path) -> np.ndarray:
    """Plain-text matrix: one row per line, whitespace-separated decimals."""
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                rows.append([float(x) for x in text.split()])
            except ValueError:
                raise ParseError(f"non-numeric entry in {path}", line=line_no) from None
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ParseError(f"{path}: matrix rows are empty or ragged")
    return np.array(rows)


def parse_initial(text: str | None):
    if text is None or text.strip().lower() == "stationary":
        return None
    text = text.strip()
    if text.lower().startswith("state:"):
        return text
    if text.lower().startswith("vector:"):
        text = text.split(":", 1)[1]
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise ConfigurationError(f"cannot parse initial distribution {text!r}") from None


def _matrix_list(mat) -> list:
    return np.asarray(mat, dtype=float).tolist()


def _estimate(config: RunConfig) -> dict:
    panel = load_price_csv(config.input, IngestConfig(assets=config.assets))
    series = compute_returns(panel, config.returns)
    labeling = classify_states(series)
    model = estimate_transition(labeling)
    cov = estimate_regime_covariance(series, labeling, config.center)
    return {"panel": panel, "series": series, "labeling": labeling, "model": model, "cov": cov}


def _model_section(model: TransitionModel | None) -> dict:
    if model is None:
        return {"transition_matrix": None, "transition_std_err": None, "stationary": None}
    return {
        "transition_matrix": _matrix_list(model.pi),
        "transition_std_err": _matrix_list(model.std_err),
        "stationary": model.stationary.tolist(),
    }


def run_pipeline(config: RunConfig) -> dict:
    """Estimate (or load) the model, then price both swaps."""
    config.validate()
    mode = ExpectationMode.parse(config.mode)
    sense = Sense.parse(config.sense)
    trace_contract = SwapContract(config.maturity_days, config.daily_rate, config.trace_strike, Measure.TRACE, config.notional_units)
    eigen_contract = SwapContract(config.maturity_days, config.daily_rate, config.eigen_strike, Measure.MAX_EIGEN, config.notional_units)

    model = cov = gen = None
    means = np.asarray(config.means, dtype=float) if config.means else None
    asset_names = None
    if config.input is not None:
        est = _estimate(config)
        model, cov = est["model"], est["cov"]
        asset_names = list(est["series"].asset_names)
        if means is None:
            means = est["series"].means
    elif config.counts is not None:
        model = TransitionModel.from_counts(read_matrix(config.counts))

    if config.expected_cov is not None:
        initial = resolve_initial(model, config.initial) if model is not None else None
        expected = ExpectedCovariance.from_matrix(read_matrix(config.expected_cov), trace_contract, mode, initial)
    else:
        if mode is ExpectationMode.GENERATOR:
            gen = derive_generator(model)
        expected = assemble_expected_covariance(cov, model, gen, trace_contract, mode, config.initial)

    trace = price_trace(expected, trace_contract)
    report: dict[str, Any] = {}
    report.update(_model_section(model))
    report["regime_covariance"] = (
        {s.label: _matrix_list(cov.per_state[s]) for s in model.states} if cov is not None else None
    )
    report["expected_covariance"] = _matrix_list(expected.matrix)
    report["trace_price"] = trace.price
    eigen = None
    if config.target_return is not None:
        if means is None:
            raise ConfigurationError("eigen pricing needs --means when no price file is given")
        eigen = price_eigen(expected, means, config.target_return, eigen_contract, sense)
        report["eigen_price"] = eigen.price
        report["weights"] = eigen.diagnostics["weights"]
        report["objective"] = eigen.gross_leg
    else:
        report["eigen_price"] = report["weights"] = report["objective"] = None
    report["mode"] = mode.value
    report["discount_factor"] = trace_contract.discount_factor
    report["seed"] = config.seed
    report["timestamp"] = None

    report["states"] = [s.label for s in model.states] if model is not None else None
    report["transition_counts"] = model.counts.tolist() if model is not None else None
    report["generator_source"] = gen.source.value if gen is not None else None
    report["assets"] = asset_names
    report["means"] = means.tolist() if means is not None else None
    report["target_return"] = config.target_return
    report["initial"] = expected.initial.tolist()
    report["contract"] = {
        "maturity_days": config.maturity_days,
        "daily_rate": config.daily_rate,
        "notional_units": config.notional_units,
        "trace_strike": config.trace_strike,
        "eigen_strike": config.eigen_strike,
    }
    report["trace"] = {"gross_leg": trace.gross_leg, "discounted_strike": trace.discounted_strike}
    if eigen is not None:
        d = eigen.diagnostics
        report["eigen"] = {
            "gross_leg": eigen.gross_leg,
            "discounted_strike": eigen.discounted_strike,
            "omega_w": d["omega_w"],
            "q": d["q"],
            "r": d["r"],
            "lambda_multiplier": d["lambda_multiplier"],
            "branch": d["branch"],
            "sense": d["sense"],
        }

    if config.paths > 0:
        if cov is None:
            raise ConfigurationError("Monte Carlo needs per-state covariances (use --input)")
        sim = SimulationConfig(config.paths, config.maturity_days, config.seed, initial=config.initial, n_workers=config.workers)
        mc = {}
        t = mc_swap_price(Measure.TRACE, cov, model, trace_contract, sim, gen=gen)
        mc["trace_price"] = t.price
        mc["trace_std_err"] = t.std_err
        if eigen is not None:
            e = mc_swap_price(Measure.MAX_EIGEN, cov, model, eigen_contract, sim, means, config.target_return, gen, sense)
            mc["eigen_price"] = e.price
            mc["eigen_std_err"] = e.std_err
            mc["jensen_gap"] = e.jensen_gap
        mc["n_paths"] = config.paths
        report["monte_carlo"] = mc
    return report


def run_estimate(config: RunConfig) -> dict:
    est = _estimate(config)
    model, cov, series = est["model"], est["cov"], est["series"]
    report = _model_section(model)
    report["regime_covariance"] = {s.label: _matrix_list(cov.per_state[s]) for s in model.states}
    report["states"] = [s.label for s in model.states]
    report["transition_counts"] = model.counts.tolist()
    report["state_counts"] = {s.label: n for s, n in est["labeling"].state_counts.items()}
    report["assets"] = list(series.asset_names)
    report["means"] = series.means.tolist()
    report["seed"] = config.seed
    report["timestamp"] = None
    return report


def run_simulate(config: RunConfig) -> dict:
    if config.input is None:
        raise ConfigurationError("simulate needs --input")
    if config.paths < 1:
        raise ConfigurationError("simulate needs --paths >= 1")
    est = _estimate(config)
    model, cov, series = est["model"], est["cov"], est["series"]
    mode = ExpectationMode.parse(config.mode)
    gen = derive_generator(model) if mode is ExpectationMode.GENERATOR else None
    contract = SwapContract(config.maturity_days, config.daily_rate, config.trace_strike, Measure.TRACE, config.notional_units)
    sim = SimulationConfig(config.paths, config.maturity_days, config.seed, initial=config.initial, n_workers=config.workers)
    estimate = mc_expected_covariance(cov, model, contract, sim, gen)
    trace = mc_swap_price(Measure.TRACE, cov, model, contract, sim, gen=gen)
    report = _model_section(model)
    report["expected_covariance"] = _matrix_list(estimate.mean)
    report["expected_covariance_std_err"] = _matrix_list(estimate.std_err)
    report["trace_price"] = trace.price
    report["trace_std_err"] = trace.std_err
    if config.target_return is not None:
        means = np.asarray(config.means, dtype=float) if config.means else series.means
        eigen_contract = SwapContract(config.maturity_days, config.daily_rate, config.eigen_strike, Measure.MAX_EIGEN, config.notional_units)
        eig = mc_swap_price(Measure.MAX_EIGEN, cov, model, eigen_contract, sim, means, config.target_return, gen, config.sense)
        report["eigen_price"] = eig.price
        report["eigen_std_err"] = eig.std_err
        report["weights"] = eig.weights.tolist()
        report["jensen_gap"] = eig.jensen_gap
    report["mode"] = mode.value
    report["discount_factor"] = contract.discount_factor
    report["n_paths"] = config.paths
    report["seed"] = config.seed
    report["timestamp"] = None
    return report


def run_price(config: RunConfig, measure: Measure) -> dict:
    report = run_pipeline(config)
    drop = ("eigen_price", "weights", "objective", "eigen") if measure is Measure.TRACE else ("trace_price", "trace")
    return {k: v for k, v in report.items() if k not in drop}


def reprice_report(report: dict) -> tuple[float, float | None]:
    """Re-price both swaps from the numbers stored in a pipeline report."""
    c = report["contract"]
    trace_contract = SwapContract(c["maturity_days"], c["daily_rate"], c["trace_strike"], Measure.TRACE, c["notional_units"])
    expected = ExpectedCovariance.from_matrix(report["expected_covariance"], trace_contract)
    trace = price_trace(expected, trace_contract).price
    eigen = None
    if report.get("eigen_price") is not None:
        eigen_contract = SwapContract(c["maturity_days"], c["daily_rate"], c["eigen_strike"], Measure.MAX_EIGEN, c["notional_units"])
        sense = report.get("eigen", {}).get("sense", "max")
        eigen = price_eigen(expected, report["means"], report["target_return"], eigen_contract, sense).price
    return trace, eigen


def emit_report(results: dict, path: str | Path | None) -> str:
    """Serialise ``results`` (stamping the time) and write it to ``path`` or stdout."""
    doc = dict(results)
    doc["timestamp"] = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _error_module(exc: BaseException) -> str:
    module = "cli"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith(__package__ + "."):
            module = name.rsplit(".", 1)[-1]
        tb = tb.tb_next
    return module


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", type=Path, help="CSV of daily closes: date,<asset1>,<asset2>,...")
    p.add_argument("--assets", help="comma-separated asset columns to use")
    p.add_argument("--returns", choices=["simple", "log"], default="simple")
    p.add_argument("--center", choices=["state", "grand"], default="state", help="covariance centering")
    p.add_argument("--seed", type=int, default=None, help=f"base seed (default ${SEED_ENV} or 0)")
    p.add_argument("--output", "-o", default="-", help="report path ('-' for stdout)")
    p.add_argument("--log-level", default="WARNING")


def _add_pricing(p: argparse.ArgumentParser) -> None:
    p.add_argument("--maturity", type=int, default=63, help="T in trading days")
    p.add_argument("--rate", type=float, default=0.0004, help="daily rate r")
    p.add_argument("--notional", type=float, default=1e6)
    p.add_argument("--target-return", type=float, default=None, help="k for the max-eigen swap")
    p.add_argument("--mode", choices=["one-step", "generator"], default="one-step")
    p.add_argument("--initial", default="stationary", help="stationary | state:<name> | vector:p1,p2,...")
    p.add_argument("--expected-cov", type=Path, help="matrix file injecting the expected covariance (points of 1e-6)")
    p.add_argument("--counts", type=Path, help="matrix file of transition counts (with --expected-cov)")
    p.add_argument("--means", help="comma-separated mean returns (overrides the data)")
    p.add_argument("--sense", choices=["max", "min"], default="max")
    p.add_argument("--paths", type=int, default=0, help="Monte Carlo paths (0 disables)")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gvswap", description="Generalised-variance swap pricing under regime switching")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the regime model from prices")
    _add_common(p)

    price = sub.add_parser("price", help="price one swap")
    price_sub = price.add_subparsers(dest="measure", required=True)
    for name, strike in (("trace", 90.0), ("eigen", 30.0)):
        p = price_sub.add_parser(name)
        _add_common(p)
        _add_pricing(p)
        p.add_argument("--strike", type=float, default=strike)

    p = sub.add_parser("simulate", help="Monte Carlo estimates of the expected covariance and prices")
    _add_common(p)
    _add_pricing(p)
    p.add_argument("--trace-strike", type=float, default=90.0)
    p.add_argument("--eigen-strike", type=float, default=30.0)

    p = sub.add_parser("pipeline", help="estimate, then price both swaps")
    _add_common(p)
    _add_pricing(p)
    p.add_argument("--trace-strike", type=float, default=90.0)
    p.add_argument("--eigen-strike", type=float, default=30.0)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, "0"))
    cfg = RunConfig(
        input=args.input,
        assets=tuple(a.strip() for a in args.assets.split(",")) if args.assets else None,
        returns=args.returns,
        center=args.center,
        seed=seed,
        output=args.output,
    )
    if hasattr(args, "maturity"):
        cfg.maturity_days = args.maturity
        cfg.daily_rate = args.rate
        cfg.notional_units = args.notional
        cfg.target_return = args.target_return
        cfg.mode = args.mode
        cfg.initial = parse_initial(args.initial)
        cfg.expected_cov = args.expected_cov
        cfg.counts = args.counts
        cfg.means = tuple(float(x) for x in args.means.split(",")) if args.means else None
        cfg.sense = args.sense
        cfg.paths = args.paths
        cfg.workers = args.workers
    if hasattr(args, "strike"):
        if args.measure == "trace":
            cfg.trace_strike = args.strike
        else:
            cfg.eigen_strike = args.strike
    if hasattr(args, "trace_strike"):
        cfg.trace_strike = args.trace_strike
        cfg.eigen_strike = args.eigen_strike
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING), format="%(levelname)s | %(message)s")
    output = args.output
    try:
        config = config_from_args(args)
        if args.command == "estimate":
            report = run_estimate(config)
        elif args.command == "price":
            if args.measure == "eigen" and config.target_return is None:
                raise ConfigurationError("price eigen needs --target-return")
            report = run_price(config, Measure.TRACE if args.measure == "trace" else Measure.MAX_EIGEN)
        elif args.command == "simulate":
            report = run_simulate(config)
        else:
            report = run_pipeline(config)
    except (GVSwapError, OSError, ValueError) as exc:
        log.debug("run failed", exc_info=True)
        err = {"error": {"module": _error_module(exc), "type": type(exc).__name__, "message": str(exc)}, "timestamp": None}
        try:
            emit_report(err, output)
        except OSError:
            sys.stdout.write(json.dumps(err) + "\n")
        return 1
    try:
        emit_report(report, output)
    except OSError as exc:
        sys.stderr.write(f"gvswap: cannot write report: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
