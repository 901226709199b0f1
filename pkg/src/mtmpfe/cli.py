"""Command-line front end.

Commands ``curve``, ``optimize``, ``sweep`` and ``validate`` share one JSON
configuration with sections market, collateral, risk, numerics, mc, mode and
output.  Any field can be overridden with a dotted flag such as
``--market.sigma 0.1``.  Missing sections fall back to the benchmark
contract.

Exit codes: 0 success, 1 validation gate failed, 2 bad configuration,
3 numerical convergence failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import mc_oracle, single_mtm, twice_mtm
from .model import (
    CollateralAgreement,
    Config,
    EvalMode,
    InvalidConfig,
    MarketModel,
    NumericsSpec,
    RiskSpec,
    Single,
    TwiceSimultaneous,
    validate_config,
)
from .numerics import BracketFailure, ConvergenceFailure

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

POLICY_KINDS = ("single", "twice-sim", "twice-seq")
SWEEP_PARAMS = {
    "T": ("market", "maturity"),
    "q": ("risk", "q"),
    "sigma": ("market", "sigma"),
    "v0": ("market", "v0"),
    "alpha": ("collateral", "alpha"),
    "beta": ("collateral", "beta"),
}
GATE_SE = 4.0

DEFAULTS: dict[str, Any] = {
    "market": {"v0": 1.0, "sigma": 0.2, "maturity": 24},
    "collateral": {"alpha": 0.9, "beta": 1.1},
    "risk": {"q": 0.05},
    "numerics": {"quad_rel_tol": 1e-8, "quad_trunc_sds": 8.0, "root_abs_tol": 1e-5},
    "mc": {"paths": 1_000_000, "seed": 0, "antithetic": True, "workers": 1},
    "mode": "paper",
    "output": {"path": None, "format": "csv"},
}


@dataclass(frozen=True)
class RunConfig:
    config: Config
    mc: mc_oracle.McSpec
    mode: EvalMode
    out_path: Optional[str] = None
    out_format: str = "csv"


# Configuration ------------------------------------------------------------


def _merge(base: dict, doc: dict) -> dict:
    merged = copy.deepcopy(base)
    bad = {}
    for section, body in doc.items():
        if section not in base:
            bad[section] = "unknown configuration section"
        elif isinstance(base[section], dict):
            if not isinstance(body, dict):
                bad[section] = "must be an object"
                continue
            for key, value in body.items():
                if key not in base[section]:
                    bad[f"{section}.{key}"] = "unknown key"
                else:
                    merged[section][key] = value
        else:
            merged[section] = body
    if bad:
        raise InvalidConfig(bad)
    return merged


def _parse_scalar(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(tokens: Sequence[str]) -> dict:
    """Turn ``--section.key value`` (or ``--section.key=value``) tokens into a nested dict."""
    doc: dict[str, Any] = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise InvalidConfig({tok: "unexpected argument"})
        name, eq, value = tok[2:].partition("=")
        if not eq:
            try:
                value = next(it)
            except StopIteration:
                raise InvalidConfig({name: "missing value"}) from None
        section, dot, key = name.partition(".")
        if dot:
            doc.setdefault(section, {})[key] = _parse_scalar(value)
        else:
            doc[section] = value
    return doc


def build_run_config(doc: dict) -> RunConfig:
    """Validate a merged configuration document into a RunConfig."""
    full = _merge(DEFAULTS, doc)
    m, c, r, n, mc, out = (full[k] for k in ("market", "collateral", "risk", "numerics", "mc", "output"))
    bad = {}
    try:
        mode = EvalMode.parse(full["mode"])
    except InvalidConfig as exc:
        bad.update(exc.violations)
        mode = EvalMode.PAPER_FACTORIZED
    if out["format"] not in ("csv", "json"):
        bad["output.format"] = f"must be csv or json, got {out['format']!r}"
    try:
        mc_spec = mc_oracle.McSpec(
            paths=int(mc["paths"]), seed=int(mc["seed"]),
            antithetic=bool(mc["antithetic"]), workers=int(mc["workers"]),
        )
    except (TypeError, ValueError) as exc:
        bad["mc"] = str(exc)
    try:
        cfg = validate_config(
            MarketModel(m["v0"], m["sigma"], m["maturity"]),
            CollateralAgreement(c["alpha"], c["beta"]),
            RiskSpec(r["q"]),
            NumericsSpec(**n),
        )
    except InvalidConfig as exc:
        bad.update(exc.violations)
    if bad:
        raise InvalidConfig(bad)
    return RunConfig(cfg, mc_spec, mode, out["path"], out["format"])


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    doc: dict = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig({"config": f"cannot read {path}: {exc}"}) from None
        if not isinstance(doc, dict):
            raise InvalidConfig({"config": "top level must be a JSON object"})
    merged = _merge(DEFAULTS, doc)
    merged = _merge(merged, overrides)
    return build_run_config(merged)


# Output -------------------------------------------------------------------


def fmt(x: Any) -> Any:
    """Six significant digits for floats; integers and strings pass through."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return float(f"{x:.6g}")
    return x


def _cell(x: Any) -> str:
    x = fmt(x)
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render(rows: Sequence[dict], columns: Sequence[str], fmt_name: str, extra: Optional[dict] = None) -> str:
    if fmt_name == "json":
        doc = {"rows": [{k: fmt(r.get(k)) for k in columns} for r in rows]}
        if extra:
            doc.update({k: _jsonable(v) for k, v in extra.items()})
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(k)) for k in columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return fmt(v)


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# Commands -----------------------------------------------------------------


def _optimize(rc: RunConfig, kind: str):
    cfg, mode = rc.config, rc.mode
    if kind == "single":
        return single_mtm.optimize_single(cfg, mode)
    if kind == "twice-sim":
        return twice_mtm.optimize_simultaneous(cfg, mode)
    return twice_mtm.optimize_sequential(cfg, mode)


CURVE_COLUMNS = {
    "single": ["tau", "pfe", "achieved_q"],
    "twice-sim": ["tau1", "tau2", "pfe", "achieved_q"],
    "twice-seq": ["tau1", "epfe"],
}


def cmd_curve(rc: RunConfig, kind: str) -> int:
    res = _optimize(rc, kind)
    _emit(render(res.curve, CURVE_COLUMNS[kind], rc.out_format), rc.out_path)
    return EXIT_OK


def _result_row(kind: str, res) -> dict:
    if kind == "single":
        return {"tau": res.times[0], "pfe": res.pfe, "achieved_q": res.achieved_q}
    if kind == "twice-sim":
        return {"tau1": res.times[0], "tau2": res.times[1], "pfe": res.pfe, "achieved_q": res.achieved_q}
    return {"tau1": res.times[0], "epfe": res.pfe}


POLICY_COLUMNS = ["x", "y_a", "tau2_star", "y_b_star"]


def cmd_optimize(rc: RunConfig, kind: str) -> int:
    res = _optimize(rc, kind)
    row = _result_row(kind, res)
    cols = list(row)
    extra = {"mode": res.mode.value}
    if res.policy is not None and rc.out_format == "json":
        extra["policy"] = [{k: getattr(nd, k) for k in POLICY_COLUMNS} for nd in res.policy.nodes]
    _emit(render([row], cols, rc.out_format, extra if rc.out_format == "json" else None), rc.out_path)
    if res.policy is not None and rc.out_format == "csv" and rc.out_path:
        # CSV holds one table per file; the decision table goes next to the result.
        out = Path(rc.out_path)
        table = [{k: getattr(nd, k) for k in POLICY_COLUMNS} for nd in res.policy.nodes]
        out.with_name(out.stem + "_policy" + out.suffix).write_text(render(table, POLICY_COLUMNS, "csv"))
    summary = " ".join(f"{k}={_cell(v)}" for k, v in row.items())
    print(f"optimize {kind} [{res.mode.value}]: {summary}", file=sys.stderr)
    return EXIT_OK


def _with_param(doc_cfg: Config, param: str, value) -> Config:
    section, key = SWEEP_PARAMS[param]
    m, c, r = doc_cfg.market, doc_cfg.collateral, doc_cfg.risk
    if section == "market":
        m = replace(m, **{key: value})
    elif section == "collateral":
        c = replace(c, **{key: value})
    else:
        r = replace(r, **{key: value})
    return validate_config(m, replace(c, c0=None), r, doc_cfg.numerics)


def cmd_sweep(rc: RunConfig, kind: str, param: str, values: Sequence) -> int:
    if param not in SWEEP_PARAMS:
        raise InvalidConfig({"param": f"must be one of {sorted(SWEEP_PARAMS)}, got {param!r}"})
    rows, ok = [], 0
    worst = EXIT_OK
    for text in values:
        row: dict[str, Any] = {"value": text}
        try:
            v = _parse_scalar(text)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise InvalidConfig({param: f"not a number: {text!r}"})
            row["value"] = v
            cfg = _with_param(rc.config, param, v)
            res = _optimize(replace(rc, config=cfg), kind)
            row.update(_result_row(kind, res))
            ok += 1
        except InvalidConfig as exc:
            row["error"] = "; ".join(f"{k}: {m}" for k, m in exc.violations.items())
            worst = max(worst, EXIT_CONFIG)
        except (ConvergenceFailure, BracketFailure) as exc:
            row["error"] = f"convergence failure: {exc}"
            worst = max(worst, EXIT_NUMERIC)
        if "error" in row:
            print(f"sweep {param}={text}: {row['error']}", file=sys.stderr)
        if "tau" in row:
            row["tau_star"] = row.pop("tau")
        rows.append(row)
    cols = ["value"] + [("tau_star" if c == "tau" else c) for c in CURVE_COLUMNS[kind]] + ["error"]
    _emit(render(rows, cols, rc.out_format), rc.out_path)
    return EXIT_OK if ok else worst


# Validation ---------------------------------------------------------------

VALIDATE_COLUMNS = [
    "quantity", "tau1", "tau2", "y", "analytic", "mc", "std_error", "z", "gated", "result", "paper_minus_exact",
]


@dataclass
class ValidationReport:
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r["result"] != "fail" for r in self.rows)

    @property
    def max_paper_discrepancy(self) -> float:
        d = [abs(r["paper_minus_exact"]) for r in self.rows if r.get("paper_minus_exact") is not None]
        return max(d) if d else 0.0


def _compare(quantity, tau1, tau2, y, analytic, est: mc_oracle.McEstimate, gated=True, discrepancy=None) -> dict:
    diff = analytic - est.value
    if est.std_error > 0:
        z = diff / est.std_error
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    result = ("pass" if abs(z) <= GATE_SE else "fail") if gated else "info"
    return {
        "quantity": quantity, "tau1": tau1, "tau2": tau2, "y": y, "analytic": analytic,
        "mc": est.value, "std_error": est.std_error, "z": z, "gated": gated, "result": result,
        "paper_minus_exact": discrepancy,
    }


def run_validation(
    cfg: Config,
    kind: str,
    taus: Sequence,
    ys: Sequence[float],
    mc: mc_oracle.McSpec,
    analytic_cfg: Optional[Config] = None,
) -> ValidationReport:
    """Compare analytic probabilities and PFEs against the Monte Carlo oracle.

    ``cfg`` drives the simulation and ``analytic_cfg`` (default: the same)
    the closed forms, so a deliberately perturbed analytic side can be used
    to check that the gate bites.  ExactConditional comparisons are gated at
    four standard errors; PaperFactorized values are reported with their
    discrepancy from the exact value but never gated.
    """
    acfg = cfg if analytic_cfg is None else analytic_cfg
    exact, paper = EvalMode.EXACT_CONDITIONAL, EvalMode.PAPER_FACTORIZED
    report = ValidationReport()
    for tau in taus:
        if kind == "single":
            policy = Single(int(tau))
            t1, t2 = int(tau), None
        elif kind == "twice-sim":
            t1, t2 = (int(t) for t in tau)
            policy = TwiceSimultaneous(t1, t2)
        else:
            raise InvalidConfig({"policy": "validate supports single and twice-sim policies"})
        sample = mc_oracle.simulate_paths(cfg, policy, mc)
        for y in ys:
            y = float(y)
            if kind == "single":
                split = single_mtm.scenario_split(acfg, t1, y)
                events = mc_oracle.component_events(cfg, sample, y)
                analytic = {
                    "no_call": split.p_no_call,
                    "pre_ok_no_call": split.pre_ok_no_call,
                    "post_ok_no_call": split.post_ok_no_call,
                    "pre_ok_call": split.pre_ok_call,
                    "post_ok_call": split.post_ok_call,
                }
                for name in mc_oracle.COMPONENTS:
                    est = mc_oracle._frequency(events[name], sample.pair)
                    report.rows.append(_compare(name, t1, t2, y, analytic[name], est))
                q_exact = single_mtm.exceed_prob_single(acfg, t1, y, exact)
                q_paper = single_mtm.exceed_prob_single(acfg, t1, y, paper)
            else:
                q_exact = twice_mtm.exceed_prob_twice(acfg, t1, t2, y, exact)
                q_paper = twice_mtm.exceed_prob_twice(acfg, t1, t2, y, paper)
            est = mc_oracle.estimate_exceed_prob(cfg, policy, y, mc, sample=sample)
            report.rows.append(_compare("exceed_prob_exact", t1, t2, y, q_exact, est))
            report.rows.append(
                _compare("exceed_prob_paper", t1, t2, y, q_paper, est, gated=False, discrepancy=q_paper - q_exact)
            )
        est = mc_oracle.estimate_pfe(cfg, policy, acfg.q, mc, sample=sample)
        if kind == "single":
            pfe_exact = single_mtm.pfe_single(acfg, t1, exact)
            pfe_paper = single_mtm.pfe_single(acfg, t1, paper)
        else:
            pfe_exact = twice_mtm.pfe_twice(acfg, t1, t2, exact)
            pfe_paper = twice_mtm.pfe_twice(acfg, t1, t2, paper)
        report.rows.append(_compare("pfe_exact", t1, t2, None, pfe_exact, est))
        report.rows.append(
            _compare("pfe_paper", t1, t2, None, pfe_paper, est, gated=False, discrepancy=pfe_paper - pfe_exact)
        )
    return report


def cmd_validate(rc: RunConfig, kind: str, taus: Sequence, ys: Sequence[float]) -> int:
    report = run_validation(rc.config, kind, taus, ys, rc.mc)
    n_gated = sum(r["gated"] for r in report.rows)
    n_fail = sum(r["result"] == "fail" for r in report.rows)
    summary = {
        "gated": n_gated,
        "failed": n_fail,
        "passed": report.passed,
        "max_abs_paper_minus_exact": report.max_paper_discrepancy,
        "paths": rc.mc.paths,
        "seed": rc.mc.seed,
    }
    _emit(render(report.rows, VALIDATE_COLUMNS, rc.out_format, summary if rc.out_format == "json" else None), rc.out_path)
    print(
        f"validate {kind}: {n_gated - n_fail}/{n_gated} gated comparisons pass at {GATE_SE:g} SE; "
        f"max |paper - exact| = {_cell(report.max_paper_discrepancy)}",
        file=sys.stderr,
    )
    return EXIT_OK if report.passed else EXIT_GATE


# Entry point --------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _tau_list(text: str) -> list:
    out = []
    for t in text.split(","):
        t = t.strip()
        if not t:
            continue
        out.append(tuple(int(s) for s in t.split(":")) if ":" in t else int(t))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mtmpfe",
        description="PFE of a collateralized contract and optimal MTM timing.",
        epilog="Any configuration field can be overridden with --section.key VALUE, e.g. --market.sigma 0.1.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--mode", choices=["paper", "exact"], help="probability composition mode")
        sp.add_argument("--format", choices=["csv", "json"], help="output format")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--policy", choices=POLICY_KINDS, default="single", help="MTM policy kind")

    common(sub.add_parser("curve", help="PFE for every candidate MTM day (or pair)"))
    common(sub.add_parser("optimize", help="optimal MTM day(s) and their PFE"))
    sw = sub.add_parser("sweep", help="optimize once per value of one parameter")
    common(sw)
    sw.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    sw.add_argument("--values", required=True, help="comma-separated values")
    va = sub.add_parser("validate", help="check analytic values against Monte Carlo")
    common(va)
    va.add_argument("--paths", type=int, help="Monte Carlo paths")
    va.add_argument("--seed", type=int, help="Monte Carlo seed")
    va.add_argument("--taus", default="5,10,15", help="MTM days; pairs as tau1:tau2 for twice-sim")
    va.add_argument("--ys", default="1.0,1.3602,1.8", help="risk-appetite levels y")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    try:
        doc = parse_overrides(rest)
        if args.mode:
            doc["mode"] = args.mode
        if args.format:
            doc.setdefault("output", {})["format"] = args.format
        if args.out:
            doc.setdefault("output", {})["path"] = args.out
        if args.command == "validate":
            if args.paths is not None:
                doc.setdefault("mc", {})["paths"] = args.paths
            if args.seed is not None:
                doc.setdefault("mc", {})["seed"] = args.seed
        rc = load_config(args.config, doc)
        if args.command == "curve":
            return cmd_curve(rc, args.policy)
        if args.command == "optimize":
            return cmd_optimize(rc, args.policy)
        if args.command == "sweep":
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            return cmd_sweep(rc, args.policy, args.param, values)
        try:
            taus, ys = _tau_list(args.taus), _float_list(args.ys)
        except ValueError as exc:
            raise InvalidConfig({"taus/ys": str(exc)}) from None
        return cmd_validate(rc, args.policy, taus, ys)
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceFailure, BracketFailure) as exc:
        print(f"error: numerical convergence failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
