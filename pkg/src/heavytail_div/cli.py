"""Command-line front end.

    heavytail-div <constants|simulate|divindex|converge|extrapolate|check>
                  [--config cfg.json] [--seed N] [--threads K] [--out DIR] [overrides]

Exit codes: 0 success, 2 invalid configuration or arguments, 3 capability
gap or degenerate rate.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

from .aggregate import aggregation_constants, extrapolate_div_index, first_order_limit
from .empirical import MC_TAIL_FLOOR, convergence_table, div_index, verify_assumptions
from .errors import AccuracyError, CapabilityError, ConfigError
from .measures import CONVENTIONS
from .models import ModelSpec, model_from_dict, model_to_dict, resolve_threads, sample

EXIT_OK, EXIT_CONFIG, EXIT_CAPABILITY = 0, 2, 3


@dataclass
class Tolerances:
    quadrature_rel: float = 1e-8
    mc_sigma: float = 4.0


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    d: Optional[int] = None
    beta_levels: List[float] = field(default_factory=lambda: [0.99, 0.999])
    gamma_grid: List[float] = field(default_factory=lambda: [1e-4, 1e-5, 1e-6, 1e-7, 1e-8])
    x: float = 2.0
    n: int = 1_000_000
    seed: int = 42
    mode: str = "exact"
    output_dir: str = "."
    tolerances: Tolerances = field(default_factory=Tolerances)
    form: str = "raw"
    convention: str = "paper"
    anchors: List[float] = field(default_factory=lambda: [0.90, 0.95])
    target: float = 0.99
    anchor_values: Optional[List[float]] = None
    rho_over_alpha: Optional[float] = None
    threads: Optional[int] = None

    def validate(self) -> "RunConfig":
        if not self.model:
            raise ConfigError("a model is required", "model")
        try:
            built = model_from_dict(self.model)
        except ValueError as exc:
            raise ConfigError(str(exc), "model") from exc
        if self.d is not None and (not _is_int(self.d) or self.d != built.d):
            raise ConfigError(f"must equal the model dimension {built.d}", "d")
        _check_levels(self.beta_levels, "beta_levels")
        _check_levels(self.gamma_grid, "gamma_grid")
        if any(b >= a for a, b in zip(self.gamma_grid, self.gamma_grid[1:])):
            raise ConfigError("must be strictly decreasing", "gamma_grid")
        if not _is_num(self.x) or self.x <= 0:
            raise ConfigError("must be a positive number", "x")
        if not _is_int(self.n) or self.n < 1:
            raise ConfigError("must be a positive integer", "n")
        if not _is_int(self.seed) or not 0 <= self.seed < 2**64:
            raise ConfigError("must be an integer in [0, 2^64)", "seed")
        if self.mode not in ("exact", "monte_carlo"):
            raise ConfigError("must be 'exact' or 'monte_carlo'", "mode")
        if self.form not in ("raw", "display"):
            raise ConfigError("must be 'raw' or 'display'", "form")
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"must be one of {list(CONVENTIONS)}", "convention")
        t = self.tolerances
        if not _is_num(t.quadrature_rel) or not 0 < t.quadrature_rel < 1:
            raise ConfigError("must lie in (0, 1)", "tolerances.quadrature_rel")
        if not _is_num(t.mc_sigma) or t.mc_sigma <= 0:
            raise ConfigError("must be positive", "tolerances.mc_sigma")
        _check_levels(self.anchors, "anchors")
        if len(self.anchors) != 2 or not self.anchors[0] < self.anchors[1]:
            raise ConfigError("must be two increasing levels", "anchors")
        if not _is_num(self.target) or not 0 < self.target < 1:
            raise ConfigError("must lie in (0, 1)", "target")
        if self.anchor_values is not None and (
            len(self.anchor_values) != 2 or not all(_is_num(v) for v in self.anchor_values)
        ):
            raise ConfigError("must be two numbers", "anchor_values")
        if self.rho_over_alpha is not None and not _is_num(self.rho_over_alpha):
            raise ConfigError("must be a number", "rho_over_alpha")
        if self.threads is not None and (not _is_int(self.threads) or self.threads < 1):
            raise ConfigError("must be a positive integer", "threads")
        return self

    def build_model(self) -> ModelSpec:
        return model_from_dict(self.model)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_levels(vals, name):
    if not isinstance(vals, list) or not vals:
        raise ConfigError("must be a non-empty list", name)
    for i, v in enumerate(vals):
        if not _is_num(v) or not 0 < v < 1:
            raise ConfigError(f"entry {i} ({v!r}) must lie in (0, 1)", name)


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "config") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", "config") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", "config")
    return doc


def config_from_dict(doc: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", sorted(unknown)[0])
    doc = dict(doc)
    tol = doc.pop("tolerances", {})
    if not isinstance(tol, dict):
        raise ConfigError("must be an object", "tolerances")
    tknown = {f.name for f in fields(Tolerances)}
    bad = set(tol) - tknown
    if bad:
        raise ConfigError(f"unknown keys {sorted(bad)}", "tolerances")
    if "n" in doc and isinstance(doc["n"], float) and doc["n"].is_integer():
        doc["n"] = int(doc["n"])
    return RunConfig(**doc, tolerances=Tolerances(**tol)).validate()


# ---------------------------------------------------------------------------
# commands


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _g(v) -> str:
    return "" if v is None else f"{v:.17g}"


def cmd_constants(cfg: RunConfig) -> int:
    model = cfg.build_model()
    c = aggregation_constants(model, convention=cfg.convention, rel=cfg.tolerances.quadrature_rel)
    _write_json(_out(cfg) / "constants.json", c.to_dict())
    for key in ("nu_gamma_d", "nu_gamma_1", "c_d", "c_1", "C", "K_d"):
        val = getattr(c, key)
        print(f"{key:>12}  {'-' if val is None else f'{val:.10g}'}")
    print(f"{'degenerate':>12}  {c.degenerate_rate}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    model = cfg.build_model()
    s = sample(model, cfg.n, cfg.seed, cfg.threads)
    out = _out(cfg)
    s.write(out / "samples.csv", out / "meta.json")
    print(f"wrote {s.n} x {s.d} samples to {out / 'samples.csv'}")
    return EXIT_OK


def cmd_divindex(cfg: RunConfig) -> int:
    model = cfg.build_model()
    K = first_order_limit(model, rel=cfg.tolerances.quadrature_rel)
    rows = []
    for beta in cfg.beta_levels:
        if cfg.mode == "monte_carlo" and (1 - beta) * cfg.n < MC_TAIL_FLOOR:
            raise ConfigError(
                f"beta={beta} with n={cfg.n} gives fewer than the floor of {MC_TAIL_FLOOR} expected exceedances",
                "n",
            )
        r = div_index(model, beta, cfg.mode, cfg.n, cfg.seed, cfg.threads)
        rows.append([_g(beta), _g(r.value), _g(r.ci_lower), _g(r.ci_upper), _g(K), _g(r.value - K)])
    path = _out(cfg) / "divindex.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "D", "ci_lower", "ci_upper", "K_d", "gap"])
        w.writerows(rows)
    for r in rows:
        print(",".join(r))
    return EXIT_OK


def cmd_converge(cfg: RunConfig) -> int:
    model = cfg.build_model()
    tab = convergence_table(model, cfg.gamma_grid, cfg.x, cfg.mode, cfg.n, cfg.seed, cfg.form, cfg.convention,
                            cfg.threads)
    out = _out(cfg)
    (out / "converge.csv").write_text(tab.to_csv())
    summary = tab.summary()
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_extrapolate(cfg: RunConfig) -> int:
    model = cfg.build_model()
    lo, hi = cfg.anchors
    if cfg.rho_over_alpha is not None:
        roa = cfg.rho_over_alpha
    else:
        roa = aggregation_constants(model, convention=cfg.convention, rel=cfg.tolerances.quadrature_rel).rho_over_alpha
    if cfg.anchor_values is not None:
        d_lo, d_hi = cfg.anchor_values
    else:
        d_lo = div_index(model, lo, cfg.mode, cfg.n, cfg.seed, cfg.threads).value
        d_hi = div_index(model, hi, cfg.mode, cfg.n, cfg.seed, cfg.threads).value
    pred = extrapolate_div_index(d_lo, d_hi, lo, hi, roa, cfg.target)
    result = {"anchors": [lo, hi], "anchor_values": [d_lo, d_hi], "rho_over_alpha": roa, "target": cfg.target,
              "predicted": pred}
    try:
        exact = div_index(model, cfg.target, "exact").value
        result.update(exact=exact, abs_error=abs(pred - exact))
    except CapabilityError:
        pass
    _write_json(_out(cfg) / "extrapolate.json", result)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    model = cfg.build_model()
    rep = verify_assumptions(model)
    doc = rep.to_dict()
    doc["model"] = model_to_dict(model)
    _write_json(_out(cfg) / "check.json", doc)
    print(json.dumps(doc, indent=2, default=str))
    return EXIT_OK if rep.passed() else EXIT_CAPABILITY


COMMANDS = {
    "constants": cmd_constants,
    "simulate": cmd_simulate,
    "divindex": cmd_divindex,
    "converge": cmd_converge,
    "extrapolate": cmd_extrapolate,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heavytail-div", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker cap (default: $HEAVYTAIL_DIV_THREADS or 1)")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--model", help="model name; parameters via --alpha/--theta/--rho/--margin/--dim")
    p.add_argument("--alpha", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--margin")
    p.add_argument("--dim", type=int, help="dimension for the iid model")
    p.add_argument("--n", type=int)
    p.add_argument("--mode", choices=["exact", "monte_carlo"])
    p.add_argument("--x", type=float)
    p.add_argument("--form", choices=["raw", "display"])
    p.add_argument("--beta", type=float, action="append", dest="beta_levels")
    p.add_argument("--target", "--p", type=float, dest="target", help="extrapolation target level")
    p.add_argument("--anchors", type=float, nargs=2)
    p.add_argument("--anchor-values", type=float, nargs=2, dest="anchor_values")
    p.add_argument("--rho-over-alpha", type=float, dest="rho_over_alpha")
    return p


def _merge(doc: dict, args: argparse.Namespace) -> dict:
    doc = dict(doc)
    for key in ("seed", "threads", "output_dir", "n", "mode", "x", "form", "beta_levels", "target", "rho_over_alpha",
                "anchors", "anchor_values"):
        v = getattr(args, key)
        if v is not None:
            doc[key] = list(v) if isinstance(v, tuple) else v
    if args.model is not None:
        doc["model"] = {"name": args.model}
    model = dict(doc.get("model", {}))
    for key, attr in (("alpha", "alpha"), ("theta", "theta"), ("rho", "rho"), ("margin", "margin"), ("d", "dim")):
        v = getattr(args, attr)
        if v is not None:
            model[key] = v
    if model:
        doc["model"] = model
    if doc.get("threads") is None and os.environ.get("HEAVYTAIL_DIV_THREADS"):
        doc["threads"] = resolve_threads(None)
    return doc


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_dict(_merge(load_config(args.config), args))
        return COMMANDS[args.command](cfg)
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except AccuracyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
