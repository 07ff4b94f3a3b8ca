"""Command line front end.

    basket-wing {leftwing|rightwing|validate} --config <path> --out <dir>

A TOML config names the model (``bs``, ``timechange`` or ``copula``), its
parameters, a log-strike grid and an optional pricing oracle.  ``leftwing``
and ``rightwing`` write ``<side>.csv`` and ``<side>.json``; ``validate``
writes ``validate.json``.  Exit codes: 0 success, 2 bad config, 3 numerical
or validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import oracle, validation
from .copula import CopulaSpec, MarginalTailSpec, tailwing_left
from .errors import BasketWingError, ConfigError
from .lognormal_asymptotics import (
    BasketSpec,
    _exceptional_pair,
    leftwing_iv_expansion,
    rightwing_iv_limit,
    two_asset_classify,
    two_asset_exceptional,
)
from .timechange import TcBasketSpec, TimeChangeSpec, tc_leftwing_leading, tc_rightwing_leading

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CSV_HEADER = ("k", "strike", "iv_asymptotic", "iv_oracle", "abs_error", "source")
MODELS = ("bs", "timechange", "copula")
ORACLES = ("none", "quad", "mc")


@dataclass
class RunConfig:
    model: str
    k_grid: list[float]
    maturity: float
    oracle: str = "none"
    paths: int = 1_000_000
    seed: int = 0
    nodes: int = 300
    basket: dict = field(default_factory=dict)
    timechange: dict = field(default_factory=dict)
    copula: dict = field(default_factory=dict)
    marginals: dict = field(default_factory=dict)
    source: str = ""


# --------------------------------------------------------------------------
# config parsing


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required field {where}.{key}" if where else f"missing required field {key}")
    return table[key]


def _float_list(value, name: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{name} must be a nonempty list of numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must contain only numbers") from None


def _matrix(value, name: str) -> np.ndarray:
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise ConfigError(f"{name} must be a list of rows")
    try:
        m = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a rectangular numeric matrix") from None
    if m.ndim != 2:
        raise ConfigError(f"{name} must be a rectangular numeric matrix")
    return m


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    model = _require(raw, "model", "")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
    k_grid = _float_list(_require(raw, "k_grid", ""), "k_grid")
    if any(b <= a for a, b in zip(k_grid, k_grid[1:])) or k_grid[0] <= 0:
        raise ConfigError("k_grid must be positive and strictly increasing")
    try:
        maturity = float(raw.get("maturity", 1.0))
    except (TypeError, ValueError):
        raise ConfigError("maturity must be a number") from None
    if not maturity > 0:
        raise ConfigError("maturity must be positive")
    orc = raw.get("oracle", {})
    if not isinstance(orc, dict):
        raise ConfigError("oracle must be a table")
    kind = orc.get("kind", "none")
    if kind not in ORACLES:
        raise ConfigError(f"oracle.kind must be one of {ORACLES}, got {kind!r}")
    try:
        paths, seed, nodes = int(orc.get("paths", 1_000_000)), int(orc.get("seed", 0)), int(orc.get("nodes", 300))
    except (TypeError, ValueError):
        raise ConfigError("oracle.paths, oracle.seed and oracle.nodes must be integers") from None
    if kind == "mc" and (paths < 1000 or paths % 2):
        raise ConfigError("oracle.paths must be an even number >= 1000")
    if kind == "quad" and not oracle.NODES_MIN <= nodes <= oracle.NODES_MAX:
        raise ConfigError(f"oracle.nodes must lie in [{oracle.NODES_MIN}, {oracle.NODES_MAX}]")
    if model == "copula" and kind != "none":
        raise ConfigError("copula models have no pricing oracle; set oracle.kind = 'none'")
    cfg = RunConfig(model, k_grid, maturity, kind, paths, seed, nodes,
                    raw.get("basket", {}), raw.get("timechange", {}), raw.get("copula", {}),
                    raw.get("marginals", {}), str(path))
    for name in ("basket", "timechange", "copula", "marginals"):
        if not isinstance(getattr(cfg, name), dict):
            raise ConfigError(f"{name} must be a table")
    return cfg


def _cov_from(table: dict, n: int) -> np.ndarray:
    if "cov" in table:
        return _matrix(table["cov"], "basket.cov")
    vols = np.array(_float_list(_require(table, "vols", "basket"), "basket.vols"))
    if vols.size != n:
        raise ConfigError("basket.vols must have one entry per weight")
    corr = table.get("corr", 0.0 if n == 1 else None)
    if corr is None:
        raise ConfigError("missing required field basket.corr (or basket.cov)")
    if isinstance(corr, (int, float)):
        if n > 2:
            raise ConfigError("a scalar basket.corr is only allowed for two assets")
        R = np.array([[1.0, corr], [corr, 1.0]])[:n, :n]
    else:
        R = _matrix(corr, "basket.corr")
    return R * np.outer(vols, vols)


def build_basket(cfg: RunConfig) -> BasketSpec:
    weights = _float_list(_require(cfg.basket, "weights", "basket"), "basket.weights")
    return BasketSpec(np.array(weights), _cov_from(cfg.basket, len(weights)), cfg.maturity)


def build_timechange(cfg: RunConfig) -> TcBasketSpec:
    basket = build_basket(cfg)
    mu = _float_list(_require(cfg.basket, "mu", "basket"), "basket.mu")
    tc = cfg.timechange
    family = _require(tc, "family", "timechange")
    if family == "gamma":
        law = TimeChangeSpec.gamma(float(_require(tc, "c", "timechange")), float(_require(tc, "rate", "timechange")),
                                   cfg.maturity)
    elif family == "inverse_gaussian":
        law = TimeChangeSpec.inverse_gaussian(float(_require(tc, "c", "timechange")),
                                              float(_require(tc, "rate", "timechange")), cfg.maturity)
    else:
        raise ConfigError("timechange.family must be 'gamma' or 'inverse_gaussian'")
    return TcBasketSpec(basket.weights, basket.cov, np.array(mu), law)


def build_copula(cfg: RunConfig) -> tuple[CopulaSpec, float | None]:
    """Copula spec and, for Gumbel, its parameter (used for numeric cross-checks)."""
    c = cfg.copula
    family = _require(c, "family", "copula")
    if family == "gaussian":
        if "R" in c:
            return CopulaSpec.gaussian(_matrix(c["R"], "copula.R")), None
        rho = float(_require(c, "rho", "copula"))
        return CopulaSpec.gaussian([[1.0, rho], [rho, 1.0]]), None
    if family == "gumbel":
        theta = float(_require(c, "theta", "copula"))
        if not theta >= 1:
            raise ConfigError("copula.theta must be >= 1 for Gumbel")
        return CopulaSpec.archimedean(1.0 / theta), theta
    if family == "archimedean":
        return CopulaSpec.archimedean(float(_require(c, "lam", "copula"))), None
    if family == "strong_dependence":
        return CopulaSpec.strong_dependence(float(c.get("lambda_L", 1.0))), None
    raise ConfigError("copula.family must be gaussian, gumbel, archimedean or strong_dependence")


# --------------------------------------------------------------------------
# wing sweeps


@dataclass
class Row:
    k: float
    strike: float
    iv_asymptotic: float | None
    iv_oracle: float | None = None
    source: str = ""
    note: str = ""

    @property
    def abs_error(self) -> float | None:
        if self.iv_asymptotic is None or self.iv_oracle is None:
            return None
        return abs(self.iv_oracle - self.iv_asymptotic)


def _oracle_curve(cfg: RunConfig, pricer, ks, side) -> list[oracle.IvCurvePoint]:
    return oracle.empirical_iv_curve(pricer, ks, side, cfg.maturity)


def _basket_pricer(cfg: RunConfig, basket: BasketSpec):
    if cfg.oracle == "quad":
        if basket.n > 2:
            raise ConfigError("the quadrature oracle supports one or two assets")
        return oracle.quad_pricer(basket, cfg.nodes)
    return oracle.mc_pricer(basket, cfg.paths, cfg.seed)


def _tc_pricer(cfg: RunConfig, spec: TcBasketSpec):
    if cfg.oracle == "quad":
        if spec.n > 1:
            raise ConfigError("the time-changed quadrature oracle supports a single asset")
        return oracle.tc_quad_pricer(spec, cfg.nodes)
    return oracle.tc_mc_pricer(spec, cfg.paths, cfg.seed)


def _asymptotic_rows(side: str, ks, values, name: str, notes=None) -> list[Row]:
    rows = []
    for i, (k, v) in enumerate(zip(ks, values)):
        strike = math.exp(-k if side == "left" else k)
        rows.append(Row(k, strike, v, None, f"asymptotic-{name}", "" if notes is None else notes[i]))
    return rows


def _attach_oracle(rows: list[Row], points: list[oracle.IvCurvePoint]) -> None:
    for row, pt in zip(rows, points):
        row.source = pt.source
        row.iv_oracle = pt.iv if pt.usable else None
        if not pt.usable:
            row.note = pt.note


def sweep_bs(cfg: RunConfig, side: str) -> tuple[list[Row], dict]:
    basket = build_basket(cfg)
    ks = cfg.k_grid
    summary: dict = {"model": "bs", "n": basket.n}
    if side == "left":
        if _exceptional_pair(basket):
            s = np.sqrt(np.diag(basket.cov))
            order = np.argsort(-s)
            regime = two_asset_classify(s[order[0]], s[order[1]], basket.cov[0, 1] / (s[0] * s[1]))
            if ks[0] <= 3.0:
                raise ConfigError("the exceptional regime needs k_grid entries above 3")
            wings = [two_asset_exceptional(regime, basket.weights[order], cfg.maturity, math.exp(-k)) for k in ks]
            summary.update(regime="exceptional", c0=regime.sigma2,
                           iv_zero_order=[w.iv_zero_order for w in wings],
                           log_envelope=[w.log_envelope for w in wings])
            rows = _asymptotic_rows(side, ks, [w.iv_leading for w in wings], "exceptional")
        else:
            if ks[0] <= 1.0:
                raise ConfigError("the left-wing expansion needs k_grid entries above 1")
            exp = leftwing_iv_expansion(basket)
            sol = basket.simplex()
            regime = "general"
            if basket.n == 1:
                regime = "single"
            elif basket.n == 2:
                s = np.sqrt(np.diag(basket.cov))
                regime = two_asset_classify(s.max(), s.min(), basket.cov[0, 1] / (s[0] * s[1])).regime
            summary.update(regime=regime, c0=exp.c0, c1=exp.c1, c_loglog=exp.c_loglog,
                           support=list(sol.support), w_bar=sol.w_bar.tolist())
            rows = _asymptotic_rows(side, ks, [exp.at_log_strike(k) for k in ks], "expansion")
    else:
        sigma, mu, mult = rightwing_iv_limit(basket)
        summary.update(regime="right", sigma_max=sigma, drift=mu, multiplicity=mult)
        rows = _asymptotic_rows(side, ks, [sigma] * len(ks), "sigma-max")
    if cfg.oracle != "none":
        _attach_oracle(rows, _oracle_curve(cfg, _basket_pricer(cfg, basket), ks, side))
    return rows, summary


def sweep_timechange(cfg: RunConfig, side: str) -> tuple[list[Row], dict]:
    spec = build_timechange(cfg)
    ks = cfg.k_grid
    summary: dict = {"model": "timechange", "n": spec.n, "family": spec.timechange.family,
                     "theta": spec.timechange.theta, "mu_tilde": spec.mu_tilde.tolist()}
    if side == "left":
        coef, c_star = tc_leftwing_leading(spec)
        summary.update(c_star=c_star, coefficient=coef)
        name = "saddle"
    else:
        coef, c_min = tc_rightwing_leading(spec)
        summary.update(c_min=c_min, coefficient=coef)
        name = "fattest-asset"
    rows = _asymptotic_rows(side, ks, [coef * math.sqrt(k) for k in ks], name)
    if cfg.oracle != "none":
        _attach_oracle(rows, _oracle_curve(cfg, _tc_pricer(cfg, spec), ks, side))
    return rows, summary


def _marginals(cfg: RunConfig) -> MarginalTailSpec:
    m = cfg.marginals
    eta = _float_list(_require(m, "eta", "marginals"), "marginals.eta")
    return MarginalTailSpec(np.array(eta), float(m.get("slope", 1.0)))


def sweep_copula(cfg: RunConfig, side: str) -> tuple[list[Row], dict]:
    copula, _ = build_copula(cfg)
    ks = cfg.k_grid
    summary: dict = {"model": "copula", "family": cfg.copula.get("family")}
    if side == "left":
        marg = _marginals(cfg)
        chi = copula.chi(marg.eta)
        summary.update(chi=chi, eta=marg.eta.tolist(), slope=float(marg.G))
        values = [tailwing_left(marg, copula, cfg.maturity, k) for k in ks]
        rows = _asymptotic_rows(side, ks, values, "copula")
    else:
        slopes = _float_list(_require(cfg.marginals, "right_slopes", "marginals"), "marginals.right_slopes")
        summary.update(right_slopes=slopes,
                       note="the right wing depends only on the fattest marginal; the copula is ignored")
        rows = _asymptotic_rows(side, ks, validation.copula_right_curve(copula, slopes, cfg.maturity, ks),
                                "fattest-marginal")
    return rows, summary


SWEEPS = {"bs": sweep_bs, "timechange": sweep_timechange, "copula": sweep_copula}


# --------------------------------------------------------------------------
# output


def _num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _clean(obj):
    """Replace non-finite floats by ``None`` and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False) + "\n")


def write_csv(path: Path, rows: list[Row]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([_num(r.k), _num(r.strike), _num(r.iv_asymptotic), _num(r.iv_oracle),
                         _num(r.abs_error), r.source])
    path.write_text(buf.getvalue())


def _config_echo(cfg: RunConfig) -> dict:
    return {"model": cfg.model, "k_grid": cfg.k_grid, "maturity": cfg.maturity,
            "oracle": {"kind": cfg.oracle, "paths": cfg.paths, "seed": cfg.seed, "nodes": cfg.nodes}}


def run_wing(cfg: RunConfig, side: str, out: Path) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows, summary = SWEEPS[cfg.model](cfg, side)
    failures = [r for r in rows if r.note and cfg.oracle != "none" and r.iv_oracle is None
                and "noise floor" not in r.note]
    points = [{"k": r.k, "strike": r.strike, "iv_asymptotic": r.iv_asymptotic, "iv_oracle": r.iv_oracle,
               "abs_error": r.abs_error, "source": r.source, "note": r.note} for r in rows]
    payload = {
        "command": f"{side}wing",
        "config": _config_echo(cfg),
        "summary": summary,
        "points": points,
        "warnings": sorted({f"{w.category.__name__}: {w.message}" for w in caught}),
        "status": "failed" if failures else "ok",
    }
    write_csv(out / f"{side}wing.csv", rows)
    write_json(out / f"{side}wing.json", payload)
    return EXIT_NUMERIC if failures else EXIT_OK


def run_validate(cfg: RunConfig, out: Path) -> int:
    if cfg.oracle == "none" and cfg.model != "copula":
        raise ConfigError("validate needs an oracle (oracle.kind = 'quad' or 'mc')")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.model == "bs":
            basket = build_basket(cfg)
            if cfg.oracle == "quad" and basket.n > 2:
                raise ConfigError("the quadrature oracle supports one or two assets")
            checks = validation.check_bs(basket, cfg.k_grid, cfg.oracle, cfg.paths, cfg.seed, cfg.nodes)
        elif cfg.model == "timechange":
            spec = build_timechange(cfg)
            if cfg.oracle == "quad" and spec.n > 1:
                raise ConfigError("the time-changed quadrature oracle supports a single asset")
            checks = validation.check_timechange(spec, cfg.k_grid, cfg.oracle, cfg.paths, cfg.seed, cfg.nodes)
        else:
            copula, gumbel = build_copula(cfg)
            marg = _marginals(cfg)
            slopes = cfg.marginals.get("right_slopes")
            if slopes is not None:
                slopes = _float_list(slopes, "marginals.right_slopes")
            checks = validation.check_copula(copula, marg.eta, slopes, cfg.maturity, cfg.k_grid, gumbel)
    ok = all(c.passed for c in checks)
    write_json(out / "validate.json", {
        "command": "validate",
        "config": _config_echo(cfg),
        "criteria": [c.as_dict() for c in checks],
        "warnings": sorted({f"{w.category.__name__}: {w.message}" for w in caught}),
        "status": "passed" if ok else "failed",
    })
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: measured={c.measured} tolerance={c.tolerance}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _error_report(out: Path | None, command: str, code: int, exc: Exception) -> None:
    print(f"basket-wing: {type(exc).__name__}: {exc}", file=sys.stderr)
    if out is None:
        return
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError:
        return
    write_json(out / f"{command}.error.json", {"command": command, "exit_code": code,
                                               "error": type(exc).__name__, "message": str(exc)})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="basket-wing", description="Extreme-strike implied volatility of baskets.")
    parser.add_argument("command", choices=("leftwing", "rightwing", "validate"))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", required=True, help="output directory (created if missing)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "validate":
            return run_validate(cfg, out)
        return run_wing(cfg, args.command[:-4], out)
    except ConfigError as exc:
        _error_report(out, args.command, EXIT_CONFIG, exc)
        return EXIT_CONFIG
    except (BasketWingError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _error_report(out, args.command, EXIT_NUMERIC, exc)
        return EXIT_NUMERIC
    except (TypeError, ValueError) as exc:
        # a field of the wrong type that slipped past the structural checks
        _error_report(out, args.command, EXIT_CONFIG, exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
