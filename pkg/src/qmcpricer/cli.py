"""Command-line harness: ``qmcpricer <command> --config FILE [options]``.

Configuration files hold one ``key = value`` pair per line; ``#`` starts a
comment and lists are comma separated. Command-line flags override the file.
Results are written as CSV to ``--out`` or standard output.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import pricing
from .brownian import TimeGrid
from .dist import (
    GammaParams,
    RejectionSpec,
    acceptance_rejection_batch,
    clamp_unit,
    exponential_density,
    gamma_density,
    gamma_inv_cdf,
)
from .levy import NormalInverseGaussian, levy_transformed_path
from .lowdisc import UniformRng, sobol_points
from .mlmc import METHODS, AsianMultilevel
from .sde import HestonParams

__all__ = [
    "ConfigError",
    "ResultRow",
    "load_config",
    "build_model",
    "run_price",
    "run_converge",
    "run_mlmc",
    "run_demo_rejection",
    "roughness",
    "run_paths",
    "main",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    construction: str
    size: int
    mean: float
    stddev: float
    elapsed_seconds: Optional[float]


def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_value(p) for p in raw.split(",") if p.strip()]
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for kind in (int, float):
        try:
            return kind(raw)
        except ValueError:
            pass
    return raw


def load_config(text: str) -> dict:
    """Parse ``key = value`` lines into a dict with ints, floats, bools and lists."""
    cfg = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected key = value")
        key, value = line.split("=", 1)
        key = key.strip().lower().replace("-", "_")
        if not key:
            raise ConfigError(f"line {number}: empty key")
        cfg[key] = _parse_value(value)
    return cfg


class _Cfg:
    """Typed access to a config dict with defaults and validation."""

    def __init__(self, data: dict):
        self.data = data

    def get(self, key, default=None, kind=None):
        value = self.data.get(key, default)
        if value is None:
            raise ConfigError(f"missing config key {key!r}")
        if kind is None:
            return value
        try:
            if kind is list:
                return value if isinstance(value, list) else [value]
            if kind is bool:
                if not isinstance(value, bool):
                    raise ValueError
                return value
            if kind is int and (isinstance(value, bool) or float(value) != int(value)):
                raise ValueError
            return kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r}: cannot read {value!r} as {kind.__name__}") from None

    def num(self, key, default=None):
        return self.get(key, default, float)

    def int(self, key, default=None):
        return self.get(key, default, int)

    def str(self, key, default=None):
        return self.get(key, default, str).strip().lower()


PAYOFFS = (
    "european_call",
    "european_put",
    "digital_call",
    "digital_put",
    "asian_fixed",
    "asian_float",
    "ratchet",
    "basket",
)


def build_payoff(c: _Cfg):
    name = c.str("payoff", "asian_fixed")
    window = c.data.get("window")
    if window is not None:
        window = tuple(float(v) for v in c.get("window", kind=list))
        if len(window) != 2:
            raise ConfigError("window needs two values: start, end")
    if name == "european_call":
        return pricing.EuropeanCall(c.num("k", 100.0))
    if name == "european_put":
        return pricing.EuropeanPut(c.num("k", 100.0))
    if name == "digital_call":
        return pricing.DigitalCall(c.num("k", 100.0), c.num("cash", 1.0))
    if name == "digital_put":
        return pricing.DigitalPut(c.num("k", 100.0), c.num("cash", 1.0))
    if name == "asian_fixed":
        return pricing.AsianFixed(c.num("k", 100.0), window)
    if name == "asian_float":
        return pricing.AsianFloat(window)
    if name == "ratchet":
        return pricing.Ratchet()
    if name == "basket":
        return pricing.Basket(tuple(float(w) for w in c.get("weights", kind=list)), c.num("k", 100.0))
    raise ConfigError(f"unknown payoff {name!r}; choose from {', '.join(PAYOFFS)}")


def build_model(c: _Cfg):
    name = c.str("model", "bs")
    T = c.num("t", 1.0)
    if name == "bs":
        return pricing.BlackScholesModel(
            pricing.BsMarket(c.num("r", 0.04), c.num("sigma", 0.3), c.num("s0", 100.0), T), c.int("steps", 1)
        )
    if name == "heston":
        params = HestonParams(
            r=c.num("r", 0.03),
            kappa=c.num("kappa", 2.0),
            theta=c.num("theta", 0.3),
            xi=c.num("xi", 0.5),
            rho=c.num("rho", 0.2),
            s0=c.num("s0", 100.0),
            v0=c.num("v0", 0.3),
        )
        return pricing.HestonModel(
            params, c.int("steps", 32), T, c.str("variance_scheme", "full_truncation"), c.str("layout", "blocked")
        )
    if name == "basket":
        s0 = [float(v) for v in c.get("s0", kind=list)]
        sigmas = [float(v) for v in c.get("sigma", kind=list)]
        chol = c.data.get("chol")
        if chol is not None:
            chol = np.asarray(c.get("chol", kind=list), dtype=float).reshape(len(s0), len(s0))
        return pricing.BasketModel(s0, sigmas, c.num("r", 0.04), T, chol)
    raise ConfigError(f"unknown model {name!r}; choose from bs, heston, basket")


def _experiment_defaults(cfg: dict) -> dict:
    """Named experiments fill in the model and payoff used in the convergence study."""
    name = str(cfg.get("experiment", "")).lower()
    presets = {
        "heston-asian": dict(model="heston", payoff="asian_fixed", k=100.0, steps=32),
        "ratchet": dict(model="bs", payoff="ratchet", steps=32, r=0.04, sigma=0.3, s0=100.0),
    }
    out = dict(presets.get(name, {}))
    out.update(cfg)
    return out


def run_price(cfg: dict) -> list[ResultRow]:
    c = _Cfg(_experiment_defaults(cfg))
    model = build_model(c)
    payoff = build_payoff(c)
    construction = c.str("construction", "forward")
    log2 = c.int("log2_points", 10)
    est = pricing.qmc_price(
        model,
        payoff,
        construction,
        shifts=c.int("shifts", 16),
        points=2**log2,
        seed=c.int("seed", 0),
        skip_zero=c.get("skip_zero_point", False, bool),
    )
    return [ResultRow(str(c.get("experiment", "price")), construction, log2, est.mean, est.stddev, est.elapsed)]


def run_converge(cfg: dict) -> list[ResultRow]:
    c = _Cfg(_experiment_defaults(cfg))
    model = build_model(c)
    payoff = build_payoff(c)
    names = [str(n).lower() for n in c.get("constructions", ["forward", "bb", "bb2", "pca"], list)]
    for n in names:
        if n not in pricing.CONSTRUCTIONS:
            raise ConfigError(f"unknown construction {n!r}; choose from {', '.join(pricing.CONSTRUCTIONS)}")
    m_values = c.get("m", None, list) if "m" in c.data else list(range(c.int("m_min", 2), c.int("m_max", 10) + 1))
    experiment = str(c.get("experiment", "converge"))
    rows = []
    for name in names:
        for m in m_values:
            est = pricing.qmc_price(
                model,
                payoff,
                name,
                shifts=c.int("shifts", 64),
                points=2 ** int(m),
                seed=c.int("seed", 0),
                skip_zero=c.get("skip_zero_point", False, bool),
            )
            rows.append(ResultRow(experiment, name, int(m), est.mean, est.stddev, est.elapsed))
    return rows


def run_mlmc(cfg: dict) -> list[ResultRow]:
    c = _Cfg(cfg)
    market = pricing.BsMarket(c.num("r", 0.04), c.num("sigma", 0.3), c.num("s0", 100.0), c.num("t", 1.0))
    methods = [str(n).lower() for n in c.get("methods", list(METHODS), list)]
    for n in methods:
        if n not in METHODS:
            raise ConfigError(f"unknown method {n!r}; choose from {', '.join(METHODS)}")
    runs = c.int("runs", 100)
    if runs < 1:
        raise ConfigError("runs must be positive")
    ex = AsianMultilevel(market, c.num("k", 100.0), c.int("l", 10), c.int("m", 2))
    experiment = str(c.get("experiment", "mlmc-asian"))
    rows = []
    for method in methods:
        for N_L in c.get("n_l", [2, 4, 8, 16, 32, 64], list):
            est = ex.run(method, int(N_L), runs, seed=c.int("seed", 0), skip_zero=c.get("skip_zero_point", False, bool))
            rows.append(ResultRow(experiment, method, int(N_L), est.total, est.total_stddev, est.elapsed))
    return rows


def _gamma_rejection_spec(lam: float) -> RejectionSpec:
    # exponential proposal with mean lam has the smallest bound for shape lam >= 1
    rate = 1.0 / lam
    bound = math.exp(lam * math.log(lam) + 1.0 - lam - math.lgamma(lam))
    return RejectionSpec(gamma_density(lam).pdf, exponential_density(rate), bound * (1 + 1e-12), grid=(1e-6, 60.0))


def run_demo_rejection(cfg: dict) -> dict:
    """Estimates of ``E[S] - lambda_bar n`` for ``S`` a sum of ``n`` Gamma(lambda, 1) variables.

    Returns the lambda grid and two curves: acceptance-rejection driven by a
    pseudo-random stream restarted for every lambda, and inversion of the
    gamma CDF at fixed Sobol points.
    """
    c = _Cfg(cfg)
    lam_bar, eps, step = c.num("lambda_bar", 2.0), c.num("eps", 0.2), c.num("step", 0.001)
    n, N = c.int("n", 5), c.int("samples", 1024)
    seed = c.int("seed", 0)
    if not (eps > 0 and step > 0 and lam_bar - eps >= 1.0):
        raise ConfigError("need eps > 0, step > 0 and lambda_bar - eps >= 1")
    count = int(round(2 * eps / step)) + 1
    lams = lam_bar - eps + step * np.arange(count)
    u_qmc = clamp_unit(sobol_points(n, N, skip_zero=c.get("skip_zero_point", False, bool)))
    ar, inv = np.empty(count), np.empty(count)
    for i, lam in enumerate(lams):
        spec = _gamma_rejection_spec(float(lam))
        x, _ = acceptance_rejection_batch(spec, n * N, UniformRng(seed))
        ar[i] = x.reshape(N, n).sum(axis=1).mean() - lam_bar * n
        inv[i] = gamma_inv_cdf(u_qmc, GammaParams(float(lam))).sum(axis=1).mean() - lam_bar * n
    return {"lambda": lams, "ar_mc": ar, "inversion_qmc": inv}


def roughness(curve) -> float:
    """Standard deviation of successive differences."""
    return float(np.std(np.diff(np.asarray(curve, dtype=float)), ddof=1))


def run_paths(cfg: dict) -> dict:
    """Paths for a sweep of one input coordinate with the others held fixed.

    ``coordinate`` is 1-based; 0 sweeps nothing. The fixed inputs are zero
    unless ``base_seed`` is given, in which case they are seeded normals.
    """
    c = _Cfg(cfg)
    d, T = c.int("d", 16), c.num("t", 1.0)
    name = c.str("construction", "forward")
    if name == "regression":
        raise ConfigError("paths supports forward, bb, bb2, pca")
    try:
        construction = pricing.make_construction(name, d, T)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    coord = c.int("coordinate", 1)
    if not 0 <= coord <= d:
        raise ConfigError(f"coordinate must lie in 0..{d}")
    values = np.linspace(c.num("sweep_min", -2.0), c.num("sweep_max", 2.0), c.int("sweep_count", 9))
    base = np.zeros(d) if "base_seed" not in c.data else UniformRng(c.int("base_seed")).normal(d)
    x = np.tile(base, (len(values), 1))
    if coord:
        x[:, coord - 1] = values
    family = c.str("family", "brownian")
    if family == "brownian":
        paths = construction.path(x)
    elif family == "nig":
        nig = NormalInverseGaussian(c.num("alpha", 2.0), c.num("beta", 0.0), c.num("delta", 1.0))
        paths = levy_transformed_path(nig, TimeGrid.even(d, T), construction.normals, x)
    else:
        raise ConfigError("family must be brownian or nig")
    return {"times": TimeGrid.even(d, T).nodes, "values": values, "paths": paths, "coordinate": coord}


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_rows(header, rows, out):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


COMMANDS = ("price", "converge", "mlmc", "demo-rejection", "paths")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmcpricer", description="Quasi-Monte Carlo option pricing experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--seed", type=int, help="seed for shifts and pseudo-random streams")
    p.add_argument("--out", help="CSV output file (default: standard output)")
    p.add_argument("--runs", type=int, help="replications for the mlmc command")
    p.add_argument("--skip-zero-point", action="store_true", help="start Sobol sequences at index 1")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")
    p.add_argument("--no-timing", action="store_true", help="leave elapsed_seconds empty for reproducible output")
    return p


def _render(command: str, cfg: dict, timing: bool) -> str:
    out = io.StringIO()
    if command in ("price", "converge", "mlmc"):
        rows = {"price": run_price, "converge": run_converge, "mlmc": run_mlmc}[command](cfg)
        size = "N_L" if command == "mlmc" else "log2_points"
        _write_rows(
            ["experiment", "construction", size, "mean", "stddev", "elapsed_seconds"],
            [
                (r.experiment, r.construction, r.size, r.mean, r.stddev, r.elapsed_seconds if timing else None)
                for r in rows
            ],
            out,
        )
    elif command == "demo-rejection":
        res = run_demo_rejection(cfg)
        _write_rows(
            ["lambda", "ar_mc", "inversion_qmc"], zip(res["lambda"], res["ar_mc"], res["inversion_qmc"]), out
        )
    else:
        res = run_paths(cfg)
        header = ["coordinate", "value"] + [f"t={t:.6g}" for t in res["times"]]
        _write_rows(header, [(res["coordinate"], v, *p) for v, p in zip(res["values"], res["paths"])], out)
    return out.getvalue()


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = load_config(fh.read())
        for item in args.set:
            cfg.update(load_config(item))
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.runs is not None:
            cfg["runs"] = args.runs
        if args.skip_zero_point:
            cfg["skip_zero_point"] = True
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            text = _render(args.command, cfg, timing=not args.no_timing)
    except (ConfigError, OSError) as exc:
        print(f"qmcpricer: config error: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"qmcpricer: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"qmcpricer: config error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
