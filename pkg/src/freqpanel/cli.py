"""Command-line interface: estimation, simulation, fixed-b tables, validation.

Subcommands
-----------
estimate   fit the fixed-effects model to a long-format CSV panel and
           report cluster/bootstrap/HAC inference
simulate   generate a panel CSV or run a Monte Carlo experiment from a
           versioned JSON config
fixedb-cv  simulate fixed-b critical values for one (b, q)
validate   check a panel CSV for balance and numeric content

Exit codes: 0 ok, 2 input error, 3 numerical failure, 4 config error.
Outputs are deterministic: the same command line and seed produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap_pvalue, run_bootstrap
from .cluster import cov_estimate, wald_test
from .comparators import (
    HacConfig,
    MbbConfig,
    andrews_raw_bandwidth,
    dk_cov_estimate,
    fixed_b_critical_values,
    mbb_bootstrap,
    score_series,
)
from .dgp import build_dgp_spec, heterogeneous_specs, simulate_panel
from .errors import ConfigError, EstimationError, PanelDataError
from .estimators import fe_estimate_freq
from .harness import METHODS, Experiment, run_experiment, seed_plan
from .hetero import hetero_scale_estimates, robust_cov_estimate, run_robust_bootstrap
from .panel import PanelData, within_transform

__all__ = ["ingest_csv", "main", "panel_to_csv"]

_CONFIG_VERSION = 1


def _order_key(value: str):
    """Numeric-aware deterministic sort key for id/period labels."""
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def ingest_csv(path) -> PanelData:
    """Read a long-format panel CSV into a PanelData.

    Expects a header (individual_id, period_id, y, x1..xk) in any column
    order, one row per (individual, period) cell.  The panel must be
    balanced; missing and duplicate cells are reported by key.  Rows are
    ordered deterministically by (individual, period) with numeric-aware
    label ordering.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        msg = f"cannot read panel file: {exc}"
        raise PanelDataError(msg) from exc
    if not rows:
        msg = f"{path}: empty file (header required)"
        raise PanelDataError(msg)
    header = [c.strip() for c in rows[0]]
    required = {"individual_id", "period_id", "y"}
    missing_cols = required - set(header)
    if missing_cols:
        msg = f"{path}: header is missing columns {sorted(missing_cols)}"
        raise PanelDataError(msg)
    x_names = sorted(
        (c for c in header if c not in required),
        key=lambda c: (len(c), c),
    )
    expected = [f"x{j + 1}" for j in range(len(x_names))]
    if not x_names or x_names != expected:
        msg = (
            f"{path}: regressor columns must be x1..xk, got "
            f"{[c for c in header if c not in required]}"
        )
        raise PanelDataError(msg)
    col = {name: header.index(name) for name in header}

    cells: dict = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            msg = f"{path}:{i}: expected {len(header)} fields, got {len(row)}"
            raise PanelDataError(msg)
        pid = row[col["individual_id"]].strip()
        tid = row[col["period_id"]].strip()
        key = (pid, tid)
        if key in cells:
            msg = f"{path}:{i}: duplicate cell (individual={pid}, period={tid})"
            raise PanelDataError(msg)
        values = []
        for name in ["y", *x_names]:
            raw = row[col[name]].strip()
            try:
                values.append(float(raw))
            except ValueError:
                msg = (
                    f"{path}:{i}: non-numeric value {raw!r} in column {name} "
                    f"(individual={pid}, period={tid})"
                )
                raise PanelDataError(msg) from None
        cells[key] = values

    individuals = sorted({p for p, _ in cells}, key=_order_key)
    periods = sorted({t for _, t in cells}, key=_order_key)
    missing = [
        (p, t) for p in individuals for t in periods if (p, t) not in cells
    ]
    if missing:
        shown = ", ".join(f"(individual={p}, period={t})" for p, t in missing[:5])
        more = "" if len(missing) <= 5 else f" and {len(missing) - 5} more"
        msg = f"{path}: unbalanced panel; missing cells {shown}{more}"
        raise PanelDataError(msg)

    n, t_len, k = len(individuals), len(periods), len(x_names)
    y = np.empty((n, t_len))
    x = np.empty((n, t_len, k))
    for ip, p in enumerate(individuals):
        for it, t in enumerate(periods):
            vals = cells[(p, t)]
            y[ip, it] = vals[0]
            x[ip, it, :] = vals[1:]
    return PanelData(y=y, x=x, individual_ids=individuals, period_ids=periods)


def panel_to_csv(panel: PanelData) -> str:
    """Long-format CSV text for a panel; inverse of ingest_csv."""
    ids = panel.individual_ids or [str(p + 1) for p in range(panel.n)]
    periods = panel.period_ids or [str(t + 1) for t in range(panel.T)]
    lines = ["individual_id,period_id,y," + ",".join(f"x{j + 1}" for j in range(panel.k))]
    for ip in range(panel.n):
        for it in range(panel.T):
            vals = [repr(float(panel.y[ip, it]))]
            vals += [repr(float(v)) for v in panel.x[ip, it]]
            lines.append(f"{ids[ip]},{periods[it]}," + ",".join(vals))
    return "\n".join(lines) + "\n"


def _write_output(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_config(path, allowed: set, what: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        msg = f"cannot read config file: {exc}"
        raise ConfigError(msg) from exc
    except json.JSONDecodeError as exc:
        msg = f"config file is not valid JSON: {exc}"
        raise ConfigError(msg) from exc
    if not isinstance(raw, dict):
        msg = "config must be a JSON object"
        raise ConfigError(msg)
    version = raw.get("version")
    if version != _CONFIG_VERSION:
        msg = f"unsupported config version {version!r} (expected {_CONFIG_VERSION})"
        raise ConfigError(msg)
    unknown = set(raw) - allowed
    if unknown:
        msg = f"unknown keys in {what} config: {sorted(unknown)}"
        raise ConfigError(msg)
    return raw


def _parse_beta0(text: str | None, k: int) -> np.ndarray:
    if text is None:
        return np.zeros(k)
    try:
        vals = np.array([float(v) for v in text.split(",")])
    except ValueError:
        msg = f"--beta0 must be comma-separated numbers, got {text!r}"
        raise ConfigError(msg) from None
    if vals.size != k:
        msg = f"--beta0 has {vals.size} entries for k = {k} regressors"
        raise ConfigError(msg)
    return vals


_ESTIMATE_CONFIG_KEYS = {
    "version",
    "methods",
    "bootstrap_reps",
    "level",
    "beta0",
    "seed",
}


def _cmd_estimate(args) -> int:
    defaults = {"methods": None, "bootstrap_reps": 999, "level": 0.05,
                "beta0": None, "seed": 0}
    if args.config is not None:
        cfg = _load_config(args.config, _ESTIMATE_CONFIG_KEYS, "estimate")
        for key in defaults:
            if key in cfg:
                defaults[key] = cfg[key]
    methods = args.method or defaults["methods"] or ["hs-asy", "hs-nb"]
    unknown = set(methods) - set(METHODS)
    if unknown:
        msg = f"unknown methods {sorted(unknown)}; expected subset of {METHODS}"
        raise ConfigError(msg)
    b_reps = args.bootstrap_reps if args.bootstrap_reps is not None else defaults["bootstrap_reps"]
    level = args.level if args.level is not None else defaults["level"]
    seed = args.seed if args.seed is not None else defaults["seed"]
    if not 0.0 < level < 1.0:
        msg = f"--level must be in (0, 1), got {level}"
        raise ConfigError(msg)

    panel = ingest_csv(args.data)
    w = within_transform(panel)
    est = fe_estimate_freq(w)
    beta0_text = args.beta0 if args.beta0 is not None else defaults["beta0"]
    if isinstance(beta0_text, list):
        beta0 = np.asarray(beta0_text, dtype=float)
        if beta0.size != est.k:
            msg = f"beta0 has {beta0.size} entries for k = {est.k} regressors"
            raise ConfigError(msg)
    else:
        beta0 = _parse_beta0(beta0_text, est.k)
    nt = est.n * est.T

    cov = cov_estimate(est.x_spectrum, est.residual_spectrum)
    result = {
        "version": _CONFIG_VERSION,
        "n": est.n,
        "T": est.T,
        "k": est.k,
        "level": level,
        "seed": seed,
        "bootstrap_reps": b_reps,
        "beta0": beta0.tolist(),
        "beta": est.beta.tolist(),
        "cluster_se": np.sqrt(np.diag(cov.vhat) / nt).tolist(),
        "methods": {},
    }
    # report the fit before running inference: the point estimate is
    # well defined even when a degenerate covariance aborts the tests
    lines = [f"fixed-effects fit: n={est.n}, T={est.T}, k={est.k}"]
    lines.append("coefficients (cluster se):")
    for j in range(est.k):
        lines.append(
            f"  x{j + 1}: {est.beta[j]:.6f} ({result['cluster_se'][j]:.6f})"
        )
    print("\n".join(lines), flush=True)

    tr = wald_test(est, cov, beta0)

    robust_methods = {"hs-robust-asy", "hs-robust-nb"} & set(methods)
    if robust_methods:
        scales = hetero_scale_estimates(est.residuals_time)
        rcov = robust_cov_estimate(est, scales)
        rtr = wald_test(est, rcov, beta0)
        result["robust_se"] = np.sqrt(np.diag(rcov.vhat) / nt).tolist()

    dk_methods = {"dk-asy", "dk-fixb", "dk-mbb"} & set(methods)
    if dk_methods:
        raw_bw = andrews_raw_bandwidth(score_series(w, est.residuals_time))
        m_t = max(int(np.ceil(raw_bw)), 1)
        result["hac_bandwidth"] = m_t
        dk_tr = wald_test(est, dk_cov_estimate(est, HacConfig(float(m_t))), beta0)

    for method in methods:
        if method == "hs-asy":
            entry = {"wald": tr.wald, "pvalue": tr.pvalue_asymptotic, "tstat": tr.tstat}
        elif method in ("hs-nb", "hs-wb"):
            scheme = "naive" if method == "hs-nb" else "wild"
            stream = "nb" if method == "hs-nb" else "wb"
            res = run_bootstrap(
                est,
                BootstrapConfig(scheme=scheme, B=b_reps, rng_seed=0),
                base_seed=seed_plan(seed, 0, 0, stream),
            )
            entry = {
                "pvalue": bootstrap_pvalue(tr.wald, res),
                "observed_wald": tr.wald,
                "n_degenerate": res.n_degenerate,
            }
        elif method == "hs-robust-asy":
            entry = {"wald": rtr.wald, "pvalue": rtr.pvalue_asymptotic, "tstat": rtr.tstat}
        elif method == "hs-robust-nb":
            res = run_robust_bootstrap(
                est,
                scales,
                BootstrapConfig(scheme="naive", B=b_reps, rng_seed=0),
                base_seed=seed_plan(seed, 0, 0, "robust-nb"),
            )
            entry = {
                "pvalue": bootstrap_pvalue(rtr.wald, res),
                "observed_wald": rtr.wald,
                "n_degenerate": res.n_degenerate,
            }
        elif method == "dk-asy":
            entry = {"wald": dk_tr.wald, "pvalue": dk_tr.pvalue_asymptotic, "tstat": dk_tr.tstat}
        elif method == "dk-fixb":
            if round(level, 10) not in (0.10, 0.05, 0.01):
                msg = "dk-fixb critical values are tabulated at levels 0.10, 0.05, 0.01"
                raise ConfigError(msg)
            table = fixed_b_critical_values(m_t / est.T, est.k)
            cv = table.wald_cv[round(level, 10)]
            entry = {
                "wald": dk_tr.wald,
                "critical_value": cv,
                "b": m_t / est.T,
                "reject": bool(dk_tr.wald > cv),
            }
        elif method == "dk-mbb":
            ell = min(max(int(raw_bw), 1), est.T)
            mbb = mbb_bootstrap(
                panel,
                MbbConfig(block_length=ell, B=b_reps, rng_seed=0),
                hac_bandwidth=float(m_t),
                beta0=beta0,
                base_seed=seed_plan(seed, 0, 0, "mbb"),
            )
            entry = {
                "pvalue": mbb.pvalue,
                "observed_wald": mbb.observed.wald,
                "block_length": ell,
                "n_degenerate": mbb.n_degenerate,
            }
        result["methods"][method] = entry

    lines = []
    if "robust_se" in result:
        lines.append("robust se:")
        for j in range(est.k):
            lines.append(f"  x{j + 1}: {result['robust_se'][j]:.6f}")
    lines.append("methods:")
    for method in methods:
        entry = result["methods"][method]
        if "pvalue" in entry:
            lines.append(f"  {method:<14} p = {entry['pvalue']:.4f}")
        else:
            lines.append(
                f"  {method:<14} wald = {entry['wald']:.4f}  "
                f"cv = {entry['critical_value']:.4f}  reject = {entry['reject']}"
            )
    print("\n".join(lines))
    if args.out is not None:
        payload = json.dumps(result, sort_keys=True, indent=2) + "\n"
        Path(args.out).write_text(payload, encoding="utf-8")
    return 0


_PANEL_CONFIG_KEYS = {
    "version", "mode", "n", "T", "beta", "family", "rho", "decay",
    "hetero_form", "delta1", "delta2", "burn_in", "seed",
}
_EXPERIMENT_CONFIG_KEYS = {
    "version", "mode", "cells", "methods", "replications", "bootstrap_reps",
    "level", "beta_true", "family", "rho", "decay", "hetero_form",
    "delta1", "delta2", "fixedb_reps", "fixedb_cache", "wild_multiplier",
    "seed",
}


def _cmd_simulate(args) -> int:
    if args.config is None:
        msg = "simulate requires --config"
        raise ConfigError(msg)
    # mode dispatch needs the keys before per-mode validation, so peek first
    try:
        peek = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        msg = f"cannot read config file: {exc}"
        raise ConfigError(msg) from exc
    except json.JSONDecodeError as exc:
        msg = f"config file is not valid JSON: {exc}"
        raise ConfigError(msg) from exc
    mode = peek.get("mode") if isinstance(peek, dict) else None
    if mode == "panel":
        cfg = _load_config(args.config, _PANEL_CONFIG_KEYS, "simulate/panel")
        return _simulate_panel_mode(cfg, args)
    if mode == "experiment":
        cfg = _load_config(args.config, _EXPERIMENT_CONFIG_KEYS, "simulate/experiment")
        return _simulate_experiment_mode(cfg, args)
    msg = f"config key 'mode' must be 'panel' or 'experiment', got {mode!r}"
    raise ConfigError(msg)


def _resolve_seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _build_cell_arma(family: str, n: int, rho: float):
    from .dgp import ArmaSpec

    if family == "ar1":
        return ArmaSpec.ar1(n, rho), ArmaSpec.ar1(n, rho)
    return heterogeneous_specs(n, family), heterogeneous_specs(n, family)


def _simulate_panel_mode(cfg: dict, args) -> int:
    required = {"n", "T"}
    missing = required - set(cfg)
    if missing:
        msg = f"simulate/panel config is missing keys {sorted(missing)}"
        raise ConfigError(msg)
    n, t_len = int(cfg["n"]), int(cfg["T"])
    beta = cfg.get("beta", [0.0])
    if np.isscalar(beta):
        beta = [beta]
    family = cfg.get("family", "ar1")
    rho = float(cfg.get("rho", 0.7))
    seed = _resolve_seed(args, cfg)
    arma_u, arma_x = _build_cell_arma(family, n, rho)
    design_rng = np.random.Generator(
        np.random.Philox(seed_plan(seed, 0, stream="design"))
    )
    spec = build_dgp_spec(
        n,
        t_len,
        beta=beta,
        decay=float(cfg.get("decay", 10.0)),
        arma_u=arma_u,
        arma_x=arma_x,
        hetero_form=cfg.get("hetero_form"),
        delta1=float(cfg.get("delta1", 0.0)),
        delta2=float(cfg.get("delta2", 0.0)),
        design_rng=design_rng,
        burn_in=int(cfg.get("burn_in", 49)),
    )
    sim = simulate_panel(spec, t_len, seed_plan(seed, 0, 0, "data"))
    _write_output(panel_to_csv(sim.panel), args.out)
    return 0


def _simulate_experiment_mode(cfg: dict, args) -> int:
    required = {"cells", "methods", "replications"}
    missing = required - set(cfg)
    if missing:
        msg = f"simulate/experiment config is missing keys {sorted(missing)}"
        raise ConfigError(msg)
    exp = Experiment(
        cells=[tuple(c) for c in cfg["cells"]],
        methods=tuple(cfg["methods"]),
        replications=int(cfg["replications"]),
        bootstrap_reps=int(cfg.get("bootstrap_reps", 199)),
        level=float(cfg.get("level", 0.05)),
        beta_true=float(cfg.get("beta_true", 0.0)),
        family=cfg.get("family", "ar1"),
        rho=float(cfg.get("rho", 0.7)),
        decay=float(cfg.get("decay", 10.0)),
        hetero_form=cfg.get("hetero_form"),
        delta1=float(cfg.get("delta1", 0.0)),
        delta2=float(cfg.get("delta2", 0.0)),
        master_seed=_resolve_seed(args, cfg),
        wild_multiplier=cfg.get("wild_multiplier", "gaussian"),
        fixedb_reps=int(cfg.get("fixedb_reps", 50_000)),
        fixedb_cache=cfg.get("fixedb_cache"),
    )
    report = run_experiment(exp, threads=args.threads or 1)
    print(report.to_text(), end="")
    if args.out is not None:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    return 0


def _cmd_fixedb(args) -> int:
    table = fixed_b_critical_values(
        args.b,
        args.q,
        steps=args.steps,
        reps=args.reps,
        cache_dir=args.cache_dir,
    )
    payload = {
        "version": _CONFIG_VERSION,
        "b": table.b,
        "q": table.q,
        "t_cv": {str(k): v for k, v in table.t_cv.items()},
        "wald_cv": {str(k): v for k, v in table.wald_cv.items()},
        "sim_params": table.sim_params,
    }
    _write_output(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def _cmd_validate(args) -> int:
    panel = ingest_csv(args.data)
    print(f"ok: balanced panel with n={panel.n}, T={panel.T}, k={panel.k}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqpanel",
        description="Cluster inference for two-way fixed-effects panels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="fit a panel CSV and run inference")
    est.add_argument("data", help="long-format panel CSV")
    est.add_argument("--config", help="JSON config (flags override)")
    est.add_argument("--out", help="write machine-readable JSON result here")
    est.add_argument("--seed", type=int, default=None, help="bootstrap seed")
    est.add_argument("--threads", type=int, default=None, help="accepted; estimation is single-dataset")
    est.add_argument(
        "--method",
        action="append",
        choices=METHODS,
        help="inference method (repeatable; default hs-asy, hs-nb)",
    )
    est.add_argument("--bootstrap-reps", type=int, default=None, help="bootstrap draws (default 999)")
    est.add_argument("--level", type=float, default=None, help="nominal level (default 0.05)")
    est.add_argument("--beta0", default=None, help="null vector, comma-separated (default zeros)")
    est.set_defaults(func=_cmd_estimate)

    sim = sub.add_parser("simulate", help="simulate a panel or run an experiment")
    sim.add_argument("--config", required=True, help="versioned JSON config")
    sim.add_argument("--out", help="output file (panel CSV or report CSV)")
    sim.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    sim.add_argument("--threads", type=int, default=None, help="worker threads for experiments")
    sim.set_defaults(func=_cmd_simulate)

    fb = sub.add_parser("fixedb-cv", help="simulate fixed-b critical values")
    fb.add_argument("--b", type=float, required=True, help="bandwidth ratio in (0, 1]")
    fb.add_argument("--q", type=int, default=1, help="restriction count (default 1)")
    fb.add_argument("--steps", type=int, default=1000, help="Wiener grid steps")
    fb.add_argument("--reps", type=int, default=50_000, help="simulated paths")
    fb.add_argument("--cache-dir", default=None, help="JSON cache directory")
    fb.add_argument("--out", help="write the table JSON here")
    fb.set_defaults(func=_cmd_fixedb)

    val = sub.add_parser("validate", help="validate a panel CSV")
    val.add_argument("data", help="long-format panel CSV")
    val.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PanelDataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
