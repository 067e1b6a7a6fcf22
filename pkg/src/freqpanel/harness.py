"""Monte Carlo experiment runner.

Runs size/power grids over (n, T) cells with deterministic named seed
substreams, so reports are byte-identical regardless of worker count.
Each replication simulates a panel, fits the two-way fixed-effects
estimator, and evaluates every requested inference method at the
nominal level.
"""

from __future__ import annotations

import concurrent.futures
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _pkg_version
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
from .dgp import ArmaSpec, DgpSpec, build_dgp_spec, heterogeneous_specs, simulate_panel
from .errors import ConfigError, EstimationError
from .estimators import fe_estimate_freq
from .hetero import hetero_scale_estimates, robust_cov_estimate, run_robust_bootstrap
from .panel import within_transform

__all__ = [
    "CellReport",
    "Experiment",
    "McReport",
    "run_experiment",
    "seed_plan",
]

METHODS = (
    "hs-asy",
    "hs-nb",
    "hs-wb",
    "hs-robust-asy",
    "hs-robust-nb",
    "dk-asy",
    "dk-fixb",
    "dk-mbb",
)

_STREAM_CODES = {
    "design": 0,
    "data": 1,
    "nb": 2,
    "wb": 3,
    "robust-nb": 4,
    "mbb": 5,
}

_FAMILIES = ("ar1", "mixed_ar1", "mixed_ar1_ma1", "mixed_ar3", "mixed_ar3_ma3")


def seed_plan(
    master_seed: int, cell: int, replication: int | None = None, stream: str = "data"
) -> np.random.SeedSequence:
    """Named substream for (cell, replication, stream).

    Counter-based spawn keys make the map injective by construction:
    distinct inputs give distinct spawn keys, and key tuples of different
    lengths never collide.  Design streams (replication None) are shared
    across replications.
    """
    if stream not in _STREAM_CODES:
        msg = f"unknown stream {stream!r}; expected one of {sorted(_STREAM_CODES)}"
        raise ConfigError(msg)
    code = _STREAM_CODES[stream]
    key = (cell, code) if replication is None else (cell, code, replication)
    return np.random.SeedSequence(entropy=master_seed, spawn_key=key)


@dataclass
class Experiment:
    """One Monte Carlo grid: DGP settings, methods, sizes, seeds."""

    cells: tuple
    methods: tuple
    replications: int
    bootstrap_reps: int = 199
    level: float = 0.05
    beta_true: float = 0.0
    family: str = "ar1"
    rho: float = 0.7
    decay: float = 10.0
    hetero_form: str | None = None
    delta1: float = 0.0
    delta2: float = 0.0
    master_seed: int = 0
    wild_multiplier: str = "gaussian"
    fixedb_reps: int = 50_000
    fixedb_cache: str | None = None

    def __post_init__(self) -> None:
        self.cells = tuple((int(n), int(t)) for n, t in self.cells)
        self.methods = tuple(self.methods)
        if not self.cells:
            msg = "experiment needs at least one (n, T) cell"
            raise ConfigError(msg)
        if not self.methods:
            msg = "experiment needs at least one method"
            raise ConfigError(msg)
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            msg = f"unknown methods {sorted(unknown)}; expected subset of {METHODS}"
            raise ConfigError(msg)
        if self.replications < 1:
            msg = f"replications must be >= 1, got {self.replications}"
            raise ConfigError(msg)
        if not 0.0 < self.level < 1.0:
            msg = f"level must be in (0, 1), got {self.level}"
            raise ConfigError(msg)
        if self.family not in _FAMILIES:
            msg = f"unknown DGP family {self.family!r}; expected one of {_FAMILIES}"
            raise ConfigError(msg)
        if "dk-fixb" in self.methods and round(self.level, 10) not in (0.10, 0.05, 0.01):
            msg = "dk-fixb critical values are tabulated at levels 0.10, 0.05, 0.01"
            raise ConfigError(msg)


@dataclass
class CellReport:
    """Rates, Monte Carlo standard errors, and diagnostics for one cell."""

    n: int
    T: int
    rates: dict
    stderrs: dict
    diagnostics: dict


@dataclass
class McReport:
    """Experiment outcome; serializations exclude the wall time."""

    cells: list
    replications: int
    level: float
    provenance: dict
    wall_time_s: float = field(default=0.0, compare=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            "n,T,method,rate,stderr,replications,mean_bandwidth,"
            "mean_block_length,mean_scale_cv,degenerate_draws\n"
        )
        for cell in self.cells:
            diag = cell.diagnostics
            for method in sorted(cell.rates):
                buf.write(
                    f"{cell.n},{cell.T},{method},{cell.rates[method]:.6f},"
                    f"{cell.stderrs[method]:.6f},{self.replications},"
                    f"{diag.get('mean_bandwidth', float('nan')):.4f},"
                    f"{diag.get('mean_block_length', float('nan')):.4f},"
                    f"{diag.get('mean_scale_cv', 0.0):.4f},"
                    f"{diag.get('degenerate_' + method, 0)}\n"
                )
        return buf.getvalue()

    def to_text(self) -> str:
        methods = sorted({m for cell in self.cells for m in cell.rates})
        width = max(16, *(len(m) + 2 for m in methods))
        lines = [
            f"rejection rates at level {self.level:g} "
            f"(R = {self.replications}, se in parens)"
        ]
        header = f"{'(n, T)':>12} " + "".join(f"{m:>{width}}" for m in methods)
        lines.append(header)
        for cell in self.cells:
            label = f"({cell.n}, {cell.T})"
            row = f"{label:>12} "
            for m in methods:
                entry = f"{cell.rates[m]:.3f} ({cell.stderrs[m]:.3f})"
                row += f"{entry:>{width}}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def _cell_spec(exp: Experiment, cell_index: int, n: int, t_len: int) -> DgpSpec:
    """Frozen design for one cell from its design stream."""
    design_rng = np.random.Generator(
        np.random.Philox(seed_plan(exp.master_seed, cell_index, stream="design"))
    )
    if exp.family == "ar1":
        arma_u = ArmaSpec.ar1(n, exp.rho)
        arma_x = ArmaSpec.ar1(n, exp.rho)
    else:
        arma_u = heterogeneous_specs(n, exp.family)
        arma_x = heterogeneous_specs(n, exp.family)
    return build_dgp_spec(
        n,
        t_len,
        beta=[exp.beta_true],
        decay=exp.decay,
        arma_u=arma_u,
        arma_x=arma_x,
        hetero_form=exp.hetero_form,
        delta1=exp.delta1,
        delta2=exp.delta2,
        design_rng=design_rng,
    )


def _replication_outcome(
    exp: Experiment, spec: DgpSpec, cell_index: int, rep: int
) -> dict:
    """Reject/accept decisions plus diagnostics for one replication."""
    methods = exp.methods
    level = exp.level
    sim = simulate_panel(
        spec, spec.T, seed_plan(exp.master_seed, cell_index, rep, "data")
    )
    w = within_transform(sim.panel)
    est = fe_estimate_freq(w)
    beta0 = np.zeros(est.k)
    out = {
        "reject": {},
        "degenerate": {},
        "bandwidth": float("nan"),
        "block_length": float("nan"),
        "scale_cv": sim.scale_cv,
    }

    needs_hs = any(m in methods for m in ("hs-asy", "hs-nb", "hs-wb"))
    if needs_hs:
        tr = wald_test(est, cov_estimate(est.x_spectrum, est.residual_spectrum), beta0)
        if "hs-asy" in methods:
            out["reject"]["hs-asy"] = tr.pvalue_asymptotic <= level
        for method, scheme, stream in (
            ("hs-nb", "naive", "nb"),
            ("hs-wb", "wild", "wb"),
        ):
            if method in methods:
                cfg = BootstrapConfig(
                    scheme=scheme,
                    B=exp.bootstrap_reps,
                    rng_seed=0,
                    wild_multiplier=exp.wild_multiplier,
                )
                res = run_bootstrap(
                    est, cfg, base_seed=seed_plan(exp.master_seed, cell_index, rep, stream)
                )
                out["reject"][method] = bootstrap_pvalue(tr.wald, res) <= level
                out["degenerate"][method] = res.n_degenerate

    if any(m in methods for m in ("hs-robust-asy", "hs-robust-nb")):
        scales = hetero_scale_estimates(est.residuals_time)
        rtr = wald_test(est, robust_cov_estimate(est, scales), beta0)
        if "hs-robust-asy" in methods:
            out["reject"]["hs-robust-asy"] = rtr.pvalue_asymptotic <= level
        if "hs-robust-nb" in methods:
            cfg = BootstrapConfig(scheme="naive", B=exp.bootstrap_reps, rng_seed=0)
            res = run_robust_bootstrap(
                est,
                scales,
                cfg,
                base_seed=seed_plan(exp.master_seed, cell_index, rep, "robust-nb"),
            )
            out["reject"]["hs-robust-nb"] = bootstrap_pvalue(rtr.wald, res) <= level
            out["degenerate"]["hs-robust-nb"] = res.n_degenerate

    if any(m in methods for m in ("dk-asy", "dk-fixb", "dk-mbb")):
        raw_bw = andrews_raw_bandwidth(score_series(w, est.residuals_time))
        m_t = max(int(np.ceil(raw_bw)), 1)
        out["bandwidth"] = m_t
        hac_cfg = HacConfig(bandwidth=float(m_t))
        dk_tr = wald_test(est, dk_cov_estimate(est, hac_cfg), beta0)
        if "dk-asy" in methods:
            out["reject"]["dk-asy"] = dk_tr.pvalue_asymptotic <= level
        if "dk-fixb" in methods:
            table = fixed_b_critical_values(
                m_t / est.T,
                est.k,
                reps=exp.fixedb_reps,
                cache_dir=exp.fixedb_cache,
            )
            out["reject"]["dk-fixb"] = dk_tr.wald > table.wald_cv[round(level, 10)]
        if "dk-mbb" in methods:
            ell = min(max(int(raw_bw), 1), est.T)
            out["block_length"] = ell
            mbb = mbb_bootstrap(
                sim.panel,
                MbbConfig(block_length=ell, B=exp.bootstrap_reps, rng_seed=0),
                hac_bandwidth=float(m_t),
                beta0=beta0,
                base_seed=seed_plan(exp.master_seed, cell_index, rep, "mbb"),
            )
            out["reject"]["dk-mbb"] = mbb.pvalue <= level
            out["degenerate"]["dk-mbb"] = mbb.n_degenerate
    return out


def _run_cell(exp: Experiment, cell_index: int, threads: int) -> CellReport:
    n, t_len = exp.cells[cell_index]
    spec = _cell_spec(exp, cell_index, n, t_len)

    def work(rep: int) -> dict:
        try:
            return _replication_outcome(exp, spec, cell_index, rep)
        except EstimationError as exc:
            msg = f"cell ({n}, {t_len}) replication {rep}: {exc}"
            raise EstimationError(msg) from exc

    reps = range(exp.replications)
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, reps))
    else:
        outcomes = [work(rep) for rep in reps]

    r_total = exp.replications
    rates, stderrs = {}, {}
    for method in exp.methods:
        hits = sum(1 for o in outcomes if o["reject"][method])
        rate = hits / r_total
        rates[method] = rate
        stderrs[method] = float(np.sqrt(rate * (1.0 - rate) / r_total))
    diagnostics = {
        "mean_scale_cv": float(np.mean([o["scale_cv"] for o in outcomes])),
    }
    bandwidths = [o["bandwidth"] for o in outcomes if np.isfinite(o["bandwidth"])]
    if bandwidths:
        diagnostics["mean_bandwidth"] = float(np.mean(bandwidths))
    blocks = [o["block_length"] for o in outcomes if np.isfinite(o["block_length"])]
    if blocks:
        diagnostics["mean_block_length"] = float(np.mean(blocks))
    for method in exp.methods:
        total = sum(o["degenerate"].get(method, 0) for o in outcomes)
        diagnostics[f"degenerate_{method}"] = total
    return CellReport(
        n=n, T=t_len, rates=rates, stderrs=stderrs, diagnostics=diagnostics
    )


def run_experiment(exp: Experiment, *, threads: int = 1) -> McReport:
    """Run every cell; deterministic under master_seed for any thread count.

    A hard numerical failure in any replication aborts its cell with the
    replication index attached; replications are never silently skipped.
    """
    start = time.perf_counter()
    cells = [_run_cell(exp, i, threads) for i in range(len(exp.cells))]
    wall = time.perf_counter() - start
    provenance = {
        "master_seed": exp.master_seed,
        "replications": exp.replications,
        "bootstrap_reps": exp.bootstrap_reps,
        "level": exp.level,
        "family": exp.family,
        "rho": exp.rho,
        "decay": exp.decay,
        "beta_true": exp.beta_true,
        "hetero_form": exp.hetero_form,
        "delta1": exp.delta1,
        "delta2": exp.delta2,
        "package_version": _pkg_version,
        "numpy_version": np.__version__,
    }
    return McReport(
        cells=cells,
        replications=exp.replications,
        level=exp.level,
        provenance=provenance,
        wall_time_s=wall,
    )
