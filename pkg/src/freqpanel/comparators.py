"""Kernel and block-bootstrap baselines for the cluster estimator.

Bartlett-kernel HAC on cross-sectional score sums (the Driscoll-Kraay
construction), the Andrews AR(1) plug-in bandwidth, simulated fixed-b
critical values, and the pairs moving-block bootstrap over time slices
of the full cross-section.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cluster import CovEstimate, TestResult, _enforce_psd, wald_test
from .errors import EstimationError, PanelDataError
from .estimators import FeEstimate, fe_estimate_time
from .panel import PanelData, WithinPanel, within_transform

__all__ = [
    "FixedBTable",
    "HacConfig",
    "MbbConfig",
    "MbbResult",
    "andrews_ar1_bandwidth",
    "andrews_raw_bandwidth",
    "dk_cov_estimate",
    "dk_hac_phi",
    "fixed_b_critical_values",
    "mbb_bootstrap",
    "score_series",
]

_FIXEDB_LEVELS = (0.10, 0.05, 0.01)
_FIXEDB_MEMO: dict = {}
_FIXEDB_VERSION = 1
_FIXEDB_SALT = 905157


@dataclass
class HacConfig:
    """Bartlett-kernel bandwidth; the kernel itself is fixed."""

    bandwidth: float
    kernel: str = "bartlett"

    def __post_init__(self) -> None:
        if self.kernel != "bartlett":
            msg = f"only the Bartlett kernel is supported, got {self.kernel!r}"
            raise PanelDataError(msg)
        if not self.bandwidth >= 1.0:
            msg = f"bandwidth must be >= 1, got {self.bandwidth}"
            raise PanelDataError(msg)


def score_series(w: WithinPanel, residuals: np.ndarray) -> np.ndarray:
    """Cross-sectional score sums h_t = sum_p x_tilde_pt u_pt, shape (T, k)."""
    u = np.asarray(residuals, dtype=float)
    if u.shape != w.y_tilde.shape:
        msg = f"residual shape {u.shape} does not match panel"
        raise PanelDataError(msg)
    return np.einsum("pta,pt->ta", w.x_tilde, u)


def dk_hac_phi(
    w: WithinPanel, residuals: np.ndarray, cfg: HacConfig
) -> np.ndarray:
    """Bartlett HAC covariance of the pooled scores.

    (1/nT) sum_{|l| < m} K(l/m) sum_t h_t h'_{t+l} over the cross-
    sectional score sums h_t; O(T m) and algebraically identical to the
    quadruple sum over (p, q, t, s).  Bartlett weights keep it PSD.
    """
    h = score_series(w, residuals)
    t_len, k = h.shape
    n = w.n
    m = float(cfg.bandwidth)
    phi = np.einsum("ta,tb->ab", h, h)
    lmax = min(t_len - 1, int(np.ceil(m)) - 1)
    for lag in range(1, lmax + 1):
        weight = 1.0 - lag / m
        g = np.einsum("ta,tb->ab", h[: t_len - lag], h[lag:])
        phi = phi + weight * (g + g.T)
    return _enforce_psd(phi / (n * t_len), what="HAC covariance")


def dk_cov_estimate(
    est: FeEstimate, cfg: HacConfig
) -> CovEstimate:
    """Sandwich covariance with the Bartlett HAC filling."""
    phi = dk_hac_phi(est.within, est.residuals_time, cfg)
    sigma = est.sxx / (est.n * est.T)
    sigma_inv = np.linalg.inv(sigma)
    vhat = _enforce_psd(sigma_inv @ phi @ sigma_inv, what="HAC sandwich")
    return CovEstimate(phi=phi, sigma_x=sigma, vhat=vhat)


def andrews_raw_bandwidth(series: np.ndarray) -> float:
    """Unrounded AR(1) plug-in Bartlett bandwidth 1.1447 (alpha(1) T)^(1/3).

    Fits rho to each column of the score series by least squares without
    intercept and combines with unit weights into

        alpha(1) = sum_m 4 rho_m^2 s_m^4 / ((1-rho_m)^6 (1+rho_m)^2)
                 / sum_m s_m^4 / (1-rho_m)^4;

    for one column this is 4 rho^2 / ((1-rho)^2 (1+rho)^2).  The kernel
    bandwidth rounds this up (andrews_ar1_bandwidth); the block length
    for the pairs bootstrap takes its integer part instead.
    """
    h = np.asarray(series, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    t_len = h.shape[0]
    if t_len < 8:
        msg = f"need T >= 8 for the plug-in fit, got {t_len}"
        raise PanelDataError(msg)
    num = 0.0
    den = 0.0
    for m in range(h.shape[1]):
        lead, lagd = h[1:, m], h[:-1, m]
        denom = float(lagd @ lagd)
        rho = float(lead @ lagd) / denom if denom > 0.0 else 0.0
        cap = 1.0 - 1e-6
        if abs(rho) >= cap:
            warnings.warn(
                f"AR(1) plug-in fit near unit root (rho = {rho:.8f}); clamped",
                RuntimeWarning,
                stacklevel=2,
            )
            rho = np.sign(rho) * cap
        s2 = float(np.mean((lead - rho * lagd) ** 2))
        num += 4.0 * rho**2 * s2**2 / ((1.0 - rho) ** 6 * (1.0 + rho) ** 2)
        den += s2**2 / (1.0 - rho) ** 4
    alpha = num / den if den > 0.0 else 0.0
    return 1.1447 * (alpha * t_len) ** (1.0 / 3.0)


def andrews_ar1_bandwidth(series: np.ndarray) -> int:
    """Upward-rounded plug-in bandwidth, floored at 1."""
    return max(int(np.ceil(andrews_raw_bandwidth(series))), 1)


@dataclass
class FixedBTable:
    """Simulated critical values for the Bartlett fixed-b limit at one b."""

    b: float
    q: int
    t_cv: dict[float, float]
    wald_cv: dict[float, float]
    sim_params: dict = field(default_factory=dict)


def _fixedb_simulate(b: float, q: int, steps: int, reps: int) -> FixedBTable:
    ss = np.random.SeedSequence(
        entropy=(_FIXEDB_SALT, q, steps, reps, int(round(b * 1e12)))
    )
    rng = np.random.Generator(np.random.Philox(ss))
    sb = max(1, int(round(b * steps)))
    b_eff = sb / steps
    r_grid = np.arange(steps + 1) / steps
    wald_vals = np.empty(reps)
    chunk = max(1, min(reps, 4_000_000 // (steps * q)))
    done = 0
    while done < reps:
        c = min(chunk, reps - done)
        dw = rng.standard_normal((c, steps, q)) / np.sqrt(steps)
        w = np.concatenate([np.zeros((c, 1, q)), np.cumsum(dw, axis=1)], axis=1)
        w1 = w[:, -1, :]
        bridge = w - r_grid[None, :, None] * w1[:, None, :]
        full = np.einsum("cia,cib->cab", bridge[:, 1:], bridge[:, 1:]) / steps
        shifted = (
            np.einsum(
                "cia,cib->cab",
                bridge[:, 1 + sb :],
                bridge[:, 1 : steps + 1 - sb],
            )
            / steps
        )
        cmat = (2.0 / b_eff) * full - (shifted + shifted.transpose(0, 2, 1)) / b_eff
        sol = np.linalg.solve(cmat, w1[:, :, None])[:, :, 0]
        wald_vals[done : done + c] = np.einsum("ca,ca->c", w1, sol)
        done += c
    levels = {}
    t_levels = {}
    for lev in _FIXEDB_LEVELS:
        cv = float(np.quantile(wald_vals, 1.0 - lev))
        levels[lev] = cv
        t_levels[lev] = float(np.sqrt(cv)) if q == 1 else float("nan")
    return FixedBTable(
        b=float(b),
        q=q,
        t_cv=t_levels,
        wald_cv=levels,
        sim_params={
            "steps": steps,
            "reps": reps,
            "seed_salt": _FIXEDB_SALT,
            "version": _FIXEDB_VERSION,
        },
    )


def _fixedb_cache_path(cache_dir, b: float, q: int, steps: int, reps: int) -> Path:
    name = f"fixedb_v{_FIXEDB_VERSION}_q{q}_b{b:.12f}_s{steps}_r{reps}.json"
    return Path(cache_dir) / name


def fixed_b_critical_values(
    b: float,
    q: int = 1,
    *,
    steps: int = 1000,
    reps: int = 50_000,
    cache_dir=None,
) -> FixedBTable:
    """Critical values of the fixed-b Bartlett limit by path simulation.

    Discretizes q-dimensional Wiener paths on a grid (b is snapped to the
    grid for the shifted integral), forms the bridge functional C_q, and
    reads off upper quantiles of W_q(1)' C_q^{-1} W_q(1); for q = 1 the
    two-sided t critical value is its square root.  Tables are memoized
    in-process and optionally in a versioned JSON cache whose entries
    regenerate bit-identically (the simulation seed is derived from the
    parameter key).
    """
    if not 0.0 < b <= 1.0:
        msg = f"b must be in (0, 1], got {b}"
        raise PanelDataError(msg)
    if q < 1:
        msg = f"q must be >= 1, got {q}"
        raise PanelDataError(msg)
    key = (round(float(b), 12), q, steps, reps)
    if key in _FIXEDB_MEMO:
        return _FIXEDB_MEMO[key]
    table = None
    path = None
    if cache_dir is not None:
        path = _fixedb_cache_path(cache_dir, b, q, steps, reps)
        if path.exists():
            raw = json.loads(path.read_text())
            if raw.get("version") == _FIXEDB_VERSION:
                table = FixedBTable(
                    b=raw["b"],
                    q=raw["q"],
                    t_cv={float(k): v for k, v in raw["t_cv"].items()},
                    wald_cv={float(k): v for k, v in raw["wald_cv"].items()},
                    sim_params=raw["sim_params"],
                )
    if table is None:
        table = _fixedb_simulate(float(b), q, steps, reps)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            payload = {
                "version": _FIXEDB_VERSION,
                "b": table.b,
                "q": table.q,
                "t_cv": {str(k): v for k, v in table.t_cv.items()},
                "wald_cv": {str(k): v for k, v in table.wald_cv.items()},
                "sim_params": table.sim_params,
            }
            path.write_text(json.dumps(payload, sort_keys=True, indent=1))
    _FIXEDB_MEMO[key] = table
    return table


@dataclass
class MbbConfig:
    """Moving-block bootstrap settings: block length, draws, seed."""

    block_length: int
    B: int
    rng_seed: int

    def __post_init__(self) -> None:
        if self.block_length < 1:
            msg = f"block length must be >= 1, got {self.block_length}"
            raise PanelDataError(msg)
        if self.B < 1:
            msg = f"B must be >= 1, got {self.B}"
            raise PanelDataError(msg)


@dataclass
class MbbResult:
    """Pairs-MBB outcome: p-value plus the draw-level statistics."""

    pvalue: float
    observed: TestResult
    wald_stars: np.ndarray
    degenerate: np.ndarray
    block_length: int
    k_blocks: int

    @property
    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.degenerate))


def _mbb_paths(cfg: MbbConfig, t_len: int, base_seed) -> np.ndarray:
    """Per-draw substream block starts, shape (B, k_blocks)."""
    from .bootstrap import _draw_rng

    ell = cfg.block_length
    k_blocks = t_len // ell
    starts = np.empty((cfg.B, k_blocks), dtype=np.int64)
    base = cfg.rng_seed if base_seed is None else base_seed
    for b in range(cfg.B):
        starts[b] = _draw_rng(base, b).integers(0, t_len - ell + 1, size=k_blocks)
    return starts


def _demean_batch(a: np.ndarray) -> np.ndarray:
    """Two-way within transform over the trailing panel axes of (B, n, T[, k])."""
    mean_p = a.mean(axis=1, keepdims=True)
    mean_t = a.mean(axis=2, keepdims=True)
    grand = a.mean(axis=(1, 2), keepdims=True)
    return a - mean_p - mean_t + grand


def mbb_bootstrap(
    panel: PanelData,
    cfg: MbbConfig,
    *,
    hac_bandwidth: float | None = None,
    beta0: np.ndarray | None = None,
    base_seed=None,
) -> MbbResult:
    """Pairs moving-block bootstrap of the HAC Wald statistic.

    Resamples k = floor(T/ell) blocks of consecutive whole time slices
    (y and x together) from the T - ell + 1 overlapping blocks, giving a
    bootstrap panel of realized length k*ell; each draw re-runs the
    within transform and the fixed-effects fit, and its statistic uses
    the blockwise score covariance at the realized length.  With ell = 1
    this is i.i.d. resampling of time slices.

    The reference statistic is the Bartlett-HAC Wald at hac_bandwidth
    (Andrews plug-in if omitted).
    """
    ell = cfg.block_length
    t_len = panel.T
    if ell > t_len:
        msg = f"block length {ell} exceeds T = {t_len}"
        raise PanelDataError(msg)
    w = within_transform(panel)
    est = fe_estimate_time(w)
    if beta0 is None:
        beta0 = np.zeros(est.k)
    beta0 = np.atleast_1d(np.asarray(beta0, dtype=float))
    if hac_bandwidth is None:
        hac_bandwidth = andrews_ar1_bandwidth(score_series(w, est.residuals_time))
    observed = wald_test(est, dk_cov_estimate(est, HacConfig(hac_bandwidth)), beta0)

    k_blocks = t_len // ell
    t_star = k_blocks * ell
    starts = _mbb_paths(cfg, t_len, base_seed)
    offsets = np.arange(ell)
    # time index matrix tau (B, T*) gathering whole (y, x) slices per draw
    tau = (starts[:, :, None] + offsets[None, None, :]).reshape(cfg.B, t_star)

    n, k = panel.n, panel.k
    wald_stars = np.empty(cfg.B)
    degenerate = np.zeros(cfg.B, dtype=bool)
    chunk = max(1, int(2**21 // max(n * t_star * k, 1)) + 1)
    for lo in range(0, cfg.B, chunk):
        sl = slice(lo, min(lo + chunk, cfg.B))
        tau_c = tau[sl]
        y_star = _demean_batch(np.moveaxis(panel.y[:, tau_c], 1, 0))
        x_star = _demean_batch(np.moveaxis(panel.x[:, tau_c, :], 1, 0))
        sxx = np.einsum("bpta,bptc->bac", x_star, x_star)
        sxy = np.einsum("bpta,bpt->ba", x_star, y_star)
        evals, evecs = np.linalg.eigh(sxx)
        bad = evals[:, 0] <= 1e-12 * np.maximum(evals[:, -1], 1e-300)
        safe = np.where(evals > 0.0, evals, 1.0)
        beta_stars = np.einsum(
            "bim,bm,bjm,bj->bi", evecs, 1.0 / safe, evecs, sxy
        )
        resid = y_star - np.einsum("ba,bpta->bpt", beta_stars, x_star)
        scores = np.einsum("bpta,bpt->bta", x_star, resid) / n
        block_sums = scores.reshape(-1, k_blocks, ell, k).sum(axis=2) / np.sqrt(ell)
        phi = np.einsum("bja,bjc->bac", block_sums, block_sums) / k_blocks
        sigma = sxx / (n * t_star)
        sig_evals, sig_evecs = np.linalg.eigh(sigma)
        bad |= sig_evals[:, 0] <= 1e-12 * np.maximum(sig_evals[:, -1], 1e-300)
        sig_safe = np.where(sig_evals > 0.0, sig_evals, 1.0)
        sigma_inv = np.einsum("bim,bm,bjm->bij", sig_evecs, 1.0 / sig_safe, sig_evecs)
        vhat = sigma_inv @ phi @ sigma_inv
        vhat = 0.5 * (vhat + vhat.transpose(0, 2, 1))
        d = beta_stars - est.beta[None, :]
        v_evals, v_evecs = np.linalg.eigh(vhat)
        bad |= (v_evals[:, -1] <= 0.0) | (
            v_evals[:, 0] <= 1e-12 * np.maximum(v_evals[:, -1], 1e-300)
        )
        proj = np.einsum("bim,bi->bm", v_evecs, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = t_star * np.sum(proj**2 / v_evals, axis=1)
        wald_stars[sl] = np.where(bad, np.nan, np.clip(stat, 0.0, None))
        degenerate[sl] = bad

    valid = wald_stars[~degenerate]
    if valid.size == 0:
        msg = "all moving-block draws degenerate"
        raise EstimationError(msg)
    if degenerate.sum() / cfg.B >= 0.01:
        msg = (
            f"{int(degenerate.sum())} of {cfg.B} moving-block draws degenerate (>= 1%)"
        )
        raise EstimationError(msg)
    count = int(np.count_nonzero(valid >= observed.wald))
    pvalue = (1 + count) / (valid.size + 1)
    return MbbResult(
        pvalue=pvalue,
        observed=observed,
        wald_stars=wald_stars,
        degenerate=degenerate,
        block_length=ell,
        k_blocks=k_blocks,
    )
