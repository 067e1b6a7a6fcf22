"""Frequency-domain bootstrap schemes for the cluster Wald statistic.

Two schemes: the "naive" scheme resamples whole cross-sectional residual
vectors over time and rescales their DFT by the average standardized
periodogram (valid when temporal dependence is homogeneous across
individuals); the "wild" scheme multiplies each residual DFT ordinate by
an i.i.d. mean-zero unit-variance multiplier, mirrored across conjugate
frequencies (valid under heterogeneous temporal dependence).

Per-draw operations are exposed with a caller-supplied generator; the
runner derives one substream per draw index from the configured seed, so
a run is reproducible draw-by-draw no matter how draws are scheduled,
and evaluates the draws in vectorized batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cluster import compensated_sum, sigma_x_hat
from .errors import EstimationError, PanelDataError
from .estimators import FeEstimate
from .panel import Spectrum, dft, periodogram, real_part

__all__ = [
    "BootstrapConfig",
    "BootstrapDraw",
    "BootstrapResult",
    "DegenerateDrawError",
    "StandardizedResidualSet",
    "bootstrap_pvalue",
    "draw_seed_sequence",
    "naive_bootstrap_draw",
    "run_bootstrap",
    "standardized_residuals",
    "wild_bootstrap_draw",
]

_SCHEMES = ("naive", "wild")
_MULTIPLIERS = ("gaussian", "rademacher")


class DegenerateDrawError(EstimationError):
    """A bootstrap draw produced a singular covariance; flag and exclude."""


@dataclass
class BootstrapConfig:
    """Scheme, replication count, seed, and wild multiplier law."""

    scheme: str
    B: int
    rng_seed: int
    wild_multiplier: str = "gaussian"

    def __post_init__(self) -> None:
        if self.scheme not in _SCHEMES:
            msg = f"scheme must be one of {_SCHEMES}, got {self.scheme!r}"
            raise PanelDataError(msg)
        if self.B < 1:
            msg = f"B must be >= 1, got {self.B}"
            raise PanelDataError(msg)
        if self.wild_multiplier not in _MULTIPLIERS:
            msg = f"wild_multiplier must be one of {_MULTIPLIERS}"
            raise PanelDataError(msg)
        if int(self.rng_seed) < 0:
            msg = "rng_seed must be a nonnegative integer"
            raise PanelDataError(msg)


@dataclass
class BootstrapDraw:
    """One bootstrap replication of the estimator and its covariance."""

    beta_star: np.ndarray
    phi_star: np.ndarray
    vhat_star: np.ndarray
    wald_star: float


@dataclass
class StandardizedResidualSet:
    """Residuals with per-individual scale removed, for the naive scheme.

    u_check has (1/T) sum_t u_check^2 = 1 for every individual whose
    residual row is not identically zero; zero rows are kept as zeros
    and produce degenerate draws downstream rather than an error here.
    """

    u_hat: np.ndarray
    u_check: np.ndarray
    sigma_tilde: np.ndarray
    avg_check_periodogram: np.ndarray


def standardized_residuals(est: FeEstimate) -> StandardizedResidualSet:
    """Standardize residuals by sigma_tilde(p) = sqrt(T^{-1} sum_t u^2_pt)."""
    u = est.residuals_time
    sigma = np.sqrt((u**2).mean(axis=1))
    safe = np.where(sigma > 0.0, sigma, 1.0)
    u_check = u / safe[:, None]
    avg = periodogram(dft(u_check)).mean(axis=0)
    return StandardizedResidualSet(
        u_hat=u, u_check=u_check, sigma_tilde=sigma, avg_check_periodogram=avg
    )


def draw_seed_sequence(base, draw_index: int) -> np.random.SeedSequence:
    """Substream for one draw: deterministic in (seed, draw_index) only.

    base may be an integer seed or a SeedSequence whose spawn key is
    extended, so nested use (experiment -> replication -> draw) stays
    collision-free.
    """
    if isinstance(base, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=base.entropy, spawn_key=tuple(base.spawn_key) + (int(draw_index),)
        )
    return np.random.SeedSequence(entropy=int(base), spawn_key=(int(draw_index),))


def _draw_rng(base, draw_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(draw_seed_sequence(base, draw_index)))


def _vector_coeffs(spec: Spectrum) -> np.ndarray:
    c = spec.coeffs
    return c[:, :, None] if c.ndim == 2 else c


def _dft_batch(a: np.ndarray) -> np.ndarray:
    """DFT along the last axis with the t = 1..T phase convention."""
    t_len = a.shape[-1]
    lam = 2.0 * np.pi * np.arange(1, t_len) / t_len
    return np.fft.fft(a, axis=-1)[..., 1:] * np.exp(-1j * lam) / np.sqrt(t_len)


def _split_imag_batch(phi_c: np.ndarray, mag: np.ndarray):
    """Real parts of (B, k, k) covariance draws plus a contamination flag.

    A draw whose imaginary residual exceeds 1e-8 times its term-magnitude
    sum is flagged degenerate rather than aborting the batch: it means
    the draw's residual spectrum lost conjugate symmetry to cancellation
    (near-exact fits), and a systematic indexing bug still surfaces
    through the >= 1% degenerate-rate hard error.
    """
    scale = np.maximum(mag.max(axis=(-2, -1)), 1e-300)
    bad = np.abs(phi_c.imag).max(axis=(-2, -1)) > 1e-8 * scale
    return np.ascontiguousarray(phi_c.real), bad


def _psd_clip_batch(mats: np.ndarray, *, what: str) -> np.ndarray:
    """Symmetrize (B, k, k) matrices and clip roundoff-negative eigenvalues."""
    sym = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
    sym = np.ascontiguousarray(sym.real)
    evals, evecs = np.linalg.eigh(sym)
    scale = np.maximum(
        np.maximum(np.trace(sym, axis1=-2, axis2=-1), np.abs(evals).max(axis=-1)),
        1e-300,
    )
    if np.any(evals[:, 0] < -1e-10 * scale):
        worst = float(np.min(evals[:, 0] / scale))
        msg = f"{what} eigenvalue below roundoff band (relative {worst:.3e})"
        raise EstimationError(msg)
    needs = evals[:, 0] < 0.0
    if np.any(needs):
        clipped = np.clip(evals, 0.0, None)
        rebuilt = np.einsum("bim,bm,bjm->bij", evecs, clipped, evecs)
        sym = np.where(needs[:, None, None], rebuilt, sym)
        sym = 0.5 * (sym + np.swapaxes(sym, -1, -2))
    return sym


def _batch_quadform(vhat: np.ndarray, d: np.ndarray, n: int, t_len: int):
    """Wald quadratic forms nT d' vhat^{-1} d per draw, flagging singular draws."""
    evals, evecs = np.linalg.eigh(vhat)
    finite = np.isfinite(evals).all(axis=1) & np.isfinite(d).all(axis=1)
    degenerate = (
        ~finite
        | (evals[:, -1] <= 0.0)
        | (evals[:, 0] <= 1e-12 * np.maximum(evals[:, -1], 1e-300))
    )
    proj = np.einsum("bim,bi->bm", evecs, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        wald = n * t_len * np.sum(proj**2 / evals, axis=1)
    wald = np.where(degenerate, np.nan, np.clip(wald, 0.0, None))
    return wald, degenerate


def _finish_draws(
    est: FeEstimate,
    jy_star: np.ndarray,
    *,
    sigma_x: np.ndarray,
    phi_fn=None,
):
    """Common tail of every scheme: recenter, refit, bootstrap covariance.

    jy_star : (B, n, T-1) complex bootstrap outcome spectra before the
    cross-sectional recentering.  phi_fn maps the bootstrap residual
    spectra (B, n, T-1) to raw (B, k, k) covariance matrices; the default
    is the pooled-score cluster formula with the original regressors.
    """
    xc = _vector_coeffs(est.x_spectrum)
    n, t_len = est.n, est.T
    jy_t = jy_star - jy_star.mean(axis=1, keepdims=True)
    sxy = real_part(
        np.einsum("pja,bpj->ba", xc, np.conj(jy_t)), what="bootstrap cross moment"
    )
    factor = scipy.linalg.cho_factor(est.sxx, lower=True)
    beta_stars = scipy.linalg.cho_solve(factor, sxy.T).T
    ju = jy_t - np.einsum("ba,pja->bpj", beta_stars, xc)
    if phi_fn is None:
        scores = np.einsum("pja,bpj->bja", xc, np.conj(ju)) / np.sqrt(n)
        terms = np.einsum("bja,bjc->bjac", scores, np.conj(scores))
        phi_c = compensated_sum(terms, axis=1) / t_len
        phi_raw, bad_imag = _split_imag_batch(phi_c, np.abs(terms).sum(axis=1) / t_len)
    else:
        phi_raw, bad_imag = phi_fn(ju)
    phi_stars = _psd_clip_batch(phi_raw, what="bootstrap cluster covariance")
    sigma_inv = np.linalg.inv(sigma_x)
    vhat_stars = _psd_clip_batch(
        sigma_inv[None] @ phi_stars @ sigma_inv[None], what="bootstrap sandwich"
    )
    d = beta_stars - est.beta[None, :]
    wald_stars, degenerate = _batch_quadform(vhat_stars, d, n, t_len)
    degenerate = degenerate | bad_imag
    wald_stars = np.where(bad_imag, np.nan, wald_stars)
    return beta_stars, phi_stars, vhat_stars, wald_stars, degenerate


def _naive_jy(
    est: FeEstimate, resid: StandardizedResidualSet, idx: np.ndarray
) -> np.ndarray:
    """Bootstrap outcome spectra for resample index matrix idx (B, T)."""
    xc = _vector_coeffs(est.x_spectrum)
    u_star = np.ascontiguousarray(np.moveaxis(resid.u_hat[:, idx], 1, 0))
    ju_star = _dft_batch(u_star)
    scale = np.sqrt(resid.avg_check_periodogram)
    jfit = np.einsum("pja,a->pj", xc, est.beta)
    return jfit[None] + scale[None, None, :] * ju_star


def _mirror_eta(half: np.ndarray, t_len: int) -> np.ndarray:
    """Extend multipliers to j = 1..T-1 with eta_j = eta_{T-j}."""
    tt = t_len // 2
    nfreq = t_len - 1
    eta = np.empty(half.shape[:-1] + (nfreq,), dtype=float)
    eta[..., :tt] = half
    eta[..., tt:] = half[..., ::-1][..., (2 * tt - t_len + 1) :]
    return eta


def _wild_jy(est: FeEstimate, eta_full: np.ndarray) -> np.ndarray:
    xc = _vector_coeffs(est.x_spectrum)
    jfit = np.einsum("pja,a->pj", xc, est.beta)
    return jfit[None] + est.residual_spectrum.coeffs[None] * eta_full[:, None, :]


def _single_draw(est, jy, sigma_x, phi_fn=None) -> BootstrapDraw:
    beta_s, phi_s, vhat_s, wald_s, degen = _finish_draws(
        est, jy, sigma_x=sigma_x, phi_fn=phi_fn
    )
    if bool(degen[0]):
        msg = "bootstrap draw produced a singular covariance"
        raise DegenerateDrawError(msg)
    return BootstrapDraw(
        beta_star=beta_s[0],
        phi_star=phi_s[0],
        vhat_star=vhat_s[0],
        wald_star=float(wald_s[0]),
    )


def naive_bootstrap_draw(
    est: FeEstimate,
    resid: StandardizedResidualSet,
    x_spec: Spectrum,
    rng: np.random.Generator,
) -> BootstrapDraw:
    """One draw of the naive scheme.

    Draws T time indices i.i.d. uniform with replacement and resamples
    whole cross-sectional residual vectors (preserving dependence across
    p), rescales their DFT by the average standardized periodogram,
    recenters, refits, and rebuilds the cluster covariance.  The raw
    residuals are resampled; the standardized ones enter only through
    the periodogram average.
    """
    if x_spec is not est.x_spectrum and not np.array_equal(
        x_spec.coeffs, est.x_spectrum.coeffs
    ):
        msg = "x_spec must be the regressor spectrum the estimate was built from"
        raise PanelDataError(msg)
    idx = rng.integers(0, est.T, size=est.T)
    jy = _naive_jy(est, resid, idx[None, :])
    return _single_draw(est, jy, sigma_x_hat(est.x_spectrum))


def wild_bootstrap_draw(
    est: FeEstimate,
    x_spec: Spectrum,
    rng: np.random.Generator,
    *,
    multiplier: str = "gaussian",
    eta: np.ndarray | None = None,
) -> BootstrapDraw:
    """One draw of the wild scheme.

    Multiplies each residual DFT ordinate by eta_j, i.i.d. mean zero and
    unit variance for j = 1..T_half, mirrored as eta_j = eta_{T-j} above
    (for even T the Nyquist ordinate gets its own single real
    multiplier), which keeps the implied time-domain outcome real.  eta
    may be supplied explicitly (length T_half) as a test hook.
    """
    if x_spec is not est.x_spectrum and not np.array_equal(
        x_spec.coeffs, est.x_spectrum.coeffs
    ):
        msg = "x_spec must be the regressor spectrum the estimate was built from"
        raise PanelDataError(msg)
    tt = est.T // 2
    if eta is None:
        eta = _draw_eta(rng, multiplier, (tt,))
    else:
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (tt,):
            msg = f"eta must have length T//2 = {tt}, got shape {eta.shape}"
            raise PanelDataError(msg)
    jy = _wild_jy(est, _mirror_eta(eta[None, :], est.T))
    return _single_draw(est, jy, sigma_x_hat(est.x_spectrum))


def _draw_eta(rng: np.random.Generator, multiplier: str, shape) -> np.ndarray:
    if multiplier == "gaussian":
        return rng.standard_normal(shape)
    if multiplier == "rademacher":
        return 2.0 * rng.integers(0, 2, size=shape) - 1.0
    msg = f"unknown wild multiplier {multiplier!r}"
    raise PanelDataError(msg)


@dataclass
class BootstrapResult:
    """All draws of one bootstrap run; degenerate draws are NaN-flagged."""

    scheme: str
    beta_stars: np.ndarray
    phi_stars: np.ndarray
    vhat_stars: np.ndarray
    wald_stars: np.ndarray
    degenerate: np.ndarray

    @property
    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.degenerate))

    @property
    def n_valid(self) -> int:
        return int(self.degenerate.size - self.n_degenerate)


def _chunk_size(n: int, t_len: int, b_total: int) -> int:
    # keep per-chunk complex work arrays around 64 MB
    return max(1, min(b_total, int(2**22 // max(n * t_len, 1)) + 1))


def run_bootstrap(
    est: FeEstimate,
    cfg: BootstrapConfig,
    *,
    resid: StandardizedResidualSet | None = None,
    base_seed=None,
    jy_builder=None,
    phi_fn=None,
    sigma_x: np.ndarray | None = None,
) -> BootstrapResult:
    """Run B draws of the configured scheme with per-draw substreams.

    Draw b uses the substream (seed, b) regardless of batching, so the
    multiset of draws is independent of execution order and chunk size
    up to floating roundoff.  More than 1% degenerate draws is a hard
    error; fewer are excluded and reported.

    jy_builder/phi_fn are internal hooks (used by the robust scheme) that
    replace the outcome-spectrum construction and the covariance formula.
    """
    base = cfg.rng_seed if base_seed is None else base_seed
    if sigma_x is None:
        sigma_x = sigma_x_hat(est.x_spectrum)
    b_total = cfg.B
    if jy_builder is None:
        if cfg.scheme == "naive":
            if resid is None:
                resid = standardized_residuals(est)
            draws = np.empty((b_total, est.T), dtype=np.int64)
            for b in range(b_total):
                draws[b] = _draw_rng(base, b).integers(0, est.T, size=est.T)

            def jy_builder(sl):
                return _naive_jy(est, resid, draws[sl])

        else:
            tt = est.T // 2
            half = np.empty((b_total, tt), dtype=float)
            for b in range(b_total):
                half[b] = _draw_eta(_draw_rng(base, b), cfg.wild_multiplier, (tt,))
            eta_full = _mirror_eta(half, est.T)

            def jy_builder(sl):
                return _wild_jy(est, eta_full[sl])

    chunk = _chunk_size(est.n, est.T, b_total)
    parts = []
    for lo in range(0, b_total, chunk):
        sl = slice(lo, min(lo + chunk, b_total))
        parts.append(_finish_draws(est, jy_builder(sl), sigma_x=sigma_x, phi_fn=phi_fn))
    beta_stars = np.concatenate([p[0] for p in parts])
    phi_stars = np.concatenate([p[1] for p in parts])
    vhat_stars = np.concatenate([p[2] for p in parts])
    wald_stars = np.concatenate([p[3] for p in parts])
    degenerate = np.concatenate([p[4] for p in parts])
    result = BootstrapResult(
        scheme=cfg.scheme,
        beta_stars=beta_stars,
        phi_stars=phi_stars,
        vhat_stars=vhat_stars,
        wald_stars=wald_stars,
        degenerate=degenerate,
    )
    if result.n_degenerate / b_total >= 0.01:
        msg = (
            f"{result.n_degenerate} of {b_total} bootstrap draws degenerate "
            f"(>= 1%); refusing to report a p-value"
        )
        raise EstimationError(msg)
    return result


def bootstrap_pvalue(observed, result: BootstrapResult) -> float:
    """p = (1 + #{valid draws with wald* >= wald_obs}) / (#valid + 1)."""
    wald_obs = float(getattr(observed, "wald", observed))
    valid = result.wald_stars[~result.degenerate]
    if valid.size == 0:
        msg = "all bootstrap draws degenerate"
        raise EstimationError(msg)
    count = int(np.count_nonzero(valid >= wald_obs))
    return (1 + count) / (valid.size + 1)
