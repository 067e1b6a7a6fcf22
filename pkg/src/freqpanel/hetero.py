"""Robust inference under multiplicative groupwise heteroskedasticity.

Model errors take the form v_pt = sigma1(w_p) sigma2(rho_t) u_pt: an
individual-level scale times a time-level scale times a homoskedastic
core.  Estimated scales rescale the regressors and standardize the
residuals inside the cluster covariance; sigma1 cancels exactly in the
p-wise products, so only sigma2 matters.  The robust naive bootstrap
resamples the standardized residuals and puts the scale map back at the
destination period.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .bootstrap import (
    BootstrapConfig,
    BootstrapDraw,
    BootstrapResult,
    _dft_batch,
    _single_draw,
    _split_imag_batch,
    run_bootstrap,
)
from .cluster import CovEstimate, cluster_phi_freq, compensated_sum, sigma_x_hat
from .errors import EstimationError, PanelDataError
from .estimators import FeEstimate
from .panel import WithinPanel, dft, periodogram, real_part

__all__ = [
    "HeteroScaleEstimates",
    "hetero_scale_estimates",
    "robust_cluster_phi",
    "robust_cov_estimate",
    "robust_naive_bootstrap_draw",
    "run_robust_bootstrap",
]


@dataclass
class HeteroScaleEstimates:
    """Estimated squared scales and the standardized residuals.

    sigma1_p[p] = T^{-1} sum_t v^2_pt (individual scale proxy, squared),
    sigma2_t[t] = n^{-1} sum_p v^2_pt (time scale, squared),
    product_scale[p, t] = sigma1_p[p] * sigma2_t[t],
    u_standardized = v / sqrt(product_scale).

    sigma2 is identified only up to scale; its natural estimator already
    averages to the sample mean of v^2 over t, which is the normalization
    reported scales use.
    """

    sigma2_t: np.ndarray
    sigma1_p: np.ndarray
    product_scale: np.ndarray
    u_standardized: np.ndarray

    def __post_init__(self) -> None:
        n = self.sigma1_p.shape[0]
        t_len = self.sigma2_t.shape[0]
        if self.product_scale.shape != (n, t_len):
            msg = f"product_scale shape {self.product_scale.shape} != ({n}, {t_len})"
            raise PanelDataError(msg)
        if self.u_standardized.shape != (n, t_len):
            msg = "u_standardized shape does not match scales"
            raise PanelDataError(msg)
        if np.any(self.sigma1_p <= 0.0) or np.any(self.sigma2_t <= 0.0):
            msg = "scale estimates must be strictly positive"
            raise PanelDataError(msg)


def hetero_scale_estimates(residuals: np.ndarray) -> HeteroScaleEstimates:
    """Estimate the scale maps from residuals v_pt of the accented fit.

    Near-zero slice scales are floored at 1e-12 x their mean with a
    warning; identically zero residuals are degenerate and rejected.
    """
    v = np.asarray(residuals, dtype=float)
    sigma1 = (v**2).mean(axis=1)
    sigma2 = (v**2).mean(axis=0)
    if not sigma1.any() or not sigma2.any():
        msg = "residuals identically zero: scale estimation degenerate"
        raise EstimationError(msg)
    floor1 = 1e-12 * sigma1.mean()
    floor2 = 1e-12 * sigma2.mean()
    if np.any(sigma1 < floor1) or np.any(sigma2 < floor2):
        warnings.warn(
            "near-zero residual slice; flooring scale estimates",
            RuntimeWarning,
            stacklevel=2,
        )
        sigma1 = np.maximum(sigma1, floor1)
        sigma2 = np.maximum(sigma2, floor2)
    product = np.outer(sigma1, sigma2)
    return HeteroScaleEstimates(
        sigma2_t=sigma2,
        sigma1_p=sigma1,
        product_scale=product,
        u_standardized=v / np.sqrt(product),
    )


def robust_cluster_phi(
    w: WithinPanel, est: FeEstimate, scales: HeteroScaleEstimates
) -> np.ndarray:
    """Scale-weighted cluster covariance.

    Applies the pooled-score formula to the rescaled regressors
    sqrt(product_scale) * x_tilde and the standardized residuals.  The
    individual scale sigma1 multiplies one factor and divides the other
    within each individual's product, so the result does not depend on
    it (perturbing sigma1_p leaves the output unchanged to roundoff).
    """
    if w.x_tilde.shape[:2] != scales.product_scale.shape:
        msg = "scale map does not match panel dimensions"
        raise PanelDataError(msg)
    root = np.sqrt(scales.product_scale)
    x_dot = w.x_tilde * root[:, :, None]
    return cluster_phi_freq(dft(x_dot), dft(scales.u_standardized))


def robust_cov_estimate(est: FeEstimate, scales: HeteroScaleEstimates) -> CovEstimate:
    """Sandwich covariance with the robust filling.

    The bread is the plain (unweighted) regressor moment of the accented
    regressors; only the long-run score covariance gets the scale
    weighting.
    """
    phi = robust_cluster_phi(est.within, est, scales)
    sigma = sigma_x_hat(est.x_spectrum)
    sigma_inv = np.linalg.inv(sigma)
    vhat = sigma_inv @ phi @ sigma_inv
    vhat = 0.5 * (vhat + vhat.T)
    return CovEstimate(phi=phi, sigma_x=sigma, vhat=vhat)


def _idft_batch(coeffs: np.ndarray, t_len: int) -> np.ndarray:
    """Invert _dft_batch along the last axis (j = 0 coefficient zero)."""
    full = np.zeros(coeffs.shape[:-1] + (t_len,), dtype=complex)
    full[..., 1:] = coeffs
    lam = 2.0 * np.pi * np.arange(t_len) / t_len
    return np.sqrt(t_len) * np.fft.ifft(full * np.exp(1j * lam), axis=-1)


def _robust_hooks(est: FeEstimate, scales: HeteroScaleEstimates, draws: np.ndarray):
    """jy_builder and phi_fn for the robust naive scheme over index matrix draws."""
    xc = est.x_spectrum.coeffs
    if xc.ndim == 2:
        xc = xc[:, :, None]
    n, t_len = est.n, est.T
    root = np.sqrt(scales.product_scale)
    scale_j = np.sqrt(periodogram(dft(scales.u_standardized)).mean(axis=0))
    jfit = np.einsum("pja,a->pj", xc, est.beta)
    xdot_c = dft(est.within.x_tilde * root[:, :, None]).coeffs
    if xdot_c.ndim == 2:
        xdot_c = xdot_c[:, :, None]

    def jy_builder(sl):
        idx = draws[sl]
        u_star = np.ascontiguousarray(
            np.moveaxis(scales.u_standardized[:, idx], 1, 0)
        )
        v_star = root[None] * u_star  # scale at the destination period
        return jfit[None] + scale_j[None, None, :] * _dft_batch(v_star)

    def phi_fn(ju):
        # bootstrap residual spectra are spectra of v*-type residuals:
        # recover them in the time domain, re-standardize, re-weight
        v_time = real_part(
            _idft_batch(ju, t_len),
            what="bootstrap residual reconstruction",
            scale_floor=float(np.max(np.abs(jfit), initial=0.0)),
        )
        u_eff = v_time / root[None]
        ju_eff = _dft_batch(u_eff)
        scores = np.einsum("pja,bpj->bja", xdot_c, np.conj(ju_eff)) / np.sqrt(n)
        terms = np.einsum("bja,bjc->bjac", scores, np.conj(scores))
        phi_c = compensated_sum(terms, axis=1) / t_len
        return _split_imag_batch(phi_c, np.abs(terms).sum(axis=1) / t_len)

    return jy_builder, phi_fn


def robust_naive_bootstrap_draw(
    est: FeEstimate, scales: HeteroScaleEstimates, rng: np.random.Generator
) -> BootstrapDraw:
    """One draw of the robust naive scheme.

    Resamples whole cross-sectional vectors of the standardized
    residuals, rescales by the product-scale map at the destination
    period, rescales spectra by the average standardized periodogram,
    refits, and rebuilds the covariance with the robust formula using
    the sample scale estimates throughout.  With a flat scale map this
    runs the plain naive scheme arithmetic on the same residuals.
    """
    idx = rng.integers(0, est.T, size=est.T)
    jy_builder, phi_fn = _robust_hooks(est, scales, idx[None, :])
    return _single_draw(
        est,
        jy_builder(slice(0, 1)),
        sigma_x_hat(est.x_spectrum),
        phi_fn=phi_fn,
    )


def run_robust_bootstrap(
    est: FeEstimate,
    scales: HeteroScaleEstimates,
    cfg: BootstrapConfig,
    *,
    base_seed=None,
) -> BootstrapResult:
    """Run B robust naive draws with per-draw substreams (see run_bootstrap)."""
    if cfg.scheme != "naive":
        msg = "robust bootstrap implements the naive scheme only"
        raise PanelDataError(msg)
    from .bootstrap import _draw_rng  # local import to keep the public surface flat

    base = cfg.rng_seed if base_seed is None else base_seed
    draws = np.empty((cfg.B, est.T), dtype=np.int64)
    for b in range(cfg.B):
        draws[b] = _draw_rng(base, b).integers(0, est.T, size=est.T)
    jy_builder, phi_fn = _robust_hooks(est, scales, draws)
    return run_bootstrap(
        est,
        cfg,
        base_seed=base,
        jy_builder=jy_builder,
        phi_fn=phi_fn,
        sigma_x=sigma_x_hat(est.x_spectrum),
    )
