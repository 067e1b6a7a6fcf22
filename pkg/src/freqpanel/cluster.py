"""Smoothing-free cluster estimation of the long-run score covariance.

The estimator averages outer products of cross-sectionally pooled DFT
scores over the Fourier frequencies: no kernel, no bandwidth.  A time
domain analogue built from products of circular cross-covariances is
provided as an independent route; the two agree to floating precision
on every input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.stats

from .errors import EstimationError, PanelDataError
from .estimators import FeEstimate, _solve_spd
from .panel import Spectrum, WithinPanel, real_part

__all__ = [
    "CovEstimate",
    "TestResult",
    "cluster_phi_freq",
    "cluster_phi_time",
    "cov_estimate",
    "phi_per_individual_diagnostic",
    "sigma_x_hat",
    "wald_test",
]


def compensated_sum(terms: np.ndarray, axis: int = 0) -> np.ndarray:
    """Kahan-compensated sum along one axis.

    The frequency sums mix terms of both signs across T-1 ordinates;
    compensation keeps the accumulation error at one rounding unit
    independent of T.
    """
    t = np.moveaxis(np.asarray(terms), axis, 0)
    total = np.zeros_like(t[0])
    carry = np.zeros_like(t[0])
    for j in range(t.shape[0]):
        y = t[j] - carry
        s = total + y
        carry = (s - total) - y
        total = s
    return total


def _enforce_psd(mat: np.ndarray, *, what: str) -> np.ndarray:
    """Symmetrize and clip roundoff-negative eigenvalues; larger ones are a bug."""
    sym = 0.5 * (mat + mat.T)
    evals, evecs = np.linalg.eigh(sym)
    scale = max(float(np.trace(sym)), float(np.max(np.abs(evals), initial=0.0)), 1e-300)
    if evals[0] < -1e-10 * scale:
        msg = (
            f"{what} has eigenvalue {evals[0]:.3e} below the roundoff band "
            f"(-1e-10 x {scale:.3e}); refusing to clip"
        )
        raise EstimationError(msg)
    if evals[0] < 0.0:
        sym = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
        sym = 0.5 * (sym + sym.T)
    return sym


def _vector_coeffs(spec: Spectrum) -> np.ndarray:
    c = spec.coeffs
    return c[:, :, None] if c.ndim == 2 else c


def _check_pair(x_spec: Spectrum, u_spec: Spectrum) -> None:
    if x_spec.T != u_spec.T:
        msg = f"spectra have mismatched T: {x_spec.T} vs {u_spec.T}"
        raise PanelDataError(msg)
    if x_spec.n != u_spec.n:
        msg = f"spectra have mismatched n: {x_spec.n} vs {u_spec.n}"
        raise PanelDataError(msg)
    if u_spec.coeffs.ndim != 2:
        msg = "residual spectrum must be scalar-channel (n, T-1)"
        raise PanelDataError(msg)


def pooled_scores(x_spec: Spectrum, u_spec: Spectrum) -> np.ndarray:
    """Pooled frequency scores a_j = n^{-1/2} sum_p J_x,p(lambda_j) J_u,p(-lambda_j).

    Returns a complex (T-1, k) array; the cross-sectional sum inside each
    ordinate is what makes the estimator robust to arbitrary dependence
    across individuals.
    """
    _check_pair(x_spec, u_spec)
    xc = _vector_coeffs(x_spec)
    scores = np.einsum("pja,pj->ja", xc, np.conj(u_spec.coeffs))
    return scores / np.sqrt(x_spec.n)


def cluster_phi_freq(x_spec: Spectrum, u_spec: Spectrum) -> np.ndarray:
    """Frequency-domain cluster estimator of the long-run covariance.

    Phi = (1/T) sum_{j=1}^{T-1} a_j conj(a_j)' with a_j the pooled scores.
    The result is real symmetric PSD by construction; the imaginary
    residual is asserted away rather than dropped, and eigenvalues in the
    negative roundoff band are clipped to zero.
    """
    a = pooled_scores(x_spec, u_spec)
    terms = np.einsum("ja,jb->jab", a, np.conj(a))
    phi_c = compensated_sum(terms, axis=0) / x_spec.T
    # noise in the imaginary part scales with the magnitude sum of the
    # terms, not with the (possibly cancelling) total
    floor = float(np.max(np.abs(terms).sum(axis=0), initial=0.0)) / x_spec.T
    phi = real_part(phi_c, what="cluster covariance", scale_floor=floor)
    phi = np.atleast_2d(phi)
    return _enforce_psd(phi, what="cluster covariance")


def cluster_phi_time(w: WithinPanel, residuals: np.ndarray) -> np.ndarray:
    """Time-domain analogue of :func:`cluster_phi_freq`.

    Sums products of cross-individual circular (mod T) cross-covariances
    of the regressors and the residuals:

        Phi = (1/(n T^2)) sum_{p,q} sum_{e=0}^{T-1} C_x,pq(e) C_u,pq(e),

    with C_x,pq(e) = sum_s x_p,s+e x'_q,s and C_u,pq(e) = sum_m u_p,m+e
    u_q,m, indices mod T.  Because sum_t exp(i t lambda_j) = 0 for
    j != 0 mod T, this equals the frequency form exactly; O(n^2 T^2),
    kept as an independent validation route.
    """
    u = np.asarray(residuals, dtype=float)
    x = w.x_tilde
    n, t_len, k = x.shape
    if u.shape != (n, t_len):
        msg = f"residual shape {u.shape} does not match panel ({n}, {t_len})"
        raise PanelDataError(msg)
    acc = np.zeros((k, k))
    base = np.arange(t_len)
    for e in range(t_len):
        idx = (base + e) % t_len
        cu = u[:, idx] @ u.T  # C_u[p, q] at circular lag e
        cx = np.einsum("psa,qsb->pqab", x[:, idx, :], x)
        acc += np.einsum("pqab,pq->ab", cx, cu)
    phi = acc / (n * t_len**2)
    return _enforce_psd(phi, what="cluster covariance (time route)")


def sigma_x_hat(x_spec: Spectrum) -> np.ndarray:
    """Regressor second-moment matrix (1/nT) sum_{p,j} J_x,p(lambda_j) J_x,p'(-lambda_j).

    By Parseval this equals the time-domain moment (1/nT) sum x x'.
    Singularity is reported, never masked.
    """
    xc = _vector_coeffs(x_spec)
    m = np.einsum("pja,pjb->ab", xc, np.conj(xc))
    sigma = real_part(m, what="regressor moment matrix") / (x_spec.n * x_spec.T)
    sigma = 0.5 * (sigma + sigma.T)
    evals = np.linalg.eigvalsh(sigma)
    if evals[0] <= 1e-12 * max(evals[-1], 1e-300):
        msg = (
            f"regressor moment matrix is singular "
            f"(eigenvalues {evals[0]:.3e} .. {evals[-1]:.3e})"
        )
        raise EstimationError(msg)
    return sigma


@dataclass
class CovEstimate:
    """Long-run covariance pieces: Phi, Sigma_x, and V = Sigma_x^{-1} Phi Sigma_x^{-1}."""

    phi: np.ndarray
    sigma_x: np.ndarray
    vhat: np.ndarray


def cov_estimate(x_spec: Spectrum, u_spec: Spectrum) -> CovEstimate:
    """Assemble the sandwich covariance from regressor and residual spectra."""
    phi = cluster_phi_freq(x_spec, u_spec)
    sigma = sigma_x_hat(x_spec)
    sigma_inv = np.linalg.inv(sigma)
    vhat = _enforce_psd(sigma_inv @ phi @ sigma_inv, what="sandwich covariance")
    return CovEstimate(phi=phi, sigma_x=sigma, vhat=vhat)


@dataclass
class TestResult:
    """Wald test of beta = beta0 with chi-square(k) asymptotic reference."""

    wald: float
    df: int
    pvalue_asymptotic: float
    tstat: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.pvalue_asymptotic <= 1.0:
            msg = f"p-value {self.pvalue_asymptotic} outside [0, 1]"
            raise EstimationError(msg)


def wald_statistic(
    beta: np.ndarray, vhat: np.ndarray, beta0: np.ndarray, n: int, t_len: int
) -> float:
    """nT (beta - beta0)' vhat^{-1} (beta - beta0), guarding roundoff negativity."""
    d = np.atleast_1d(np.asarray(beta, dtype=float) - np.asarray(beta0, dtype=float))
    sol = _solve_spd(np.atleast_2d(vhat), d, what="sandwich covariance")
    return max(float(n * t_len * (d @ sol)), 0.0)


def wald_test(est: FeEstimate, cov: CovEstimate, beta0: np.ndarray) -> TestResult:
    """Test H0: beta = beta0 using the cluster sandwich covariance.

    Returns the Wald statistic nT (beta - beta0)' V^{-1} (beta - beta0),
    its chi-square(k) p-value, and the signed square root for k = 1.
    """
    beta0 = np.atleast_1d(np.asarray(beta0, dtype=float))
    if beta0.shape != (est.k,):
        msg = f"beta0 shape {beta0.shape} does not match k={est.k}"
        raise PanelDataError(msg)
    wald = wald_statistic(est.beta, cov.vhat, beta0, est.n, est.T)
    pval = float(scipy.stats.chi2.sf(wald, est.k))
    if est.k == 1:
        tstat = float(np.sign(est.beta[0] - beta0[0]) * np.sqrt(wald))
    else:
        tstat = float("nan")
    return TestResult(wald=wald, df=est.k, pvalue_asymptotic=pval, tstat=tstat)


def phi_per_individual_diagnostic(x_spec: Spectrum, u_spec: Spectrum) -> np.ndarray:
    """Per-individual frequency product sums (1/T) sum_j J_x,p J_u,p(-.) x conj.

    Diagnostic only: averaging these over p ignores cross-individual
    score covariance and is NOT a consistent estimator of the long-run
    covariance under cross-sectional dependence.  Returns (n, k, k).
    """
    _check_pair(x_spec, u_spec)
    xc = _vector_coeffs(x_spec)
    scores = xc * np.conj(u_spec.coeffs)[:, :, None]  # (n, T-1, k)
    vals = np.einsum("pja,pjb->pab", scores, np.conj(scores)) / x_spec.T
    return real_part(vals, what="per-individual diagnostic")
