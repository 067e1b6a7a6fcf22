"""Panel containers and frequency-domain primitives.

Balanced n x T panels, the two-way within transformation that removes
additive individual and time effects, and the discrete Fourier transform
at the Fourier frequencies lambda_j = 2*pi*j/T with the T^{-1/2}
normalization and time index running t = 1..T.  Every estimator and
bootstrap in this package is built on these three primitives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, PanelDataError

__all__ = [
    "PanelData",
    "Spectrum",
    "WithinPanel",
    "cross_sum",
    "dft",
    "idft",
    "periodogram",
    "two_way_demean",
    "within_transform",
]


def _as_regressor_tensor(x: np.ndarray) -> np.ndarray:
    """Coerce x to float (n, T, k); a 2-d input becomes one channel."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        msg = f"x must have shape (n, T) or (n, T, k), got {x.shape}"
        raise PanelDataError(msg)
    return x


@dataclass
class PanelData:
    """Balanced panel of outcomes and regressors.

    Parameters
    ----------
    y : ndarray, shape (n, T)
        Outcome for individual p at period t.
    x : ndarray, shape (n, T, k)
        Regressors; a 2-d array is promoted to a single channel.
    individual_ids, period_ids : list, optional
        Labels carried through to reports; no semantics attached.

    Notes
    -----
    The panel must be balanced with n >= 2, T >= 4, k >= 1 and all
    values finite.  Additive individual and time effects are implicit:
    they are removed by :func:`within_transform` and never estimated.
    """

    y: np.ndarray
    x: np.ndarray
    individual_ids: list | None = None
    period_ids: list | None = None

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.x = _as_regressor_tensor(self.x)
        if self.y.ndim != 2:
            msg = f"y must have shape (n, T), got {self.y.shape}"
            raise PanelDataError(msg)
        n, t_len = self.y.shape
        if self.x.shape[:2] != (n, t_len):
            msg = f"x shape {self.x.shape} does not match y shape {self.y.shape}"
            raise PanelDataError(msg)
        if n < 2:
            msg = f"need at least 2 individuals, got n={n}"
            raise PanelDataError(msg)
        if t_len < 4:
            msg = f"need at least 4 periods, got T={t_len}"
            raise PanelDataError(msg)
        if not np.isfinite(self.y).all() or not np.isfinite(self.x).all():
            msg = "panel contains non-finite values"
            raise PanelDataError(msg)
        if self.individual_ids is not None and len(self.individual_ids) != n:
            msg = f"{len(self.individual_ids)} individual labels for n={n}"
            raise PanelDataError(msg)
        if self.period_ids is not None and len(self.period_ids) != t_len:
            msg = f"{len(self.period_ids)} period labels for T={t_len}"
            raise PanelDataError(msg)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def k(self) -> int:
        return self.x.shape[2]


def two_way_demean(a: np.ndarray) -> np.ndarray:
    """Two-way within transformation of an (n, T) or (n, T, k) array.

    Returns a_pt - abar_.t - abar_p. + abar_.. computed channel-wise.
    Row sums (over t) and column sums (over p) of the result are zero.
    """
    a = np.asarray(a, dtype=float)
    mean_t = a.mean(axis=0, keepdims=True)
    mean_p = a.mean(axis=1, keepdims=True)
    grand = a.mean(axis=(0, 1), keepdims=True)
    return a - mean_t - mean_p + grand


@dataclass
class WithinPanel:
    """Within-transformed panel; margins sum to zero in both directions."""

    y_tilde: np.ndarray
    x_tilde: np.ndarray

    def __post_init__(self) -> None:
        self.y_tilde = np.asarray(self.y_tilde, dtype=float)
        self.x_tilde = _as_regressor_tensor(self.x_tilde)
        scale = max(np.max(np.abs(self.y_tilde), initial=0.0),
                    np.max(np.abs(self.x_tilde), initial=0.0), 1.0)
        tol = 1e-10 * scale
        worst = max(
            np.max(np.abs(self.y_tilde.sum(axis=0)), initial=0.0),
            np.max(np.abs(self.y_tilde.sum(axis=1)), initial=0.0),
            np.max(np.abs(self.x_tilde.sum(axis=0)), initial=0.0),
            np.max(np.abs(self.x_tilde.sum(axis=1)), initial=0.0),
        )
        if worst > tol:
            msg = (
                f"within-panel margins not zero (max |sum| = {worst:.3e}, "
                f"tol = {tol:.3e}); construct via within_transform"
            )
            raise PanelDataError(msg)

    @property
    def n(self) -> int:
        return self.y_tilde.shape[0]

    @property
    def T(self) -> int:
        return self.y_tilde.shape[1]

    @property
    def k(self) -> int:
        return self.x_tilde.shape[2]


def within_transform(panel: PanelData) -> WithinPanel:
    """Remove additive individual and time effects from a panel.

    Applies the two-way demeaning y_pt - ybar_.t - ybar_p. + ybar_..
    to the outcome and to each regressor channel.  Any component of the
    form eta_p + alpha_t is annihilated exactly.
    """
    return WithinPanel(
        y_tilde=two_way_demean(panel.y),
        x_tilde=two_way_demean(panel.x),
    )


@dataclass
class Spectrum:
    """DFT coefficients at the Fourier frequencies j = 1..T-1.

    coeffs has shape (n, T-1) for a scalar series per individual, or
    (n, T-1, k) for k channels.  The j = 0 coefficient is not stored:
    it is zero for within-transformed input, and every consumer in this
    package operates on j = 1..T-1.  For real input the coefficients
    satisfy coeffs[p, j] = conj(coeffs[p, T-j]).
    """

    coeffs: np.ndarray
    T: int

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim not in (2, 3):
            msg = f"coeffs must be (n, T-1) or (n, T-1, k), got {self.coeffs.shape}"
            raise PanelDataError(msg)
        if self.coeffs.shape[1] != self.T - 1:
            msg = (
                f"coeffs second axis {self.coeffs.shape[1]} "
                f"does not match T-1 = {self.T - 1}"
            )
            raise PanelDataError(msg)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @property
    def k(self) -> int | None:
        return self.coeffs.shape[2] if self.coeffs.ndim == 3 else None

    @property
    def frequencies(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(1, self.T) / self.T

    def check_conjugate_symmetry(self, tol: float = 1e-9) -> None:
        """Assert coeffs[p, j] = conj(coeffs[p, T-j]); raises on failure."""
        mirrored = np.conj(self.coeffs[:, ::-1, ...])
        scale = max(np.max(np.abs(self.coeffs), initial=0.0), 1e-300)
        worst = np.max(np.abs(self.coeffs - mirrored)) / scale
        if worst > tol:
            msg = f"conjugate symmetry violated (relative residual {worst:.3e})"
            raise EstimationError(msg)


def _dft_phase(t_len: int) -> np.ndarray:
    # time index starts at t = 1, so the transform of a zero-based FFT
    # picks up the extra rotation exp(-i lambda_j)
    lam = 2.0 * np.pi * np.arange(1, t_len) / t_len
    return np.exp(-1j * lam)


def dft(series_panel: np.ndarray, *, method: str = "auto") -> Spectrum:
    """DFT of each individual's series at lambda_j = 2*pi*j/T, j = 1..T-1.

    Uses the convention J_p(lambda_j) = T^{-1/2} sum_{t=1}^{T} a_pt
    exp(-i t lambda_j).  Input of shape (n, T) gives coeffs (n, T-1);
    input (n, T, k) is transformed channel-wise.

    Parameters
    ----------
    series_panel : ndarray
        Real series, shape (n, T) or (n, T, k), T >= 4.
    method : {"auto", "fft", "direct"}
        "direct" evaluates the O(T^2) sum; kept as an independent route
        for validation.  "auto" uses the FFT for every T.

    Panel workflows always have T >= 4; shorter series (T >= 2) are
    accepted so enumeration oracles can run at tiny T.
    """
    a = np.asarray(series_panel, dtype=float)
    if a.ndim not in (2, 3):
        msg = f"series panel must be (n, T) or (n, T, k), got {a.shape}"
        raise PanelDataError(msg)
    t_len = a.shape[1]
    if t_len < 2:
        msg = f"need T >= 2, got T={t_len}"
        raise PanelDataError(msg)
    if not np.isfinite(a).all():
        msg = "non-finite values in series panel"
        raise PanelDataError(msg)

    if method in ("auto", "fft"):
        raw = np.fft.fft(a, axis=1)[:, 1:, ...]
        phase = _dft_phase(t_len)
        if a.ndim == 3:
            phase = phase[:, None]
        coeffs = raw * phase / np.sqrt(t_len)
    elif method == "direct":
        t_idx = np.arange(1, t_len + 1)
        lam = 2.0 * np.pi * np.arange(1, t_len) / t_len
        basis = np.exp(-1j * np.outer(t_idx, lam))  # (T, T-1)
        if a.ndim == 2:
            coeffs = (a @ basis) / np.sqrt(t_len)
        else:
            coeffs = np.einsum("ptk,tj->pjk", a, basis) / np.sqrt(t_len)
    else:
        msg = f"unknown dft method {method!r}"
        raise ValueError(msg)
    return Spectrum(coeffs=coeffs, T=t_len)


def idft(spec: Spectrum) -> np.ndarray:
    """Invert :func:`dft`, treating the omitted j = 0 coefficient as zero.

    Returns the complex (n, T) or (n, T, k) reconstruction; callers take
    the real part after checking the imaginary residual.
    """
    coeffs = spec.coeffs
    t_len = spec.T
    shape = (coeffs.shape[0], t_len) + coeffs.shape[2:]
    full = np.zeros(shape, dtype=complex)
    full[:, 1:, ...] = coeffs
    lam = 2.0 * np.pi * np.arange(t_len) / t_len
    phase = np.exp(1j * lam)
    if coeffs.ndim == 3:
        phase = phase[:, None]
    return np.sqrt(t_len) * np.fft.ifft(full * phase, axis=1)


def real_part(
    values: np.ndarray, *, tol: float = 1e-8, what: str = "value",
    scale_floor: float = 0.0,
):
    """Real part of a nominally real quantity, asserting the residual.

    The imaginary residual must be below tol times the magnitude of the
    values; anything larger indicates a conjugate-symmetry indexing bug
    and raises instead of being silently dropped.  scale_floor widens the
    yardstick for quantities that may be legitimately near zero (exact
    fits) while the float noise scales with the inputs that produced them.
    """
    z = np.asarray(values)
    scale = max(float(np.max(np.abs(z), initial=0.0)), float(scale_floor), 1e-300)
    resid = float(np.max(np.abs(z.imag), initial=0.0))
    if resid > tol * scale:
        msg = (
            f"imaginary residual {resid:.3e} exceeds {tol:.1e} x {scale:.3e} "
            f"in {what}"
        )
        raise EstimationError(msg)
    out = z.real
    return float(out) if out.ndim == 0 else out


def cross_sum(a: Spectrum, b: Spectrum, p: int, q: int):
    """Real value of sum_{j=1}^{T-1} J_{a,p}(lambda_j) J_{b,q}(-lambda_j).

    For real series J(-lambda_j) = conj(J(lambda_j)), so the sum over the
    full frequency set is real; the imaginary residual is asserted, not
    dropped.  Channel handling: scalar x scalar -> float, vector x scalar
    -> (k,), vector x vector -> (k_a, k_b).
    """
    if a.T != b.T:
        msg = f"spectra have mismatched T: {a.T} vs {b.T}"
        raise PanelDataError(msg)
    ap = a.coeffs[p]
    bq = np.conj(b.coeffs[q])
    if ap.ndim == 1 and bq.ndim == 1:
        val = np.sum(ap * bq)
    elif ap.ndim == 2 and bq.ndim == 1:
        val = ap.T @ bq
    elif ap.ndim == 1 and bq.ndim == 2:
        val = bq.T @ ap
    else:
        val = np.einsum("ja,jb->ab", ap, bq)
    return real_part(val, what="cross_sum")


def periodogram(spec: Spectrum) -> np.ndarray:
    """Periodogram I(lambda_j) = |J(lambda_j)|^2, shape like coeffs, real."""
    return np.abs(spec.coeffs) ** 2
