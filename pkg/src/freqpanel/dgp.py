"""Spatio-temporal panel simulators.

Cross-sectional dependence comes from a linear mixing of i.i.d. shocks
over random unit locations on a line; temporal dependence from per-unit
ARMA filters with a zero-start burn-in; optional multiplicative
heteroskedasticity driven by a spatial unit effect and an AR(1) time
effect.  Fixed effects and locations are drawn once per design and held
fixed across replications; innovations are per-replication streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import ConfigError, PanelDataError
from .panel import PanelData

__all__ = [
    "ArmaSpec",
    "DgpSpec",
    "HeteroDesign",
    "SimulatedPanel",
    "SpatialSpec",
    "build_dgp_spec",
    "dgp_spec_from_dict",
    "dgp_spec_to_dict",
    "hetero_scale_map",
    "heterogeneous_specs",
    "simulate_panel",
]

_BURN_IN_DEFAULT = 49
_SCHEMA_VERSION = 1


@dataclass
class SpatialSpec:
    """Linear cross-sectional mixing over unit locations.

    Unit p loads on shock l with weight (1 + |s_l - s_p|)^(-decay) and a
    normalizer making each mixed innovation unit variance.  decay = 10
    gives weak dependence, 0.7 strong.
    """

    locations: np.ndarray
    decay: float
    weights: np.ndarray = field(init=False, repr=False)
    normalizer: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        s = np.atleast_1d(np.asarray(self.locations, dtype=float))
        if s.ndim != 1 or s.size < 1 or not np.all(np.isfinite(s)):
            msg = "locations must be a finite vector"
            raise PanelDataError(msg)
        if not self.decay > 0.0:
            msg = f"decay must be positive, got {self.decay}"
            raise PanelDataError(msg)
        self.locations = s
        dist = np.abs(s[:, None] - s[None, :])
        self.weights = (1.0 + dist) ** (-float(self.decay))
        self.normalizer = 1.0 / np.sqrt(np.sum(self.weights**2, axis=1))

    @property
    def n(self) -> int:
        return self.locations.size

    @classmethod
    def draw(cls, n: int, decay: float, rng: np.random.Generator) -> SpatialSpec:
        """Locations s_p ~ i.i.d. Uniform[0, n]."""
        if n < 1:
            msg = f"n must be >= 1, got {n}"
            raise PanelDataError(msg)
        return cls(locations=rng.uniform(0.0, n, size=n), decay=decay)

    def mix(self, shocks: np.ndarray) -> np.ndarray:
        """Mixed innovations sigma_p sum_l c_l(p) e_lt for shock panel (n, m)."""
        e = np.asarray(shocks, dtype=float)
        if e.shape[0] != self.n:
            msg = f"shock panel has {e.shape[0]} rows, expected {self.n}"
            raise PanelDataError(msg)
        return self.normalizer[:, None] * (self.weights @ e)

    def covariance(self) -> np.ndarray:
        """Population Cov(eta_pt, eta_qt); unit diagonal by construction."""
        return (
            np.outer(self.normalizer, self.normalizer)
            * (self.weights @ self.weights.T)
        )


@dataclass
class ArmaSpec:
    """Per-unit ARMA temporal dependence.

    Row p filters its innovations through

        (1 - rho1_p L)(1 + rho2 L + rho3 L^2) u = (1 + th1_p L + th2 L^2 + th3 L^3) e

    with AR stationarity checked at construction.  The homogeneous flag
    marks the shared pure-AR(1) case whose innovations are scaled by
    sqrt(1 - rho^2) so u has exactly unit variance; heterogeneous output
    is deliberately not re-normalized, so unit variances differ.
    """

    rho: np.ndarray
    theta: np.ndarray
    homogeneous: bool = False

    def __post_init__(self) -> None:
        rho = np.atleast_2d(np.asarray(self.rho, dtype=float))
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        if rho.shape[1] != 3 or theta.shape[1] != 3 or rho.shape != theta.shape:
            msg = f"rho/theta must be (n, 3), got {rho.shape} and {theta.shape}"
            raise PanelDataError(msg)
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(theta))):
            msg = "ARMA coefficients must be finite"
            raise PanelDataError(msg)
        self.rho, self.theta = rho, theta
        if self.homogeneous:
            pure_ar1 = (
                np.all(rho[:, 1:] == 0.0)
                and np.all(theta == 0.0)
                and np.all(rho[:, 0] == rho[0, 0])
            )
            if not pure_ar1:
                msg = "homogeneous spec requires a shared pure AR(1)"
                raise PanelDataError(msg)
        for p in range(rho.shape[0]):
            poly = self.ar_poly(p)
            roots = np.roots(np.trim_zeros(poly[::-1], trim="f"))
            if roots.size and np.min(np.abs(roots)) <= 1.0:
                msg = f"AR polynomial for unit {p + 1} has a root inside the unit circle"
                raise PanelDataError(msg)

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    def ar_poly(self, p: int) -> np.ndarray:
        """Lag-polynomial coefficients of (1 - rho1 L)(1 + rho2 L + rho3 L^2)."""
        r1, r2, r3 = self.rho[p]
        return np.convolve([1.0, -r1], [1.0, r2, r3])

    def ma_poly(self, p: int) -> np.ndarray:
        t1, t2, t3 = self.theta[p]
        return np.array([1.0, t1, t2, t3])

    @classmethod
    def ar1(cls, n: int, rho: float) -> ArmaSpec:
        """Shared AR(1) with unit-variance scaling."""
        rho_mat = np.zeros((n, 3))
        rho_mat[:, 0] = rho
        return cls(rho=rho_mat, theta=np.zeros((n, 3)), homogeneous=True)

    def filter(self, innovations: np.ndarray) -> np.ndarray:
        """Filter an (n, m) innovation panel row by row, zero start."""
        e = np.asarray(innovations, dtype=float)
        if e.shape[0] != self.n:
            msg = f"innovation panel has {e.shape[0]} rows, expected {self.n}"
            raise PanelDataError(msg)
        if self.homogeneous:
            rho = self.rho[0, 0]
            scaled = np.sqrt(1.0 - rho**2) * e
            return scipy.signal.lfilter([1.0], [1.0, -rho], scaled, axis=1)
        out = np.empty_like(e)
        for p in range(self.n):
            out[p] = scipy.signal.lfilter(self.ma_poly(p), self.ar_poly(p), e[p])
        return out


def _grid(count: int) -> np.ndarray:
    """count equidistant points on [0.5, 0.9]; a single point degenerates to 0.5."""
    if count == 1:
        return np.array([0.5])
    return 0.5 + 0.4 * np.arange(count) / (count - 1)


def heterogeneous_specs(n: int, family: str) -> ArmaSpec:
    """The four mixed per-unit time-dependence families.

    "mixed_ar1" and "mixed_ar3" place rho1_p on the equidistant grid over
    [0.5, 0.9]; the split families put the first half of the units on an
    AR grid and the second half on an MA grid (n must be even); the AR(3)
    variants add fixed higher-order coefficients (0.3, 0.6) on either side.
    """
    if n < 1:
        msg = f"n must be >= 1, got {n}"
        raise PanelDataError(msg)
    rho = np.zeros((n, 3))
    theta = np.zeros((n, 3))
    if family in ("mixed_ar1", "mixed_ar3"):
        rho[:, 0] = _grid(n)
        if family == "mixed_ar3":
            rho[:, 1], rho[:, 2] = 0.3, 0.6
    elif family in ("mixed_ar1_ma1", "mixed_ar3_ma3"):
        if n % 2 != 0:
            msg = f"family {family!r} needs even n, got {n}"
            raise PanelDataError(msg)
        half = n // 2
        grid = _grid(half)
        rho[:half, 0] = grid
        theta[half:, 0] = grid
        if family == "mixed_ar3_ma3":
            rho[:half, 1], rho[:half, 2] = 0.3, 0.6
            theta[half:, 1], theta[half:, 2] = 0.3, 0.6
    else:
        msg = (
            f"unknown family {family!r}; expected mixed_ar1, mixed_ar1_ma1, "
            "mixed_ar3, or mixed_ar3_ma3"
        )
        raise ConfigError(msg)
    return ArmaSpec(rho=rho, theta=theta, homogeneous=False)


@dataclass
class HeteroDesign:
    """Multiplicative error-scale design sigma1(w_p) sigma2(rho_t).

    regressor_form selects how the scale drivers enter the regressor:
    "additive" (x + w_p + rho_t) or "multiplicative" (x (w_p rho_t)^2).
    w_p is a strong-spatial unit-variance cross-sectional effect, rho_t
    an AR(1) time effect with coefficient 0.7.
    """

    regressor_form: str
    delta1: float
    delta2: float
    spatial_w: SpatialSpec
    varrho_coeff: float = 0.7

    def __post_init__(self) -> None:
        if self.regressor_form not in ("additive", "multiplicative"):
            msg = f"regressor_form must be additive or multiplicative, got {self.regressor_form!r}"
            raise ConfigError(msg)
        if self.delta1 < 0.0 or self.delta2 < 0.0:
            msg = "hetero deltas must be >= 0"
            raise PanelDataError(msg)
        if not -1.0 < self.varrho_coeff < 1.0:
            msg = f"time-effect AR coefficient must lie in (-1, 1), got {self.varrho_coeff}"
            raise PanelDataError(msg)


def hetero_scale_map(
    delta1: float, delta2: float, w: np.ndarray, varrho: np.ndarray
) -> tuple[np.ndarray, float]:
    """Error-scale matrix sigma [exp(d1 w_p)+1][exp(d2 rho_t)+1] and its CV.

    sigma normalizes the in-sample mean of the squared scale to one, so
    the returned coefficient of variation of sigma1^2 sigma2^2 is just
    its standard deviation.
    """
    raw = np.outer(np.exp(delta1 * np.asarray(w)) + 1.0,
                   np.exp(delta2 * np.asarray(varrho)) + 1.0)
    if not np.all(np.isfinite(raw)):
        msg = "heteroskedastic scale overflowed"
        raise PanelDataError(msg)
    sigma = 1.0 / np.sqrt(np.mean(raw**2))
    scale = sigma * raw
    cv = float(np.std(scale**2))
    return scale, cv


@dataclass
class DgpSpec:
    """Frozen design of one simulation cell.

    Fixed effects (eta_p, alpha_t), locations, and the temporal specs are
    part of the design and shared by every replication; only innovations
    (and the hetero regressors w_p, rho_t) are redrawn per replication.
    alpha_t pins the panel length the spec was frozen for.
    """

    beta: np.ndarray
    spatial_u: SpatialSpec
    spatial_x: SpatialSpec
    arma_u: ArmaSpec
    arma_x: ArmaSpec
    eta_p: np.ndarray
    alpha_t: np.ndarray
    hetero: HeteroDesign | None = None
    burn_in: int = _BURN_IN_DEFAULT

    def __post_init__(self) -> None:
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.eta_p = np.asarray(self.eta_p, dtype=float)
        self.alpha_t = np.asarray(self.alpha_t, dtype=float)
        n = self.spatial_u.n
        if not (self.spatial_x.n == n == self.arma_u.n == self.arma_x.n):
            msg = "spatial and ARMA specs disagree on n"
            raise PanelDataError(msg)
        if self.eta_p.shape != (n,):
            msg = f"eta_p must have shape ({n},), got {self.eta_p.shape}"
            raise PanelDataError(msg)
        if self.alpha_t.ndim != 1 or self.alpha_t.size < 4:
            msg = "alpha_t must be a vector of length T >= 4"
            raise PanelDataError(msg)
        if self.burn_in < 0:
            msg = f"burn_in must be >= 0, got {self.burn_in}"
            raise PanelDataError(msg)
        if self.hetero is not None and self.hetero.spatial_w.n != n:
            msg = "hetero spatial spec disagrees on n"
            raise PanelDataError(msg)

    @property
    def n(self) -> int:
        return self.spatial_u.n

    @property
    def T(self) -> int:
        return self.alpha_t.size

    @property
    def k(self) -> int:
        return self.beta.size


@dataclass
class SimulatedPanel:
    """One simulated replication plus ground truth kept for diagnostics."""

    panel: PanelData
    u: np.ndarray
    eta: np.ndarray
    scale: np.ndarray | None = None
    scale_cv: float = 0.0
    w_p: np.ndarray | None = None
    varrho_t: np.ndarray | None = None


def _data_streams(rng) -> tuple:
    """Named (u, x, hetero) innovation streams.

    A SeedSequence is split into three independent child streams so the
    error, regressor, and hetero components can be varied independently;
    a plain Generator is used sequentially for all three.
    """
    if isinstance(rng, np.random.SeedSequence):
        kids = rng.spawn(3)
        return tuple(np.random.Generator(np.random.Philox(k)) for k in kids)
    return rng, rng, rng


def simulate_panel(spec: DgpSpec, T: int, rng) -> SimulatedPanel:
    """Simulate one replication of the panel DGP at the frozen design.

    Innovations are drawn over burn_in + T periods with zero starting
    values and the last T kept.  The regressor is built from the same
    spatio-temporal family with independent innovations plus an N(1,1)
    time shift; under a hetero design the regressor is shifted or scaled
    by (w_p, rho_t) and the error is scaled by the normalized scale map.
    """
    if T != spec.T:
        msg = f"spec design is frozen for T = {spec.T}, got {T}"
        raise PanelDataError(msg)
    n, k, total = spec.n, spec.k, spec.burn_in + T
    rng_u, rng_x, rng_h = _data_streams(rng)

    eta = spec.spatial_u.mix(rng_u.standard_normal((n, total)))
    u = spec.arma_u.filter(eta)[:, spec.burn_in :]

    x = np.empty((n, T, k))
    for j in range(k):
        eta_x = spec.spatial_x.mix(rng_x.standard_normal((n, total)))
        core = spec.arma_x.filter(eta_x)[:, spec.burn_in :]
        mu_t = rng_x.normal(1.0, 1.0, size=T)
        x[:, :, j] = core + mu_t[None, :]

    scale = None
    cv = 0.0
    w = None
    varrho = None
    if spec.hetero is not None:
        hd = spec.hetero
        w = hd.spatial_w.mix(rng_h.standard_normal((n, 1)))[:, 0]
        coeff = hd.varrho_coeff
        shocks = np.sqrt(1.0 - coeff**2) * rng_h.standard_normal(total)
        varrho = scipy.signal.lfilter([1.0], [1.0, -coeff], shocks)[spec.burn_in :]
        scale, cv = hetero_scale_map(hd.delta1, hd.delta2, w, varrho)
        if hd.regressor_form == "additive":
            x = x + (w[:, None] + varrho[None, :])[:, :, None]
        else:
            x = x * ((w[:, None] * varrho[None, :]) ** 2)[:, :, None]
        noise = scale * u
    else:
        noise = u

    y = (
        spec.alpha_t[None, :]
        + spec.eta_p[:, None]
        + np.einsum("ptk,k->pt", x, spec.beta)
        + noise
    )
    panel = PanelData(y=y, x=x)
    return SimulatedPanel(
        panel=panel, u=u, eta=eta[:, spec.burn_in :],
        scale=scale, scale_cv=cv, w_p=w, varrho_t=varrho,
    )


def build_dgp_spec(
    n: int,
    T: int,
    *,
    beta,
    decay: float = 10.0,
    arma_u: ArmaSpec | None = None,
    arma_x: ArmaSpec | None = None,
    rho: float = 0.7,
    hetero_form: str | None = None,
    delta1: float = 0.0,
    delta2: float = 0.0,
    design_rng: np.random.Generator,
    burn_in: int = _BURN_IN_DEFAULT,
) -> DgpSpec:
    """Draw a frozen design and assemble a DgpSpec.

    Locations are drawn once and shared by the error and regressor
    processes (and, at strong decay 0.7, by the hetero unit effect);
    temporal specs default to the shared AR(1) at rho.  Design draw
    order: locations, eta_p, alpha_t.
    """
    locations = design_rng.uniform(0.0, n, size=n)
    eta_p = design_rng.normal(1.0, 1.0, size=n)
    alpha_t = design_rng.normal(1.0, 1.0, size=T)
    spatial = SpatialSpec(locations=locations, decay=decay)
    if arma_u is None:
        arma_u = ArmaSpec.ar1(n, rho)
    if arma_x is None:
        arma_x = ArmaSpec.ar1(n, rho)
    hetero = None
    if hetero_form is not None:
        hetero = HeteroDesign(
            regressor_form=hetero_form,
            delta1=delta1,
            delta2=delta2,
            spatial_w=SpatialSpec(locations=locations, decay=0.7),
        )
    return DgpSpec(
        beta=beta,
        spatial_u=spatial,
        spatial_x=SpatialSpec(locations=locations, decay=decay),
        arma_u=arma_u,
        arma_x=arma_x,
        eta_p=eta_p,
        alpha_t=alpha_t,
        hetero=hetero,
        burn_in=burn_in,
    )


def _spatial_to_dict(spec: SpatialSpec) -> dict:
    return {"locations": spec.locations.tolist(), "decay": spec.decay}


def _arma_to_dict(spec: ArmaSpec) -> dict:
    return {
        "rho": spec.rho.tolist(),
        "theta": spec.theta.tolist(),
        "homogeneous": spec.homogeneous,
    }


def dgp_spec_to_dict(spec: DgpSpec) -> dict:
    """Versioned plain-dict form of a DgpSpec (JSON-ready)."""
    out = {
        "version": _SCHEMA_VERSION,
        "beta": spec.beta.tolist(),
        "burn_in": spec.burn_in,
        "spatial_u": _spatial_to_dict(spec.spatial_u),
        "spatial_x": _spatial_to_dict(spec.spatial_x),
        "arma_u": _arma_to_dict(spec.arma_u),
        "arma_x": _arma_to_dict(spec.arma_x),
        "eta_p": spec.eta_p.tolist(),
        "alpha_t": spec.alpha_t.tolist(),
        "hetero": None,
    }
    if spec.hetero is not None:
        out["hetero"] = {
            "regressor_form": spec.hetero.regressor_form,
            "delta1": spec.hetero.delta1,
            "delta2": spec.hetero.delta2,
            "spatial_w": _spatial_to_dict(spec.hetero.spatial_w),
            "varrho_coeff": spec.hetero.varrho_coeff,
        }
    return out


def _check_keys(raw: dict, allowed: set, what: str) -> None:
    unknown = set(raw) - allowed
    if unknown:
        msg = f"unknown keys in {what}: {sorted(unknown)}"
        raise ConfigError(msg)


def _spatial_from_dict(raw: dict, what: str) -> SpatialSpec:
    _check_keys(raw, {"locations", "decay"}, what)
    return SpatialSpec(locations=np.asarray(raw["locations"]), decay=raw["decay"])


def _arma_from_dict(raw: dict, what: str) -> ArmaSpec:
    _check_keys(raw, {"rho", "theta", "homogeneous"}, what)
    return ArmaSpec(
        rho=np.asarray(raw["rho"]),
        theta=np.asarray(raw["theta"]),
        homogeneous=bool(raw.get("homogeneous", False)),
    )


def dgp_spec_from_dict(raw: dict) -> DgpSpec:
    """Parse the versioned dict schema; unknown keys are errors."""
    if not isinstance(raw, dict):
        msg = "DGP spec must be a mapping"
        raise ConfigError(msg)
    version = raw.get("version")
    if version != _SCHEMA_VERSION:
        msg = f"unsupported DGP spec version {version!r} (expected {_SCHEMA_VERSION})"
        raise ConfigError(msg)
    allowed = {
        "version", "beta", "burn_in", "spatial_u", "spatial_x",
        "arma_u", "arma_x", "eta_p", "alpha_t", "hetero",
    }
    _check_keys(raw, allowed, "DGP spec")
    missing = allowed - {"hetero"} - set(raw)
    if missing:
        msg = f"missing keys in DGP spec: {sorted(missing)}"
        raise ConfigError(msg)
    hetero = None
    if raw["hetero"] is not None:
        h = raw["hetero"]
        _check_keys(
            h,
            {"regressor_form", "delta1", "delta2", "spatial_w", "varrho_coeff"},
            "hetero design",
        )
        hetero = HeteroDesign(
            regressor_form=h["regressor_form"],
            delta1=h["delta1"],
            delta2=h["delta2"],
            spatial_w=_spatial_from_dict(h["spatial_w"], "hetero spatial spec"),
            varrho_coeff=h.get("varrho_coeff", 0.7),
        )
    return DgpSpec(
        beta=np.asarray(raw["beta"]),
        spatial_u=_spatial_from_dict(raw["spatial_u"], "spatial_u"),
        spatial_x=_spatial_from_dict(raw["spatial_x"], "spatial_x"),
        arma_u=_arma_from_dict(raw["arma_u"], "arma_u"),
        arma_x=_arma_from_dict(raw["arma_x"], "arma_x"),
        eta_p=np.asarray(raw["eta_p"]),
        alpha_t=np.asarray(raw["alpha_t"]),
        hetero=hetero,
        burn_in=raw["burn_in"],
    )
