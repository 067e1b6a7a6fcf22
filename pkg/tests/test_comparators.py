"""HAC/plug-in/fixed-b/MBB baselines against loop oracles and closed forms."""

import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import freqpanel.comparators as cp
from freqpanel.bootstrap import _draw_rng
from freqpanel.cluster import wald_test
from freqpanel.comparators import (
    HacConfig,
    MbbConfig,
    andrews_ar1_bandwidth,
    andrews_raw_bandwidth,
    dk_cov_estimate,
    dk_hac_phi,
    fixed_b_critical_values,
    mbb_bootstrap,
    score_series,
)
from freqpanel.errors import EstimationError, PanelDataError
from freqpanel.estimators import fe_estimate_time
from freqpanel.panel import PanelData, within_transform


def _fitted(n=4, t_len=16, k=2, seed=0, rho=0.5):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, t_len, k))
    u = rng.normal(size=(n, t_len))
    for t in range(1, t_len):
        u[:, t] += rho * u[:, t - 1]
    y = x.sum(axis=2) + u
    panel = PanelData(y=y, x=x)
    w = within_transform(panel)
    return panel, w, fe_estimate_time(w)


# ---------------------------------------------------------------- HAC


def _brute_hac_phi(x_tilde, u, m):
    """Quadruple sum over (p, q, t, s) with Bartlett weights, O(n^2 T^2)."""
    n, t_len, k = x_tilde.shape
    phi = np.zeros((k, k))
    for p in range(n):
        for q in range(n):
            for t in range(t_len):
                for s in range(t_len):
                    weight = 1.0 - abs(t - s) / m
                    if weight <= 0.0:
                        continue
                    phi += (
                        weight
                        * u[p, t]
                        * u[q, s]
                        * np.outer(x_tilde[p, t], x_tilde[q, s])
                    )
    return phi / (n * t_len)


def test_hac_matches_quadruple_sum():
    _, w, est = _fitted(n=2, t_len=5, k=2, seed=1)
    phi = dk_hac_phi(w, est.residuals_time, HacConfig(3.0))
    oracle = _brute_hac_phi(w.x_tilde, est.residuals_time, 3.0)
    assert_allclose(phi, oracle, rtol=1e-10, atol=1e-12)


def test_hac_fractional_bandwidth_matches_quadruple_sum():
    # lag weights 1 - l/m keep lags l < m; ceil(m) - 1 = 2 here
    _, w, est = _fitted(n=3, t_len=7, k=1, seed=2)
    phi = dk_hac_phi(w, est.residuals_time, HacConfig(2.5))
    oracle = _brute_hac_phi(w.x_tilde, est.residuals_time, 2.5)
    assert_allclose(phi, oracle, rtol=1e-10, atol=1e-12)


def test_hac_unit_bandwidth_is_lag_zero_only():
    _, w, est = _fitted(n=3, t_len=9, k=2, seed=3)
    phi = dk_hac_phi(w, est.residuals_time, HacConfig(1.0))
    h = score_series(w, est.residuals_time)
    assert_allclose(phi, h.T @ h / (w.n * h.shape[0]), rtol=1e-12)


def test_hac_bartlett_weights_keep_psd():
    _, w, est = _fitted(n=5, t_len=32, k=3, seed=4)
    phi = dk_hac_phi(w, est.residuals_time, HacConfig(6.0))
    evals = np.linalg.eigvalsh(phi)
    assert evals[0] >= -1e-12 * evals[-1]


def test_hac_config_rejects_small_bandwidth():
    with pytest.raises(PanelDataError, match="bandwidth must be >= 1"):
        HacConfig(0.5)


def test_hac_config_rejects_other_kernels():
    with pytest.raises(PanelDataError, match="only the Bartlett kernel"):
        HacConfig(3.0, kernel="parzen")


def test_dk_cov_sandwich_pieces():
    _, w, est = _fitted(seed=5)
    cov = dk_cov_estimate(est, HacConfig(4.0))
    assert_allclose(cov.sigma_x, est.sxx / (est.n * est.T), rtol=1e-14)
    assert_allclose(
        cov.phi, dk_hac_phi(w, est.residuals_time, HacConfig(4.0)), rtol=1e-12
    )
    sigma_inv = np.linalg.inv(cov.sigma_x)
    assert_allclose(cov.vhat, sigma_inv @ cov.phi @ sigma_inv, rtol=1e-9)


# ------------------------------------------------------- plug-in bandwidth


def _ar_series(t_len, rho, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    h = scale * rng.normal(size=t_len)
    for t in range(1, t_len):
        h[t] += rho * h[t - 1]
    return h


def test_andrews_matches_scalar_closed_form():
    # one column: the innovation variance cancels, alpha = 4 rho^2 / (1 - rho^2)^2
    h = _ar_series(256, 0.7, seed=6)
    lead, lagd = h[1:], h[:-1]
    rho = float(lead @ lagd) / float(lagd @ lagd)
    alpha = 4.0 * rho**2 / ((1.0 - rho) ** 2 * (1.0 + rho) ** 2)
    raw = 1.1447 * (alpha * 256) ** (1.0 / 3.0)
    assert andrews_raw_bandwidth(h) == pytest.approx(raw, rel=1e-12)
    assert andrews_ar1_bandwidth(h) == math.ceil(raw)


def test_andrews_design_value_rounds_to_fifteen():
    # rho = 0.7 at T = 256 is the worked design point: m = 15
    alpha = 4.0 * 0.49 / (0.3**2 * 1.7**2)
    assert math.ceil(1.1447 * (alpha * 256) ** (1.0 / 3.0)) == 15
    h = _ar_series(256, 0.7, seed=8)  # realized rho-hat 0.704
    assert andrews_ar1_bandwidth(h) == 15


def test_andrews_multicolumn_matches_loop_oracle():
    cols = [
        _ar_series(64, 0.2, seed=7, scale=1.0),
        _ar_series(64, 0.5, seed=8, scale=3.0),
        _ar_series(64, 0.8, seed=9, scale=0.5),
    ]
    h = np.stack(cols, axis=1)
    num = den = 0.0
    for col in cols:
        lead, lagd = col[1:], col[:-1]
        rho = float(lead @ lagd) / float(lagd @ lagd)
        s2 = float(np.mean((lead - rho * lagd) ** 2))
        num += 4.0 * rho**2 * s2**2 / ((1.0 - rho) ** 6 * (1.0 + rho) ** 2)
        den += s2**2 / (1.0 - rho) ** 4
    raw = 1.1447 * (num / den * 64) ** (1.0 / 3.0)
    assert andrews_raw_bandwidth(h) == pytest.approx(raw, rel=1e-12)


def test_andrews_accepts_column_vector():
    h = _ar_series(32, 0.4, seed=10)
    assert andrews_raw_bandwidth(h) == andrews_raw_bandwidth(h[:, None])


def test_andrews_zero_series_floors_at_one():
    # degenerate fit: rho and s^2 both collapse, bandwidth floors at 1
    assert andrews_raw_bandwidth(np.zeros(16)) == 0.0
    assert andrews_ar1_bandwidth(np.zeros(16)) == 1


def test_andrews_clamps_explosive_fit():
    h = 2.0 ** np.arange(12.0)  # rho-hat = 2 exactly
    with pytest.warns(RuntimeWarning, match="near unit root"):
        raw = andrews_raw_bandwidth(h)
    assert np.isfinite(raw)
    assert raw > 0.0


def test_andrews_needs_minimum_length():
    with pytest.raises(PanelDataError, match="need T >= 8"):
        andrews_raw_bandwidth(np.ones(7))


def test_score_series_hand_loop():
    _, w, est = _fitted(n=3, t_len=8, k=2, seed=11)
    h = score_series(w, est.residuals_time)
    assert h.shape == (8, 2)
    t0 = 3
    by_hand = sum(w.x_tilde[p, t0] * est.residuals_time[p, t0] for p in range(3))
    assert_allclose(h[t0], by_hand, rtol=1e-14)


def test_score_series_shape_guard():
    _, w, _ = _fitted(n=3, t_len=8, k=2, seed=11)
    with pytest.raises(PanelDataError, match="does not match panel"):
        score_series(w, np.zeros((3, 7)))


# ---------------------------------------------------------------- fixed-b


def test_fixedb_rejects_bad_inputs():
    with pytest.raises(PanelDataError, match="b must be in"):
        fixed_b_critical_values(0.0, steps=10, reps=10)
    with pytest.raises(PanelDataError, match="b must be in"):
        fixed_b_critical_values(1.5, steps=10, reps=10)
    with pytest.raises(PanelDataError, match="q must be >= 1"):
        fixed_b_critical_values(0.1, q=0, steps=10, reps=10)


def test_fixedb_memoizes_in_process():
    a = fixed_b_critical_values(0.17, steps=40, reps=120)
    b = fixed_b_critical_values(0.17, steps=40, reps=120)
    assert a is b


def test_fixedb_records_sim_params():
    t = fixed_b_critical_values(0.23, steps=30, reps=100)
    assert t.b == 0.23
    assert t.q == 1
    assert t.sim_params["steps"] == 30
    assert t.sim_params["reps"] == 100
    assert t.sim_params["version"] == 1


def test_fixedb_cache_roundtrip_and_bit_identity(tmp_path):
    kw = dict(q=1, steps=50, reps=200, cache_dir=tmp_path)
    first = fixed_b_critical_values(0.31, **kw)
    path = cp._fixedb_cache_path(tmp_path, 0.31, 1, 50, 200)
    assert path.exists()
    payload = path.read_bytes()
    raw = json.loads(payload)
    assert raw["version"] == 1

    cp._FIXEDB_MEMO.clear()
    second = fixed_b_critical_values(0.31, **kw)  # served from disk
    assert second.wald_cv == first.wald_cv
    assert second.t_cv == first.t_cv

    path.unlink()
    cp._FIXEDB_MEMO.clear()
    fixed_b_critical_values(0.31, **kw)  # resimulated and rewritten
    assert path.read_bytes() == payload


def test_fixedb_levels_are_ordered_quantiles():
    t = fixed_b_critical_values(0.2, steps=200, reps=4000)
    assert t.wald_cv[0.01] > t.wald_cv[0.05] > t.wald_cv[0.10] > 0.0
    for lev, cv in t.wald_cv.items():
        assert t.t_cv[lev] == pytest.approx(math.sqrt(cv))


def test_fixedb_multivariate_tables_have_nan_t():
    t2 = fixed_b_critical_values(0.2, q=2, steps=200, reps=4000)
    assert all(math.isnan(v) for v in t2.t_cv.values())
    t1 = fixed_b_critical_values(0.2, q=1, steps=200, reps=4000)
    assert t2.wald_cv[0.05] > t1.wald_cv[0.05]


def test_fixedb_critical_values_grow_with_b():
    cvs = [
        fixed_b_critical_values(b, steps=400, reps=8000).wald_cv[0.05]
        for b in (0.02, 0.1, 0.5)
    ]
    assert cvs[0] < cvs[1] < cvs[2]


def test_fixedb_small_b_approaches_normal_critical_value():
    t = fixed_b_critical_values(0.005, steps=1000, reps=20_000)
    assert t.t_cv[0.05] == pytest.approx(1.96, abs=0.1)


# -------------------------------------------------------------------- MBB


def test_mbb_config_validation():
    with pytest.raises(PanelDataError, match="block length must be >= 1"):
        MbbConfig(block_length=0, B=10, rng_seed=0)
    with pytest.raises(PanelDataError, match="B must be >= 1"):
        MbbConfig(block_length=2, B=0, rng_seed=0)


def test_mbb_rejects_oversized_block():
    panel, _, _ = _fitted(n=3, t_len=12, k=1, seed=12)
    with pytest.raises(PanelDataError, match="block length 20 exceeds T = 12"):
        mbb_bootstrap(panel, MbbConfig(block_length=20, B=10, rng_seed=0))


def test_mbb_result_bookkeeping():
    # k = 1 on purpose: with only floor(10/3) = 3 blocks a repeated start
    # collapses a multivariate block covariance to rank 1 by the zero-sum
    # score constraint, and those draws are (correctly) flagged degenerate
    panel, _, est = _fitted(n=4, t_len=10, k=1, seed=13)
    res = mbb_bootstrap(
        panel, MbbConfig(block_length=3, B=25, rng_seed=5), hac_bandwidth=3.0
    )
    assert res.block_length == 3
    assert res.k_blocks == 3  # floor(10 / 3), realized length 9
    assert res.wald_stars.shape == (25,)
    assert res.degenerate.dtype == bool
    assert res.n_degenerate == int(res.degenerate.sum())
    assert 0.0 < res.pvalue <= 1.0
    ref = wald_test(est, dk_cov_estimate(est, HacConfig(3.0)), np.zeros(1))
    assert res.observed.wald == ref.wald


def test_mbb_deterministic():
    panel, _, _ = _fitted(n=4, t_len=16, k=1, seed=14)
    cfg = MbbConfig(block_length=4, B=30, rng_seed=7)
    a = mbb_bootstrap(panel, cfg, hac_bandwidth=2.0)
    b = mbb_bootstrap(panel, cfg, hac_bandwidth=2.0)
    assert np.array_equal(a.wald_stars, b.wald_stars, equal_nan=True)
    assert a.pvalue == b.pvalue


def test_mbb_default_bandwidth_is_plug_in():
    panel, w, est = _fitted(n=4, t_len=32, k=1, seed=15)
    m = andrews_ar1_bandwidth(score_series(w, est.residuals_time))
    res = mbb_bootstrap(panel, MbbConfig(block_length=4, B=10, rng_seed=1))
    ref = wald_test(est, dk_cov_estimate(est, HacConfig(m)), np.zeros(1))
    assert res.observed.wald == ref.wald


def test_mbb_full_length_block_copies_the_panel():
    starts = cp._mbb_paths(MbbConfig(block_length=12, B=6, rng_seed=3), 12, None)
    assert starts.shape == (6, 1)
    assert np.all(starts == 0)


def test_mbb_unit_blocks_resample_time_slices():
    panel, _, _ = _fitted(n=4, t_len=12, k=1, seed=16)
    res = mbb_bootstrap(
        panel, MbbConfig(block_length=1, B=40, rng_seed=2), hac_bandwidth=2.0
    )
    assert res.k_blocks == 12
    assert res.n_degenerate == 0


def _mbb_loop_oracle(panel, cfg):
    """Scalar-loop reimplementation of the pairs MBB statistic for k = 1."""
    est = fe_estimate_time(within_transform(panel))
    ell = cfg.block_length
    k_blocks = panel.T // ell
    t_star = ell * k_blocks
    stats = []
    for b in range(cfg.B):
        starts = _draw_rng(cfg.rng_seed, b).integers(
            0, panel.T - ell + 1, size=k_blocks
        )
        tau = np.concatenate([np.arange(s, s + ell) for s in starts])
        y = panel.y[:, tau]
        x = panel.x[:, tau, 0]
        yt = y - y.mean(axis=0) - y.mean(axis=1)[:, None] + y.mean()
        xt = x - x.mean(axis=0) - x.mean(axis=1)[:, None] + x.mean()
        beta = float((xt * yt).sum() / (xt * xt).sum())
        resid = yt - beta * xt
        scores = (xt * resid).sum(axis=0) / panel.n
        block_sums = scores.reshape(k_blocks, ell).sum(axis=1) / math.sqrt(ell)
        phi = float((block_sums**2).mean())
        sigma = float((xt * xt).sum() / (panel.n * t_star))
        stats.append(t_star * (beta - est.beta[0]) ** 2 * sigma**2 / phi)
    return np.array(stats)


def test_mbb_matches_loop_oracle():
    panel, _, _ = _fitted(n=3, t_len=9, k=1, seed=17)
    cfg = MbbConfig(block_length=2, B=12, rng_seed=9)
    res = mbb_bootstrap(panel, cfg, hac_bandwidth=2.0)
    oracle = _mbb_loop_oracle(panel, cfg)
    assert res.n_degenerate == 0
    assert_allclose(res.wald_stars, oracle, rtol=1e-9)
    count = int((oracle >= res.observed.wald).sum())
    assert res.pvalue == (1 + count) / (len(oracle) + 1)


def _one_period_panel(seed):
    """Regressor that varies only in period 5: blocks that miss it carry
    no identifying variation after the within transform."""
    rng = np.random.default_rng(seed)
    n, t_len = 4, 8
    x = np.zeros((n, t_len, 1))
    x[:, 5, 0] = np.array([2.0, -1.0, 1.5, -2.5])
    y = 0.5 * x[..., 0] + 0.1 * rng.normal(size=(n, t_len))
    return PanelData(y=y, x=x)


def test_mbb_aborts_when_too_many_draws_are_collinear():
    panel = _one_period_panel(seed=18)
    with pytest.raises(EstimationError, match="moving-block draws degenerate"):
        mbb_bootstrap(
            panel, MbbConfig(block_length=2, B=60, rng_seed=4), hac_bandwidth=2.0
        )


def test_mbb_all_degenerate_reported_as_such():
    panel = _one_period_panel(seed=18)
    # seed chosen so the single draw misses period 5 entirely
    with pytest.raises(EstimationError, match="all moving-block draws degenerate"):
        mbb_bootstrap(
            panel, MbbConfig(block_length=2, B=1, rng_seed=9), hac_bandwidth=2.0
        )
