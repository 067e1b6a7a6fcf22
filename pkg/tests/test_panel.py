"""Panel container, two-way demeaning, and DFT primitives."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from freqpanel.errors import EstimationError, PanelDataError
from freqpanel.panel import (
    PanelData,
    Spectrum,
    cross_sum,
    dft,
    idft,
    periodogram,
    real_part,
    two_way_demean,
    within_transform,
)


def _random_panel(n=3, t_len=8, k=2, seed=0):
    rng = np.random.default_rng(seed)
    return PanelData(y=rng.normal(size=(n, t_len)), x=rng.normal(size=(n, t_len, k)))


# ---------------------------------------------------------------- containers


def test_panel_data_shapes_and_props():
    p = _random_panel(4, 6, 3)
    assert (p.n, p.T, p.k) == (4, 6, 3)


def test_panel_data_promotes_2d_regressor():
    rng = np.random.default_rng(1)
    p = PanelData(y=rng.normal(size=(2, 5)), x=rng.normal(size=(2, 5)))
    assert p.x.shape == (2, 5, 1)


@pytest.mark.parametrize(
    "n,t_len",
    [(1, 8), (2, 3), (2, 2)],
)
def test_panel_data_rejects_degenerate_sizes(n, t_len):
    with pytest.raises(PanelDataError):
        PanelData(y=np.zeros((n, t_len)), x=np.zeros((n, t_len, 1)))


def test_panel_data_rejects_nonfinite():
    y = np.zeros((2, 6))
    y[1, 3] = np.nan
    with pytest.raises(PanelDataError, match="non-finite"):
        PanelData(y=y, x=np.zeros((2, 6, 1)))


def test_panel_data_rejects_shape_mismatch():
    with pytest.raises(PanelDataError):
        PanelData(y=np.zeros((2, 6)), x=np.zeros((2, 5, 1)))


def test_panel_data_rejects_bad_label_counts():
    with pytest.raises(PanelDataError):
        PanelData(y=np.zeros((2, 6)), x=np.zeros((2, 6, 1)), individual_ids=["a"])


# ------------------------------------------------------------ within transform


def test_two_way_demean_hand_value():
    # four-mean formula evaluated by hand on a 2x2 array
    out = two_way_demean(np.array([[1.0, 2.0], [3.0, 5.0]]))
    assert_allclose(out, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)


def test_within_annihilates_constants():
    p = PanelData(y=np.full((3, 6), 7.5), x=np.ones((3, 6, 1)))
    w = within_transform(p)
    assert_allclose(w.y_tilde, 0.0, atol=1e-12)
    assert_allclose(w.x_tilde, 0.0, atol=1e-12)


def test_within_annihilates_additive_effects():
    rng = np.random.default_rng(2)
    eta = rng.normal(size=(4, 1))
    alpha = rng.normal(size=(1, 8))
    p = PanelData(y=eta + alpha, x=rng.normal(size=(4, 8, 1)))
    assert_allclose(within_transform(p).y_tilde, 0.0, atol=1e-12)


def test_within_margins_are_zero():
    w = within_transform(_random_panel(5, 9, 2, seed=3))
    assert_allclose(w.y_tilde.sum(axis=0), 0.0, atol=1e-12)
    assert_allclose(w.y_tilde.sum(axis=1), 0.0, atol=1e-12)
    assert_allclose(w.x_tilde.sum(axis=0), 0.0, atol=1e-12)
    assert_allclose(w.x_tilde.sum(axis=1), 0.0, atol=1e-12)


def test_within_is_idempotent():
    w = within_transform(_random_panel(4, 7, 1, seed=4))
    assert_allclose(two_way_demean(w.y_tilde), w.y_tilde, atol=1e-12)
    assert_allclose(two_way_demean(w.x_tilde), w.x_tilde, atol=1e-12)


def test_within_panel_rejects_nonzero_margins():
    rng = np.random.default_rng(5)
    from freqpanel.panel import WithinPanel

    with pytest.raises(PanelDataError, match="margins"):
        WithinPanel(y_tilde=rng.normal(size=(3, 6)), x_tilde=np.zeros((3, 6, 1)))


# ------------------------------------------------------------------------ dft


def test_dft_zero_series():
    spec = dft(np.zeros((2, 6)))
    assert_allclose(spec.coeffs, 0.0)


def test_dft_alternating_series_hand_value():
    # T = 4, a = (1,-1,1,-1): all energy at j = 2 (lambda = pi) where
    # J = 4^{-1/2} * sum_t (-1)^t a_t = -2; the other ordinates vanish
    spec = dft(np.array([[1.0, -1.0, 1.0, -1.0]] * 2))
    assert_allclose(spec.coeffs[0, 1], -2.0 + 0.0j, atol=1e-12)
    assert_allclose(spec.coeffs[0, [0, 2]], 0.0, atol=1e-12)
    assert_allclose(periodogram(spec)[0, 1], 4.0, atol=1e-12)


@pytest.mark.parametrize("t_len", [17, 31])
def test_dft_fft_matches_direct_at_prime_length(t_len):
    rng = np.random.default_rng(t_len)
    a = rng.normal(size=(3, t_len))
    fast = dft(a, method="fft").coeffs
    slow = dft(a, method="direct").coeffs
    assert np.max(np.abs(fast - slow)) < 1e-10


def test_dft_direct_matches_fft_with_channels():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(2, 12, 3))
    assert_allclose(
        dft(a, method="fft").coeffs, dft(a, method="direct").coeffs, atol=1e-10
    )


@pytest.mark.parametrize("t_len", [4, 5, 8, 9])
def test_dft_parseval(t_len):
    rng = np.random.default_rng(t_len)
    a = rng.normal(size=(3, t_len))
    spec = dft(a)
    # the omitted j = 0 ordinate carries (sum_t a)^2 / T
    j0 = a.sum(axis=1) ** 2 / t_len
    assert_allclose(
        periodogram(spec).sum(axis=1) + j0, (a**2).sum(axis=1), rtol=1e-9
    )


def test_dft_parseval_within_series():
    w = within_transform(_random_panel(3, 10, 1, seed=7))
    spec = dft(w.y_tilde)
    assert_allclose(
        periodogram(spec).sum(axis=1), (w.y_tilde**2).sum(axis=1), rtol=1e-9
    )


@pytest.mark.parametrize("t_len", [4, 7])
def test_dft_conjugate_symmetry(t_len):
    rng = np.random.default_rng(t_len + 20)
    spec = dft(rng.normal(size=(2, t_len)))
    spec.check_conjugate_symmetry()
    mirrored = np.conj(spec.coeffs[:, ::-1])
    assert_allclose(spec.coeffs, mirrored, atol=1e-12)


def test_conjugate_symmetry_check_catches_violation():
    spec = dft(np.random.default_rng(8).normal(size=(2, 8)))
    spec.coeffs[0, 0] += 1.0j
    with pytest.raises(EstimationError, match="conjugate symmetry"):
        spec.check_conjugate_symmetry()


def test_dft_rejects_bad_input():
    with pytest.raises(PanelDataError):
        dft(np.zeros((3,)))
    with pytest.raises(PanelDataError):
        dft(np.zeros((2, 1)))
    a = np.zeros((2, 6))
    a[0, 0] = np.inf
    with pytest.raises(PanelDataError, match="non-finite"):
        dft(a)
    with pytest.raises(ValueError, match="method"):
        dft(np.zeros((2, 6)), method="magic")


def test_idft_round_trip_row_demeaned():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(3, 11))
    a -= a.mean(axis=1, keepdims=True)  # j = 0 coefficient is genuinely zero
    rec = idft(dft(a))
    assert np.max(np.abs(rec.imag)) < 1e-12
    assert_allclose(rec.real, a, rtol=0, atol=1e-9 * np.max(np.abs(a)))


def test_idft_drops_row_means():
    rng = np.random.default_rng(10)
    a = rng.normal(size=(2, 8)) + 5.0
    rec = idft(dft(a)).real
    assert_allclose(rec, a - a.mean(axis=1, keepdims=True), atol=1e-10)


def test_idft_round_trip_with_channels():
    w = within_transform(_random_panel(3, 8, 2, seed=11))
    rec = idft(dft(w.x_tilde))
    assert_allclose(rec.real, w.x_tilde, atol=1e-10)
    assert np.max(np.abs(rec.imag)) < 1e-12


# ------------------------------------------------------------------ cross_sum


def test_cross_sum_self_is_energy():
    w = within_transform(_random_panel(3, 8, 1, seed=12))
    spec = dft(w.y_tilde)
    for p in range(3):
        val = cross_sum(spec, spec, p, p)
        assert val >= 0.0
        assert_allclose(val, (w.y_tilde[p] ** 2).sum(), rtol=1e-10)


def test_cross_sum_matches_time_domain():
    rng = np.random.default_rng(13)
    a = rng.normal(size=(3, 8))
    b = rng.normal(size=(3, 8))
    a -= a.mean(axis=1, keepdims=True)
    b -= b.mean(axis=1, keepdims=True)
    sa, sb = dft(a), dft(b)
    for p in range(3):
        for q in range(3):
            assert_allclose(cross_sum(sa, sb, p, q), a[p] @ b[q], rtol=1e-9)


def test_cross_sum_orthogonal_sinusoids():
    t = np.arange(1, 13)
    a = np.cos(2 * np.pi * 2 * t / 12)[None, :].repeat(2, axis=0)
    b = np.cos(2 * np.pi * 3 * t / 12)[None, :].repeat(2, axis=0)
    assert abs(cross_sum(dft(a), dft(b), 0, 0)) < 1e-10


def test_cross_sum_channel_shapes():
    w = within_transform(_random_panel(2, 6, 2, seed=14))
    sx = dft(w.x_tilde)
    sy = dft(w.y_tilde)
    assert cross_sum(sx, sy, 0, 1).shape == (2,)
    assert cross_sum(sy, sx, 1, 0).shape == (2,)
    assert cross_sum(sx, sx, 0, 0).shape == (2, 2)
    assert isinstance(cross_sum(sy, sy, 0, 0), float)


def test_cross_sum_rejects_mismatched_T():
    a = dft(np.zeros((2, 6)))
    b = dft(np.zeros((2, 8)))
    with pytest.raises(PanelDataError, match="mismatched T"):
        cross_sum(a, b, 0, 0)


def test_cross_sum_vector_matches_channelwise():
    w = within_transform(_random_panel(2, 8, 3, seed=15))
    sx, sy = dft(w.x_tilde), dft(w.y_tilde)
    vec = cross_sum(sx, sy, 0, 0)
    for m in range(3):
        chan = dft(w.x_tilde[:, :, m])
        assert_allclose(vec[m], cross_sum(chan, sy, 0, 0), rtol=1e-10)


# ------------------------------------------------------------------ real_part


def test_real_part_scalar_and_assert():
    assert real_part(np.complex128(3.0 + 1e-12j)) == 3.0
    with pytest.raises(EstimationError, match="imaginary residual"):
        real_part(np.array([1.0 + 0.1j]))


def test_real_part_scale_floor_admits_data_scale_noise():
    vals = np.array([1e-15 + 1e-16j])
    with pytest.raises(EstimationError):
        real_part(vals)
    out = real_part(vals, scale_floor=1.0)
    assert_allclose(out, [1e-15])


def test_spectrum_validates_axis():
    with pytest.raises(PanelDataError):
        Spectrum(coeffs=np.zeros((2, 5), dtype=complex), T=8)
    with pytest.raises(PanelDataError):
        Spectrum(coeffs=np.zeros((5,), dtype=complex), T=6)
