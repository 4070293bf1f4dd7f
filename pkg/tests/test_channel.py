import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpfree_ofdm.channel import (
    ChannelRealization,
    apply_channel,
    build_matrices,
    exponential,
    make_model,
    noise_from_snr,
    sample_channel,
    sample_taps,
    signal_energy,
    single_tap,
    sui3,
    toeplitz_matrices,
    urban16,
)
from cpfree_ofdm.numerics import dft_matrix, make_constellation, modulate

taps_strategy = st.integers(1, 8).flatmap(
    lambda I: st.lists(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
                       min_size=I, max_size=I))


def test_model_lengths_and_normalization():
    for m in (sui3(), exponential(8, 2.0), urban16(), single_tap()):
        assert np.isclose(m.tap_powers.sum(), 1.0)
    assert sui3().length == 11
    assert urban16().length == 16
    with pytest.raises(ValueError):
        make_model("rayleigh9")


def test_sui3_support_and_powers():
    h = sample_taps(sui3(), np.random.default_rng(0), 100_000)
    assert np.all(h[:, [1, 2, 3, 5, 6, 7, 8, 9]] == 0)
    p = np.mean(np.abs(h) ** 2, axis=0)
    assert p[4] / p[0] == pytest.approx(10 ** -0.5, rel=0.03)
    assert p[10] / p[0] == pytest.approx(10 ** -1.0, rel=0.03)


def test_single_tap_unit_power():
    h = sample_taps(single_tap(), np.random.default_rng(1), 100_000)
    assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, rel=0.02)


def test_exponential_ratio_monte_carlo():
    decay = 2.0
    h = sample_taps(exponential(6, decay), np.random.default_rng(2), 100_000)
    p = np.mean(np.abs(h) ** 2, axis=0)
    assert np.allclose(p[1:] / p[:-1], np.exp(-1 / decay), rtol=0.05)


def test_sample_channel_realization():
    r = sample_channel(sui3(), np.random.default_rng(0))
    assert isinstance(r, ChannelRealization) and r.length == 11


def test_identity_channel_matrices():
    m = build_matrices(np.array([1.0]), 4)
    assert np.array_equal(m.C, np.eye(4)) and np.array_equal(m.J, np.eye(4))
    assert not m.A.any()


def test_two_tap_layout():
    h0, h1 = 0.8 + 0.1j, -0.3 + 0.5j
    m = build_matrices(np.array([h0, h1]), 4)
    nz = np.argwhere(m.A)
    assert nz.tolist() == [[0, 3]] and m.A[0, 3] == h1
    assert m.C[0, 3] == h1
    for i in range(4):
        assert m.C[i, i] == h0
    for i in range(3):
        assert m.C[i + 1, i] == h1


@given(taps_strategy, st.integers(8, 24))
@settings(max_examples=60, deadline=None)
def test_structure(taps, N):
    h = np.array(taps, dtype=complex)
    m = build_matrices(h, N)
    I = len(h)
    assert np.array_equal(m.C, m.A + m.J)
    # A carries exactly the wrapped-around part of the convolution
    structural = np.argwhere(np.subtract.outer(np.arange(N), np.arange(N)) + N < I)
    assert len(structural) == I * (I - 1) // 2
    assert np.count_nonzero(m.A) <= I * (I - 1) // 2
    assert np.allclose(np.tril(m.J), m.J)


def test_structural_nonzeros_with_generic_taps():
    I, N = 7, 16
    h = np.random.default_rng(0).standard_normal(I) + 1j
    assert np.count_nonzero(build_matrices(h, N).A) == I * (I - 1) // 2


@given(st.integers(1, 8), st.integers(8, 64), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_circulant_diagonalization(I, N, seed):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal(I) + 1j * rng.standard_normal(I)
    F = dft_matrix(N).F
    D = F @ build_matrices(h, N).C @ F.conj().T
    assert np.max(np.abs(D - np.diag(np.diag(D)))) < 1e-9
    assert np.allclose(np.diag(D), np.fft.fft(h, N), atol=1e-9)


def test_channel_too_long():
    with pytest.raises(ValueError):
        toeplitz_matrices(np.ones(9), 8)


def test_apply_channel_examples():
    rng = np.random.default_rng(0)
    N = 8
    q = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    assert np.allclose(apply_channel(q, q, np.array([1.0]), 0.0), q)
    h = np.array([0.9, 0.4j, -0.2])
    y = apply_channel(q, q, h, 0.0)
    C = build_matrices(h, N).C
    assert np.allclose(y, C @ q)
    F = dft_matrix(N).F
    assert np.allclose(F @ y, np.fft.fft(h, N) * (F @ q))
    y0 = apply_channel(q, np.zeros(N), h[:2], 0.0)
    assert y0[0] == pytest.approx(h[0] * q[0])
    assert np.allclose(apply_channel(q, rng.standard_normal(N), h, 0.0, cyclic_prefix=True), C @ q)
    with pytest.raises(ValueError):
        apply_channel(q, q, h, -1.0)


def test_noise_from_snr_examples():
    h = np.array([0.7, 0.5j])
    Es = signal_energy(h, 16)
    assert noise_from_snr(0, h, 16) == pytest.approx(Es)
    assert noise_from_snr(10, h, 16) == pytest.approx(Es / 10)
    assert noise_from_snr(20, np.array([1.0]), 16) == pytest.approx(0.01)
    J, _ = toeplitz_matrices(h, 16)
    assert Es == pytest.approx(np.sum(np.abs(J) ** 2) / 16)


def test_empirical_snr():
    rng = np.random.default_rng(11)
    N, frames, snr = 64, 10_000, 15.0
    c = make_constellation(16)
    F = dft_matrix(N)
    h = sample_taps(urban16(), rng, frames)
    u = modulate(rng.integers(0, 2, (frames, N * 4)), c)
    q = F.ofdm_modulate(u)
    J, _ = toeplitz_matrices(h, N)
    s = np.einsum("bij,bj->bi", J, q)
    sigma2 = noise_from_snr(snr, h, N)
    y = apply_channel(q, np.zeros_like(q), h, sigma2, rng)
    w = y - s
    measured = 10 * np.log10(np.sum(np.abs(s) ** 2) / np.sum(np.abs(w) ** 2))
    assert abs(measured - snr) < 0.2
