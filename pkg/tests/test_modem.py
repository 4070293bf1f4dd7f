import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpfree_ofdm.channel import apply_channel
from cpfree_ofdm.modem import (
    ber,
    build_frame,
    equalize_one_tap,
    ls_ofdm_detect,
    make_arrangement,
    ml_lowbound_detect,
)
from cpfree_ofdm.numerics import dft_matrix, make_constellation, modulate


def test_comb_capacity():
    arr = make_arrangement("comb", 64)
    assert arr.pilot_count == 16
    assert arr.data_capacity(make_constellation(16)) == 192
    assert make_arrangement("continuous", 64).data_capacity(make_constellation(16)) == 256
    with pytest.raises(ValueError):
        make_arrangement("scattered", 64)


def test_continuous_zero_bits_block():
    c, arr, dft = make_constellation(16), make_arrangement("continuous", 64), dft_matrix(64)
    frame = build_frame(np.zeros(256, dtype=int), arr, c, dft)
    assert np.allclose(frame.q, dft.FH @ np.full(64, c.points[0]))
    assert np.allclose(frame.q_prev, dft.ofdm_modulate(arr.full_symbols))


def test_pilot_block_energy():
    arr, dft = make_arrangement("continuous", 64), dft_matrix(64)
    q = dft.ofdm_modulate(arr.full_symbols)
    assert abs(np.vdot(q, q).real - 64) < 1e-9


@given(st.sampled_from(["continuous", "comb"]), st.sampled_from([4, 16, 64]), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_parseval_every_frame(kind, M, seed):
    c, arr, dft = make_constellation(M), make_arrangement(kind, 64), dft_matrix(64)
    blocks = 1 if kind == "continuous" else 3
    bits = np.random.default_rng(seed).integers(0, 2, blocks * arr.data_capacity(c))
    f = build_frame(bits, arr, c, dft)
    assert np.allclose(np.sum(np.abs(f.time) ** 2, -1), np.sum(np.abs(f.freq) ** 2, -1), atol=1e-9)
    assert np.allclose(f.freq[:, arr.indices] if kind == "comb" else f.freq[0], arr.symbols)


def test_build_frame_rejects_bad_length():
    c, arr, dft = make_constellation(4), make_arrangement("continuous", 8), dft_matrix(8)
    with pytest.raises(ValueError):
        build_frame(np.zeros(15, dtype=int), arr, c, dft)
    with pytest.raises(ValueError):
        build_frame(np.zeros(32, dtype=int), arr, c, dft)


def test_ls_ofdm_perfect_inverse():
    rng = np.random.default_rng(0)
    c = make_constellation(16)
    b = rng.integers(0, 2, 64 * 4)
    u = modulate(b, c)
    H = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    assert np.array_equal(ls_ofdm_detect(H * u, H, c), b)
    q = make_constellation(4)
    assert np.array_equal(ls_ofdm_detect(np.array([(0.3 - 2j) * q.points[2]]), np.array([0.3 - 2j]), q),
                          [1, 0])


def test_scaled_estimate_is_a_sensitivity():
    # halving every equalized symbol moves outer 16-QAM points inwards, so decisions change
    rng = np.random.default_rng(1)
    c = make_constellation(16)
    b = rng.integers(0, 2, 64 * 4)
    H = np.exp(2j * np.pi * rng.random(64))
    assert ber(b, ls_ofdm_detect(H * modulate(b, c), 2 * H, c)) > 0


def test_zero_estimate_counted_as_erasure():
    diag = {}
    eq = equalize_one_tap(np.ones(4), np.array([1, 0, 1, 0]), np.random.default_rng(0), diag)
    assert diag["erased"] == 2
    assert np.all(np.isfinite(eq)) and np.allclose(np.abs(eq[[1, 3]]), 1)


def test_lowbound_noiseless_and_cp_mode():
    rng = np.random.default_rng(2)
    dft = dft_matrix(64)
    h = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    for M in (4, 16, 64):
        c = make_constellation(M)
        b = rng.integers(0, 2, 64 * c.bits_per_symbol)
        q = dft.ofdm_modulate(modulate(b, c))
        y = apply_channel(q, rng.standard_normal(64), h, 0.0, cyclic_prefix=True)
        H = np.fft.fft(h, 64)
        assert ber(b, ml_lowbound_detect(dft.ofdm_demodulate(y), H, c)) == 0
        assert ber(b, ls_ofdm_detect(dft.ofdm_demodulate(y), H, c)) == 0


def _joint_ml(Y, H, c):
    best, arg = np.inf, None
    for cand in itertools.product(c.points, repeat=len(Y)):
        d = np.sum(np.abs(Y - H * np.array(cand)) ** 2)
        if d < best:
            best, arg = d, np.array(cand)
    return arg


@pytest.mark.parametrize("N", [4, 5, 6])
def test_lowbound_matches_exhaustive_ml(N):
    rng = np.random.default_rng(N)
    c = make_constellation(4)
    for _ in range(20 if N < 6 else 5):
        u = c.points[rng.integers(0, 4, N)]
        H = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        Y = H * u + 0.8 * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
        assert np.array_equal(ml_lowbound_detect(Y, H, c), ml_lowbound_detect(_joint_ml(Y, H, c), np.ones(N), c))


def test_lowbound_coin_flip_limit():
    rng = np.random.default_rng(3)
    c = make_constellation(16)
    b = rng.integers(0, 2, 100_000)
    u = modulate(b, c)
    Y = u + 1e4 * (rng.standard_normal(u.size) + 1j * rng.standard_normal(u.size))
    assert ber(b, ml_lowbound_detect(Y, np.ones(u.size), c)) == pytest.approx(0.5, abs=0.01)


def test_ber_examples():
    b = np.random.default_rng(0).integers(0, 2, 192)
    assert ber(b, b) == 0
    assert ber(b, 1 - b) == 1
    f = b.copy()
    f[7] ^= 1
    assert ber(b, f) == 1 / 192
    with pytest.raises(ValueError):
        ber(b, b[:-1])


def test_payload_fraction_examples():
    from cpfree_ofdm.modem import payload_fraction

    cont, comb = make_arrangement("continuous", 64), make_arrangement("comb", 64)
    assert payload_fraction(cont) == 0.5
    assert payload_fraction(comb, 4) == 0.75
    # a 16-sample prefix costs 64/80 of the CP-free rate
    assert payload_fraction(comb, 4, cp_len=16) == 0.75 * 64 / 80
    with pytest.raises(ValueError):
        payload_fraction(cont, 1)
