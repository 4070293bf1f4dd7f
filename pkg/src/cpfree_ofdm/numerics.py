"""DFT operators, Gray-mapped QAM, complex/real conversion and the discrete-prior denoiser.

Every routine here is pure; arrays may carry leading batch dimensions unless
stated otherwise.

Gray mapping table
------------------
Each M-QAM symbol carries ``log2(M)`` bits. The first half of the group drives
the in-phase axis and the second half the quadrature axis. Per axis the
``m = log2(M)/2`` bits (MSB first) are read as a reflected-Gray codeword ``g``;
the level index is ``i = gray_to_binary(g)`` and the amplitude is
``(sqrt(M) - 1 - 2 i) / sqrt(2 (M - 1) / 3)``. Level index 0 is therefore the
most positive amplitude, so QPSK bits ``(0, 0)`` map to ``(1 + 1j) / sqrt(2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MODULATION_ORDERS = {"qpsk": 4, "qam16": 16, "qam64": 64}


@dataclass(frozen=True)
class DftOperator:
    """Unitary N-point DFT matrix ``F`` with ``F[j, k] = exp(-2j*pi*j*k/N) / sqrt(N)``."""

    N: int
    F: np.ndarray = field(repr=False)

    @property
    def FH(self) -> np.ndarray:
        return self.F.conj().T

    def ofdm_modulate(self, u: np.ndarray) -> np.ndarray:
        """Time-domain block ``q = F^H u`` (works on the last axis)."""
        return u @ self.F.conj()

    def ofdm_demodulate(self, y: np.ndarray) -> np.ndarray:
        """Frequency-domain block ``Y = F y`` (works on the last axis)."""
        return y @ self.F.T


@lru_cache(maxsize=16)
def _dft(N: int) -> np.ndarray:
    k = np.arange(N)
    F = np.exp(-2j * np.pi * np.outer(k, k) / N) / np.sqrt(N)
    F.setflags(write=False)
    return F


def dft_matrix(N: int) -> DftOperator:
    if int(N) != N or N < 1:
        raise ValueError(f"DFT size must be a positive integer, got {N!r}")
    return DftOperator(int(N), _dft(int(N)))


def gray_encode(i: np.ndarray) -> np.ndarray:
    return i ^ (i >> 1)


def gray_decode(g: np.ndarray) -> np.ndarray:
    b = np.array(g, copy=True)
    shift = 1
    while shift < 32:
        b ^= b >> shift
        shift <<= 1
    return b


@dataclass(frozen=True)
class Constellation:
    """Square Gray-mapped M-QAM with unit average energy.

    ``points[k]`` is the symbol whose bit group, read MSB first, equals ``k``.
    ``real_alphabet`` holds the per-axis PAM levels in ascending order.
    """

    M: int
    points: np.ndarray = field(repr=False)
    real_alphabet: np.ndarray = field(repr=False)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.M))

    @property
    def bits_per_axis(self) -> int:
        return self.bits_per_symbol // 2

    @property
    def levels(self) -> int:
        return len(self.real_alphabet)

    def axis_value(self, level_index: np.ndarray) -> np.ndarray:
        # level index 0 is the largest amplitude
        return self.real_alphabet[self.levels - 1 - level_index]


def make_constellation(M: int | str) -> Constellation:
    if isinstance(M, str):
        try:
            M = MODULATION_ORDERS[M.lower()]
        except KeyError:
            raise ValueError(f"unknown modulation {M!r}") from None
    if M not in (4, 16, 64):
        raise ValueError(f"modulation order must be 4, 16 or 64, got {M}")
    L = int(round(np.sqrt(M)))
    scale = np.sqrt(2.0 * (M - 1) / 3.0)
    alphabet = (2.0 * np.arange(L) - (L - 1)) / scale
    m = int(np.log2(L))
    k = np.arange(M)
    gi, gq = k >> m, k & (L - 1)
    ii, iq = gray_decode(gi), gray_decode(gq)
    re = alphabet[L - 1 - ii]
    im = alphabet[L - 1 - iq]
    points = re + 1j * im
    points.setflags(write=False)
    alphabet.setflags(write=False)
    return Constellation(M, points, alphabet)


def _check_bits(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    return bits.astype(np.int64)


def modulate(bits: np.ndarray, c: Constellation, N: int | None = None) -> np.ndarray:
    """Map a bit vector (or a batch of them on the last axis) to QAM symbols."""
    bits = _check_bits(bits)
    k = c.bits_per_symbol
    if bits.shape[-1] % k:
        raise ValueError(f"bit length {bits.shape[-1]} is not a multiple of {k}")
    n_sym = bits.shape[-1] // k
    if N is not None and n_sym != N:
        raise ValueError(f"expected {N * k} bits for {N} symbols, got {bits.shape[-1]}")
    groups = bits.reshape(bits.shape[:-1] + (n_sym, k))
    idx = groups @ (1 << np.arange(k - 1, -1, -1))
    return c.points[idx]


def hard_decide_real(x: np.ndarray, alphabet: np.ndarray) -> np.ndarray:
    """Index of the nearest alphabet level; exact midpoints go to the smaller level."""
    mids = 0.5 * (alphabet[1:] + alphabet[:-1])
    return np.searchsorted(mids, x, side="left")


def demodulate(symbols: np.ndarray, c: Constellation) -> np.ndarray:
    """Hard-decision demapping (nearest point per axis) back to bits."""
    symbols = np.asarray(symbols)
    L = c.levels
    ai = hard_decide_real(symbols.real, c.real_alphabet)
    aq = hard_decide_real(symbols.imag, c.real_alphabet)
    return _levels_to_bits(L - 1 - ai, L - 1 - aq, c)


def demodulate_real(u_re: np.ndarray, c: Constellation) -> np.ndarray:
    """Demap a stacked real vector ``[Re u; Im u]`` (last axis length 2N)."""
    n = u_re.shape[-1] // 2
    return demodulate(u_re[..., :n] + 1j * u_re[..., n:], c)


def _levels_to_bits(li: np.ndarray, lq: np.ndarray, c: Constellation) -> np.ndarray:
    m = c.bits_per_axis
    shifts = np.arange(m - 1, -1, -1)
    bi = (gray_encode(li)[..., None] >> shifts) & 1
    bq = (gray_encode(lq)[..., None] >> shifts) & 1
    out = np.concatenate([bi, bq], axis=-1)
    return out.reshape(out.shape[:-2] + (-1,)).astype(np.int8)


def nearest_points(symbols: np.ndarray, c: Constellation) -> np.ndarray:
    ai = hard_decide_real(np.asarray(symbols).real, c.real_alphabet)
    aq = hard_decide_real(np.asarray(symbols).imag, c.real_alphabet)
    return c.real_alphabet[ai] + 1j * c.real_alphabet[aq]


# -- complex <-> real -------------------------------------------------------


def real_embed(H: np.ndarray) -> np.ndarray:
    """``[[Re H, -Im H], [Im H, Re H]]`` on the last two axes."""
    re, im = H.real, H.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def complex_to_real(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x.real, x.imag], axis=-1)


def real_to_complex(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


@dataclass(frozen=True)
class RealLinearSystem:
    """Real-valued model ``y_re = H_re u_re + w`` with complex noise power ``sigma2_eff``.

    Each real dimension of ``w`` has variance ``sigma2_eff / 2``. Leading batch
    axes are allowed on all three fields.
    """

    y_re: np.ndarray
    H_re: np.ndarray
    sigma2_eff: np.ndarray | float

    def __post_init__(self):
        if self.H_re.shape[-2] != self.y_re.shape[-1]:
            raise ValueError("observation length does not match H rows")
        if np.any(np.asarray(self.sigma2_eff) < 0):
            raise ValueError("noise power must be non-negative")

    @property
    def rows(self) -> int:
        return self.H_re.shape[-2]

    @property
    def unknowns(self) -> int:
        return self.H_re.shape[-1]


def real_decompose(H: np.ndarray, y: np.ndarray, sigma2) -> RealLinearSystem:
    H = np.asarray(H)
    y = np.asarray(y)
    if H.shape[-2] != y.shape[-1]:
        raise ValueError(f"H has {H.shape[-2]} rows but y has length {y.shape[-1]}")
    return RealLinearSystem(complex_to_real(y), real_embed(H), np.asarray(sigma2, dtype=float))


# -- denoiser ---------------------------------------------------------------


def posterior_mean(r, tau2, alphabet: np.ndarray) -> np.ndarray:
    """E{u | r} for u uniform on ``alphabet`` observed as ``r = u + N(0, tau2)``.

    ``tau2`` broadcasts against ``r``. Exponents are shifted by their maximum
    so that variances at the 1e-9 floor do not underflow.
    """
    tau2 = np.asarray(tau2, dtype=float)
    if np.any(tau2 <= 0):
        raise ValueError("tau2 must be positive; floor it before calling")
    r = np.asarray(r, dtype=float)
    a = np.asarray(alphabet, dtype=float)
    expo = -((r[..., None] - a) ** 2) / (2.0 * np.asarray(tau2)[..., None])
    expo -= expo.max(axis=-1, keepdims=True)
    w = np.exp(expo)
    return (w @ a) / w.sum(axis=-1)
