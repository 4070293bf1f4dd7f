"""Tapped-delay-line Rayleigh channels and the CP-free propagation model.

A block ``q`` preceded by ``q_prev`` is received as ``y = J q + A q_prev + w``
where ``C`` is the circulant channel matrix, ``A`` the cut-off (tail) matrix
and ``J = C - A`` the lower-banded Toeplitz matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ChannelModel:
    """Power-delay profile. ``delays`` are sample indices, ``powers_db`` relative powers."""

    kind: str
    delays: tuple[int, ...]
    powers_db: tuple[float, ...]

    def __post_init__(self):
        if len(self.delays) != len(self.powers_db) or not self.delays:
            raise ValueError("delays and powers must be non-empty and of equal length")
        if min(self.delays) < 0:
            raise ValueError("delays must be non-negative")

    @property
    def length(self) -> int:
        """Channel length I (taps span 0..I-1)."""
        return max(self.delays) + 1

    @property
    def tap_powers(self) -> np.ndarray:
        """Linear average power per tap index, normalized to unit sum."""
        p = np.zeros(self.length)
        p[list(self.delays)] = 10.0 ** (np.asarray(self.powers_db) / 10.0)
        return p / p.sum()


def sui3() -> ChannelModel:
    return ChannelModel("sui3", (0, 4, 10), (0.0, -5.0, -10.0))


def exponential(taps: int, decay: float) -> ChannelModel:
    """``taps`` sample-spaced taps with power ratio ``exp(-1/decay)`` between neighbours."""
    if taps < 1 or decay <= 0:
        raise ValueError("need taps >= 1 and decay > 0")
    i = np.arange(taps)
    return ChannelModel("exp", tuple(int(k) for k in i), tuple(float(x) for x in -10 * i / decay / np.log(10)))


def urban16(decay: float = 4.0) -> ChannelModel:
    """Stand-in for a WINNER II typical-urban profile: 16 exponentially decaying taps."""
    m = exponential(16, decay)
    return ChannelModel("urban16", m.delays, m.powers_db)


def single_tap() -> ChannelModel:
    return ChannelModel("exp", (0,), (0.0,))


def make_model(name: str, *, exp_taps: int = 8, exp_decay: float = 2.0, urban_decay: float = 4.0) -> ChannelModel:
    name = name.lower()
    if name == "sui3":
        return sui3()
    if name == "exp":
        return exponential(exp_taps, exp_decay)
    if name == "urban16":
        return urban16(urban_decay)
    raise ValueError(f"unknown channel model {name!r}")


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.taps)
        if t.shape[-1] < 1 or not np.all(np.isfinite(t)):
            raise ValueError("channel taps must be non-empty and finite")

    @property
    def length(self) -> int:
        return self.taps.shape[-1]

    def frequency_response(self, N: int) -> np.ndarray:
        return np.fft.fft(self.taps, N)


def sample_taps(model: ChannelModel, rng: np.random.Generator, size: int | tuple = ()) -> np.ndarray:
    """Draw circular Gaussian taps with shape ``size + (I,)``; unused delays stay exactly zero."""
    size = (size,) if isinstance(size, int) else tuple(size)
    p = model.tap_powers
    g = rng.standard_normal(size + (model.length, 2))
    taps = (g[..., 0] + 1j * g[..., 1]) * np.sqrt(p / 2.0)
    return np.where(p > 0, taps, 0.0)


def sample_channel(model: ChannelModel, rng: np.random.Generator) -> ChannelRealization:
    return ChannelRealization(sample_taps(model, rng))


@dataclass(frozen=True)
class ChannelMatrices:
    C: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)


def _taps(h) -> np.ndarray:
    return np.asarray(h.taps if isinstance(h, ChannelRealization) else h)


def toeplitz_matrices(taps: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
    """``(J, A)`` for taps of shape ``(..., I)``; result shape ``(..., N, N)``."""
    taps = np.asarray(taps)
    I = taps.shape[-1]
    if I - 1 >= N:
        raise ValueError(f"channel length {I} does not fit a block of {N} samples")
    d = np.arange(N)[:, None] - np.arange(N)[None, :]
    padded = np.concatenate([taps, np.zeros(taps.shape[:-1] + (1,), dtype=taps.dtype)], axis=-1)
    jidx = np.where((d >= 0) & (d < I), d, I)
    aidx = np.where((d < 0) & (d + N < I), d + N, I)
    return padded[..., jidx], padded[..., aidx]


def build_matrices(h, N: int) -> ChannelMatrices:
    J, A = toeplitz_matrices(_taps(h).astype(complex), N)
    return ChannelMatrices(C=J + A, A=A, J=J)


def apply_channel(q, q_prev, h, sigma2, rng: np.random.Generator | None = None,
                  *, cyclic_prefix: bool = False) -> np.ndarray:
    """Receive block ``q`` after ``q_prev`` through ``h`` with complex AWGN of power ``sigma2``.

    With ``cyclic_prefix`` the block sees the circular channel ``C q`` (test-only
    reference mode, equivalent to a sufficiently long CP).
    """
    taps = _taps(h)
    q = np.asarray(q)
    N = q.shape[-1]
    J, A = toeplitz_matrices(taps, N)
    if cyclic_prefix:
        y = np.einsum("...ij,...j->...i", J + A, q)
    else:
        y = np.einsum("...ij,...j->...i", J, q) + np.einsum("...ij,...j->...i", A, np.asarray(q_prev))
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise ValueError("noise power must be non-negative")
    if rng is not None and np.any(sigma2 > 0):
        y = y + awgn(rng, y.shape, sigma2)
    return y


def awgn(rng: np.random.Generator, shape, sigma2) -> np.ndarray:
    g = rng.standard_normal(tuple(shape) + (2,))
    scale = np.sqrt(np.asarray(sigma2, dtype=float) / 2.0)[..., None]
    return (g[..., 0] + 1j * g[..., 1]) * scale


def signal_energy(h, N: int) -> np.ndarray:
    """Expected per-sample power of ``s = J F^H u`` for unit-energy i.i.d. symbols, ``||J||_F^2 / N``."""
    taps = _taps(h)
    I = taps.shape[-1]
    weights = (N - np.arange(I)) / N
    return np.sum(np.abs(taps) ** 2 * weights, axis=-1)


def noise_from_snr(snr_db, h, N: int) -> np.ndarray:
    """Complex noise power giving ``SNR = 10 log10(E_s / sigma2)`` for the realization ``h``."""
    snr_db = np.asarray(snr_db, dtype=float)
    if not np.all(np.isfinite(snr_db)):
        raise ValueError("SNR must be finite")
    return signal_energy(h, N) * 10.0 ** (-snr_db / 10.0)
