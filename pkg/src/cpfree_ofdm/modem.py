"""Pilot layouts, CP-free frame construction and the one-tap OFDM receivers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from cpfree_ofdm.numerics import (
    Constellation,
    DftOperator,
    demodulate,
    make_constellation,
    modulate,
)

log = logging.getLogger(__name__)

PILOT_SEED = 20190501
COMB_STRIDE = 4


@dataclass(frozen=True)
class PilotArrangement:
    """Pilot positions and their known QPSK values.

    ``continuous``: block 0 of each frame is entirely pilots, followed by one
    data block. ``comb``: every block carries pilots on subcarriers
    ``0, 4, 8, ...`` and data elsewhere.
    """

    kind: str
    N: int
    indices: np.ndarray = field(repr=False)
    symbols: np.ndarray = field(repr=False)

    @property
    def pilot_count(self) -> int:
        return len(self.indices)

    @property
    def data_indices(self) -> np.ndarray:
        if self.kind == "continuous":
            return np.arange(self.N)
        return np.setdiff1d(np.arange(self.N), self.indices)

    @property
    def full_symbols(self) -> np.ndarray:
        """Length-N frequency vector with the pilots in place and zeros elsewhere."""
        x = np.zeros(self.N, dtype=complex)
        x[self.indices] = self.symbols
        return x

    def data_capacity(self, c: Constellation) -> int:
        """Payload bits per data-carrying block."""
        return len(self.data_indices) * c.bits_per_symbol


def payload_fraction(arrangement: PilotArrangement, blocks_per_frame: int = 2, cp_len: int = 0) -> float:
    """Share of transmitted time samples that carry data symbols.

    A pilot-overhead spectral-efficiency ratio only: it does not model channel
    capacity. Continuous frames hold one pilot block and ``blocks_per_frame - 1``
    data blocks; comb frames carry data on the non-pilot subcarriers of every
    block. A cyclic prefix of ``cp_len`` samples is charged to every block.
    """
    N = arrangement.N
    if blocks_per_frame < 1 or cp_len < 0:
        raise ValueError("need blocks_per_frame >= 1 and cp_len >= 0")
    if arrangement.kind == "continuous":
        if blocks_per_frame < 2:
            raise ValueError("a continuous frame needs a pilot block and at least one data block")
        data = (blocks_per_frame - 1) * N
    else:
        data = blocks_per_frame * (N - arrangement.pilot_count)
    return data / (blocks_per_frame * (N + cp_len))


def pilot_sequence(n: int, seed: int = PILOT_SEED) -> np.ndarray:
    """Fixed pseudo-random unit-energy QPSK sequence."""
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=2 * n)
    return modulate(bits, make_constellation(4))


def make_arrangement(kind: str, N: int = 64) -> PilotArrangement:
    kind = kind.lower()
    if kind == "continuous":
        idx = np.arange(N)
    elif kind in ("comb", "comb16"):
        kind = "comb"
        idx = np.arange(0, N, COMB_STRIDE)
    else:
        raise ValueError(f"unknown pilot arrangement {kind!r}")
    syms = pilot_sequence(len(idx))
    if np.any(syms == 0):
        raise ValueError("pilot symbols must be non-zero")
    idx.setflags(write=False)
    syms.setflags(write=False)
    return PilotArrangement(kind, N, idx, syms)


@dataclass(frozen=True)
class Frame:
    """Transmitted blocks of one frame, in time order.

    ``freq[k]`` is the subcarrier vector of block ``k`` and ``time[k] = F^H freq[k]``.
    No cyclic prefix is inserted anywhere.
    """

    bits: np.ndarray = field(repr=False)
    freq: np.ndarray = field(repr=False)
    time: np.ndarray = field(repr=False)
    arrangement: PilotArrangement

    @property
    def u(self) -> np.ndarray:
        """Frequency symbols of the last (data) block."""
        return self.freq[-1]

    @property
    def q(self) -> np.ndarray:
        return self.time[-1]

    @property
    def q_prev(self) -> np.ndarray:
        return self.time[-2]

    @property
    def blocks(self) -> np.ndarray:
        return self.time


def assemble_blocks(data_symbols: np.ndarray, arrangement: PilotArrangement) -> np.ndarray:
    """Frequency blocks ``(..., N)`` for data symbols ``(..., n_data)``.

    Continuous frames get a pilot block prepended on the block axis (axis -2),
    comb blocks get pilots inserted in place.
    """
    if arrangement.kind == "continuous":
        pilots = np.broadcast_to(arrangement.full_symbols, data_symbols.shape[:-2] + (1, arrangement.N))
        return np.concatenate([pilots, data_symbols], axis=-2)
    out = np.empty(data_symbols.shape[:-1] + (arrangement.N,), dtype=complex)
    out[..., arrangement.indices] = arrangement.symbols
    out[..., arrangement.data_indices] = data_symbols
    return out


def build_frame(bits: np.ndarray, arrangement: PilotArrangement, c: Constellation,
                dft: DftOperator) -> Frame:
    """Continuous: bits fill one data block after the pilot block. Comb: bits fill
    ``len(bits) / capacity`` consecutive blocks, each with embedded pilots."""
    bits = np.asarray(bits)
    cap = arrangement.data_capacity(c)
    if bits.ndim != 1 or bits.size == 0 or bits.size % cap:
        raise ValueError(f"bit count {bits.size} is not a positive multiple of the block capacity {cap}")
    n_blocks = bits.size // cap
    if arrangement.kind == "continuous" and n_blocks != 1:
        raise ValueError(f"continuous frames carry exactly {cap} bits")
    data = modulate(bits.reshape(n_blocks, cap), c)
    freq = assemble_blocks(data, arrangement)
    return Frame(bits=bits, freq=freq, time=dft.ofdm_modulate(freq), arrangement=arrangement)


def equalize_one_tap(Y: np.ndarray, H_hat: np.ndarray, rng: np.random.Generator | None = None,
                     diagnostics: dict | None = None) -> np.ndarray:
    """Per-subcarrier ``Y / H_hat``. Zero estimates are erasures and get a random
    unit-energy value (seeded by ``rng``)."""
    H_hat = np.asarray(H_hat)
    zero = H_hat == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        eq = np.asarray(Y) / H_hat
    n_zero = int(np.count_nonzero(zero))
    if n_zero:
        rng = rng if rng is not None else np.random.default_rng(0)
        eq = np.where(zero, np.exp(2j * np.pi * rng.random(eq.shape)), eq)
        if diagnostics is not None:
            diagnostics["erased"] = diagnostics.get("erased", 0) + n_zero
        log.debug("%d erased subcarriers", n_zero)
    return eq


def ls_ofdm_detect(Y_D: np.ndarray, H_hat: np.ndarray, c: Constellation,
                   rng: np.random.Generator | None = None, diagnostics: dict | None = None) -> np.ndarray:
    """One-tap equalization by the channel estimate followed by hard demapping."""
    return demodulate(equalize_one_tap(Y_D, H_hat, rng, diagnostics), c)


def ml_lowbound_detect(Y: np.ndarray, H: np.ndarray, c: Constellation) -> np.ndarray:
    """ML detection for a diagonalized (sufficient-CP) block with perfect CSI.

    The likelihood factorizes per subcarrier, so the joint ML decision is the
    nearest constellation point of ``Y(n) / H(n)`` on each subcarrier.
    """
    return demodulate(np.asarray(Y) / np.asarray(H), c)


def ber(sent: np.ndarray, decided: np.ndarray) -> float:
    sent, decided = np.asarray(sent), np.asarray(decided)
    if sent.shape != decided.shape:
        raise ValueError(f"length mismatch: {sent.shape} vs {decided.shape}")
    if sent.size == 0:
        raise ValueError("empty bit vectors")
    return float(np.count_nonzero(sent != decided)) / sent.size
