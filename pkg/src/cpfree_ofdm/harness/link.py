"""Vectorized CP-free link: frames -> channel -> estimation -> IBI cancellation -> detection.

All randomness for a chunk of trials is drawn up front in a fixed order, so
every receiver chain (and every SNR point) sees the same frames, channels and
unit-variance noise for a given ``(seed, chunk)``.

Continuous pilots: each trial is one frame (pilot block, then data block); the
pilot block is preceded by the previous frame's data block. Comb pilots: each
trial is ``blocks_per_frame`` consecutive blocks, each with its own channel draw;
block 0 follows a block known to the receiver, later blocks use decision
feedback for IBI cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from cpfree_ofdm.channel import make_model, noise_from_snr, sample_taps, toeplitz_matrices
from cpfree_ofdm.detection import (
    OampConfig,
    OampNetParams,
    cancel_ibi,
    oamp_detect,
    oamp_net_forward,
    PreparedSystem,
    prepare_system,
)
from cpfree_ofdm.estimation import (
    CeNetParams,
    LmmseWeights,
    ce_net_forward,
    freq_to_taps,
    lmmse_weights,
    ls_estimate,
    sample_covariance,
)
from cpfree_ofdm.harness.config import RunConfig
from cpfree_ofdm.modem import assemble_blocks, make_arrangement
from cpfree_ofdm.numerics import (
    complex_to_real,
    demodulate,
    demodulate_real,
    dft_matrix,
    make_constellation,
    modulate,
    nearest_points,
    real_to_complex,
)

CHAIN_PARTS = {
    "ls_ofdm": ("ls", "ofdm"),
    "lmmse_ofdm": ("lmmse", "ofdm"),
    "ls_oamp": ("ls", "oamp"),
    "lmmse_oamp": ("lmmse", "oamp"),
    "cenet_oamp": ("cenet", "oamp"),
    "ai_receiver": ("cenet", "oampnet"),
    "lowbound_cp": ("perfect", "ml_cp"),
}

COV_SEED_TAG = 7919


@dataclass
class Link:
    cfg: RunConfig

    @cached_property
    def N(self) -> int:
        return self.cfg.subcarriers

    @cached_property
    def dft(self):
        return dft_matrix(self.N)

    @cached_property
    def const(self):
        return make_constellation(self.cfg.modulation)

    @cached_property
    def arrangement(self):
        return make_arrangement(self.cfg.pilots, self.N)

    @cached_property
    def model(self):
        c = self.cfg
        return make_model(c.channel, exp_taps=c.exp_taps, exp_decay=c.exp_decay, urban_decay=c.urban_decay)

    @cached_property
    def taps_max(self) -> int:
        return self.cfg.taps_max or self.model.length

    @property
    def comb(self) -> bool:
        return self.arrangement.kind == "comb"

    @property
    def n_blocks(self) -> int:
        return self.cfg.blocks_per_frame if self.comb else 1

    @cached_property
    def data_indices(self) -> np.ndarray:
        return self.arrangement.data_indices

    @property
    def bits_per_block(self) -> int:
        return self.arrangement.data_capacity(self.const)

    @property
    def bits_per_trial(self) -> int:
        return self.bits_per_block * self.n_blocks

    @cached_property
    def R_HH(self) -> np.ndarray:
        rng = np.random.default_rng([self.cfg.seed, COV_SEED_TAG])
        return sample_covariance(self.model, self.N, self.cfg.cov_samples, rng)

    def lmmse(self, snr_db: float) -> LmmseWeights:
        # per-frame noise is set relative to E_s, so sigma2 / E_s is the same for every frame
        return lmmse_weights(self.R_HH, 10.0 ** (-snr_db / 10.0), 1.0)

    def oamp_config(self) -> OampConfig:
        c = self.cfg
        return OampConfig(layers=c.layers, beta=c.beta, eps=c.eps, noise_convention=c.noise_convention)


@dataclass
class Draw:
    """Random inputs for ``B`` trials; noise is unit power and scaled per SNR."""

    taps: np.ndarray  # (B, K, I)
    bits: np.ndarray  # (B, K, bits_per_block)
    data: np.ndarray  # (B, K, n_data) data symbols
    freq: np.ndarray  # (B, K, N) transmitted data-bearing blocks
    prev_freq: np.ndarray  # (B, N) block preceding the first transmitted block
    noise_pilot: np.ndarray  # (B, N) noise on the continuous pilot block
    noise: np.ndarray  # (B, K, N)


def draw(link: Link, B: int, rng: np.random.Generator) -> Draw:
    K, N, c = link.n_blocks, link.N, link.const
    taps = sample_taps(link.model, rng, (B, 1 if not link.comb else K))
    if not link.comb:
        taps = np.broadcast_to(taps, (B, K, taps.shape[-1]))
    bits = rng.integers(0, 2, size=(B, K, link.bits_per_block), dtype=np.int8)
    data = modulate(bits, c)
    prev_bits = rng.integers(0, 2, size=(B, N * c.bits_per_symbol), dtype=np.int8)
    prev_freq = modulate(prev_bits, c)
    if link.comb:
        freq = assemble_blocks(data, link.arrangement)
        prev_freq = assemble_blocks(prev_freq[:, None, link.data_indices], link.arrangement)[:, 0]
    else:
        freq = data
    g = rng.standard_normal((B, K + 1, N, 2))
    unit = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
    return Draw(taps, bits, data, freq, prev_freq, unit[:, 0], unit[:, 1:])


@dataclass
class Outcome:
    bits: int = 0
    errors: int = 0
    mse_sum: float = 0.0
    mse_count: int = 0
    frame_errors: np.ndarray | None = field(default=None, repr=False)


def _mv(M, x):
    return np.einsum("...ij,...j->...i", M, x)


@dataclass
class Receiver:
    """Everything a chain needs at one SNR point."""

    link: Link
    chain: str
    snr_db: float
    cenet: CeNetParams | None = None
    oampnet: OampNetParams | None = None

    def __post_init__(self):
        est, det = CHAIN_PARTS[self.chain]
        if self.link.cfg.csi == "perfect":
            est = "perfect"
        self.estimator, self.detector = est, det
        if est == "cenet" and self.cenet is None:
            raise ValueError(f"chain {self.chain} needs CE-NET parameters")
        if det == "oampnet" and self.oampnet is None:
            raise ValueError(f"chain {self.chain} needs OAMP-NET parameters")
        self.cyclic_prefix = self.link.cfg.cyclic_prefix or det == "ml_cp"
        self._lmmse = self.link.lmmse(self.snr_db) if est == "lmmse" else None

    # -- estimation --
    def estimate(self, Y_p: np.ndarray, taps: np.ndarray) -> np.ndarray:
        N = self.link.N
        if self.estimator == "perfect":
            return np.fft.fft(taps, N, axis=-1)
        H_ls = ls_estimate(Y_p, self.link.arrangement).H_hat
        if self.estimator == "ls":
            return H_ls
        if self.estimator == "lmmse":
            return self._lmmse.apply(H_ls)
        return real_to_complex(ce_net_forward(self.cenet, complex_to_real(H_ls)))

    def taps_hat(self, H_est: np.ndarray, taps: np.ndarray) -> np.ndarray:
        I = self.link.taps_max
        if self.estimator == "perfect":
            out = np.zeros(taps.shape[:-1] + (I,), dtype=complex)
            k = min(I, taps.shape[-1])
            out[..., :k] = taps[..., :k]
            return out
        return freq_to_taps(H_est, I)

    def detect(self, sys):
        cfg = self.link.oamp_config()
        ps = prepare_system(sys)
        if self.detector == "oamp":
            u, _ = oamp_detect(ps, cfg, self.link.const)
        else:
            u, _ = oamp_net_forward(ps, self.oampnet, cfg, self.link.const)
        return u


def _receive(link: Link, J, A, q, q_prev, noise, sigma2, cyclic_prefix: bool):
    if cyclic_prefix:
        y = _mv(J + A, q)
    else:
        y = _mv(J, q) + _mv(A, q_prev)
    return y + noise * np.sqrt(sigma2)[..., None]


def simulate(rx: Receiver, d: Draw) -> Outcome:
    link = rx.link
    F, N, c = link.dft, link.N, link.const
    B, K = d.bits.shape[:2]
    out = Outcome(frame_errors=np.zeros(B, dtype=np.int64))
    time_blocks = F.ofdm_modulate(d.freq)
    if not link.comb:
        pilot_t = F.ofdm_modulate(link.arrangement.full_symbols)
        prev_t = F.ofdm_modulate(d.prev_freq)
    q_prev_true = F.ofdm_modulate(d.prev_freq) if link.comb else None
    q_prev_hat = q_prev_true
    for k in range(K):
        taps = d.taps[:, k]
        J, A = toeplitz_matrices(taps, N)
        sigma2 = noise_from_snr(rx.snr_db, taps, N)
        q = time_blocks[:, k]
        if link.comb:
            y = _receive(link, J, A, q, q_prev_true, d.noise[:, k], sigma2, rx.cyclic_prefix)
            Y_p = F.ofdm_demodulate(y)
            prev_for_ibi = q_prev_hat
        else:
            y_p = _receive(link, J, A, np.broadcast_to(pilot_t, q.shape), prev_t, d.noise_pilot, sigma2,
                           rx.cyclic_prefix)
            Y_p = F.ofdm_demodulate(y_p)
            y = _receive(link, J, A, q, np.broadcast_to(pilot_t, q.shape), d.noise[:, k], sigma2, rx.cyclic_prefix)
            prev_for_ibi = np.broadcast_to(pilot_t, q.shape)
        H_true = np.fft.fft(taps, N, axis=-1)
        H_est = rx.estimate(Y_p, taps)
        if rx.estimator != "perfect":
            dH = H_est - H_true
            out.mse_sum += float(np.sum(dH.real ** 2 + dH.imag ** 2))
            out.mse_count += dH.size
        idx = link.data_indices
        if rx.detector in ("ofdm", "ml_cp"):
            Y = F.ofdm_demodulate(y)
            H_use = H_true if rx.detector == "ml_cp" else H_est
            with np.errstate(divide="ignore", invalid="ignore"):
                eq = Y[:, idx] / H_use[:, idx]
            eq = np.where(np.isfinite(eq), eq, 0.0)
            decided_bits = demodulate(eq, c)
            decided_syms = nearest_points(eq, c)
        else:
            h_hat = rx.taps_hat(H_est, taps)
            sys = cancel_ibi(y, h_hat, prev_for_ibi, sigma2, F,
                             data_indices=idx if link.comb else None,
                             known_freq=np.broadcast_to(link.arrangement.full_symbols, (B, N)) if link.comb else None)
            u = rx.detect(sys)
            decided_bits = demodulate_real(u, c)
            decided_syms = nearest_points(real_to_complex(u), c)
        errs = np.count_nonzero(decided_bits != d.bits[:, k], axis=-1)
        out.frame_errors += errs
        out.errors += int(errs.sum())
        out.bits += d.bits[:, k].size
        if link.comb:
            full = np.empty((B, N), dtype=complex)
            full[:, link.arrangement.indices] = link.arrangement.symbols
            full[:, idx] = decided_syms
            q_prev_hat = F.ofdm_modulate(full)
            q_prev_true = q
    return out


# -- training data ----------------------------------------------------------


def channel_pairs(link: Link, snr_db: float, count: int, rng: np.random.Generator, chunk: int = 512):
    """``(H_ls_real, H_true_real, taps)`` from pilot-bearing blocks received over the CP-free link."""
    xs, ts, hs = [], [], []
    rx = Receiver(link, "ls_ofdm", snr_db)
    F, N = link.dft, link.N
    done = 0
    while done < count:
        B = min(chunk, count - done)
        d = draw(link, B, rng)
        k = 0
        taps = d.taps[:, k]
        J, A = toeplitz_matrices(taps, N)
        sigma2 = noise_from_snr(snr_db, taps, N)
        if link.comb:
            y = _receive(link, J, A, F.ofdm_modulate(d.freq[:, 0]), F.ofdm_modulate(d.prev_freq),
                         d.noise[:, 0], sigma2, link.cfg.cyclic_prefix)
        else:
            pilot_t = F.ofdm_modulate(link.arrangement.full_symbols)
            y = _receive(link, J, A, np.broadcast_to(pilot_t, (B, N)), F.ofdm_modulate(d.prev_freq),
                         d.noise_pilot, sigma2, link.cfg.cyclic_prefix)
        H_ls = rx.estimate(F.ofdm_demodulate(y), taps)
        xs.append(complex_to_real(H_ls))
        ts.append(complex_to_real(np.fft.fft(taps, N, axis=-1)))
        hs.append(taps)
        done += B
    return np.concatenate(xs), np.concatenate(ts), np.concatenate(hs)


@dataclass
class DetectionSet:
    y: np.ndarray  # raw received data block (count, N)
    q_prev_hat: np.ndarray  # receiver's reconstruction of the preceding block
    taps_hat: np.ndarray  # CSI used by the receiver
    sigma2: np.ndarray
    u: np.ndarray  # transmitted data symbols (count, n_data)
    known_freq: np.ndarray  # full block with pilots (zeros on data) for comb
    data_indices: np.ndarray
    taps: np.ndarray  # true channel

    def systems(self, link: Link):
        comb = len(self.data_indices) < link.N
        return cancel_ibi(self.y, self.taps_hat, self.q_prev_hat, self.sigma2, link.dft,
                          data_indices=self.data_indices if comb else None,
                          known_freq=self.known_freq if comb else None)

    def u_real(self) -> np.ndarray:
        return complex_to_real(self.u)

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "DetectionSet":
        return DetectionSet(self.y[idx], self.q_prev_hat[idx], self.taps_hat[idx], self.sigma2[idx], self.u[idx],
                            self.known_freq[idx], self.data_indices, self.taps[idx])


class LazySystems:
    """Prepares (IBI cancellation + SVD) only the systems a mini-batch asks for.

    Stands in for a ``PreparedSystem`` in the trainer when caching every SVD
    would not fit in memory.
    """

    def __init__(self, ds: DetectionSet, link: Link):
        self.ds, self.link = ds, link

    def __len__(self) -> int:
        return len(self.ds)

    def __getitem__(self, idx) -> PreparedSystem:
        return prepare_system(self.ds.subset(idx).systems(self.link))


def detection_pairs(link: Link, snr_db: float, count: int, rng: np.random.Generator,
                    csi: str = "perfect", cenet: CeNetParams | None = None, chunk: int = 256) -> DetectionSet:
    """Data blocks with the receiver-side quantities the detector consumes.

    Uses the first data-bearing block of each trial, whose predecessor is known.
    ``csi='estimated'`` runs the CE-NET estimator on the pilots.
    """
    chain = "ai_receiver" if csi == "estimated" else "ls_oamp"
    base = link.cfg.replace(csi="perfect") if csi == "perfect" else link.cfg.replace(csi="estimated")
    l2 = Link(base)
    rx = Receiver(l2, chain, snr_db, cenet=cenet, oampnet=OampNetParams.ones(1))
    F, N = link.dft, link.N
    parts = []
    done = 0
    while done < count:
        B = min(chunk, count - done)
        d = draw(l2, B, rng)
        taps = d.taps[:, 0]
        J, A = toeplitz_matrices(taps, N)
        sigma2 = noise_from_snr(snr_db, taps, N)
        q = F.ofdm_modulate(d.freq[:, 0])
        if l2.comb:
            q_prev = F.ofdm_modulate(d.prev_freq)
            y = _receive(l2, J, A, q, q_prev, d.noise[:, 0], sigma2, l2.cfg.cyclic_prefix)
            Y_p = F.ofdm_demodulate(y)
            known = np.broadcast_to(l2.arrangement.full_symbols, (B, N)).copy()
        else:
            pilot_t = np.broadcast_to(F.ofdm_modulate(l2.arrangement.full_symbols), (B, N))
            y_p = _receive(l2, J, A, pilot_t, F.ofdm_modulate(d.prev_freq), d.noise_pilot, sigma2,
                           l2.cfg.cyclic_prefix)
            Y_p = F.ofdm_demodulate(y_p)
            q_prev = pilot_t
            y = _receive(l2, J, A, q, pilot_t, d.noise[:, 0], sigma2, l2.cfg.cyclic_prefix)
            known = np.zeros((B, N), dtype=complex)
        H_est = rx.estimate(Y_p, taps)
        parts.append(DetectionSet(y, np.array(q_prev), rx.taps_hat(H_est, taps), sigma2, d.data[:, 0], known,
                                  l2.data_indices, taps))
        done += B
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
    return DetectionSet(cat("y"), cat("q_prev_hat"), cat("taps_hat"), cat("sigma2"), cat("u"), cat("known_freq"),
                        l2.data_indices, cat("taps"))
