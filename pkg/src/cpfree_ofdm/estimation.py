"""Frequency-domain channel estimation: LS, LMMSE and the one-layer CE-NET.

The CE-NET is an affine map on the stacked real LS estimate
``[Re H_ls; Im H_ls]`` (length 2N), initialized with the real embedding of the
LMMSE weight matrix and a zero bias, then refined with Adam on an l2 loss.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from cpfree_ofdm.channel import ChannelModel, sample_taps
from cpfree_ofdm.modem import PilotArrangement
from cpfree_ofdm.numerics import complex_to_real, real_embed, real_to_complex
from cpfree_ofdm.optim import Adam, DivergenceMonitor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FreqChannelEstimate:
    H_hat: np.ndarray

    @property
    def real_form(self) -> np.ndarray:
        return complex_to_real(self.H_hat)

    @classmethod
    def from_real(cls, x: np.ndarray) -> "FreqChannelEstimate":
        return cls(real_to_complex(np.asarray(x)))


@lru_cache(maxsize=8)
def _interp_matrix(N: int, idx: tuple[int, ...]) -> np.ndarray:
    """Linear interpolation in frequency from pilot subcarriers, held flat past the end pilots."""
    P = len(idx)
    T = np.empty((N, P))
    grid = np.arange(N)
    for k in range(P):
        e = np.zeros(P)
        e[k] = 1.0
        T[:, k] = np.interp(grid, idx, e)
    T.setflags(write=False)
    return T


def ls_estimate(Y_p: np.ndarray, arrangement: PilotArrangement) -> FreqChannelEstimate:
    """``Y_p(n) / X_p(n)`` on the pilot subcarriers; comb layouts are filled in by
    linear interpolation. ``Y_p`` is the full length-N received spectrum of the
    pilot-bearing block (leading batch axes allowed)."""
    Y_p = np.asarray(Y_p)
    if Y_p.shape[-1] != arrangement.N:
        raise ValueError(f"expected {arrangement.N} subcarriers, got {Y_p.shape[-1]}")
    at_pilots = Y_p[..., arrangement.indices] / arrangement.symbols
    if arrangement.kind == "continuous":
        return FreqChannelEstimate(at_pilots)
    T = _interp_matrix(arrangement.N, tuple(int(i) for i in arrangement.indices))
    return FreqChannelEstimate(at_pilots @ T.T)


def channel_covariance(model: ChannelModel, N: int) -> np.ndarray:
    """Exact ``E{H H^H}`` for ``H = fft(h, N)`` under the model's power-delay profile."""
    p = model.tap_powers
    n = np.arange(N)
    E = np.exp(-2j * np.pi * np.outer(n, np.arange(len(p))) / N)
    return (E * p) @ E.conj().T


def sample_covariance(model: ChannelModel, N: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Sample estimate of ``E{H H^H}`` over ``count`` generated frequency responses."""
    H = np.fft.fft(sample_taps(model, rng, count), N)
    return H.T @ H.conj() / count


@dataclass(frozen=True)
class LmmseWeights:
    W: np.ndarray = field(repr=False)

    @property
    def W_real(self) -> np.ndarray:
        return real_embed(self.W)

    def apply(self, H_ls: np.ndarray) -> np.ndarray:
        return np.asarray(H_ls) @ self.W.T


def lmmse_weights(R_HH: np.ndarray, sigma2: float, Es: float = 1.0) -> LmmseWeights:
    """``W = R_HH (R_HH + (sigma2/Es) I)^-1``, using ``R_{H, H_ls} = R_HH``."""
    R = np.asarray(R_HH)
    if not np.allclose(R, R.conj().T, atol=1e-10 * max(1.0, np.abs(R).max())):
        raise ValueError("R_HH must be Hermitian")
    reg = float(sigma2) / float(Es)
    if reg < 0:
        raise ValueError("noise power must be non-negative")
    X = R + reg * np.eye(len(R))
    if reg == 0 and np.linalg.matrix_rank(R, hermitian=True) < len(R):
        raise ValueError("noiseless LMMSE needs a non-singular channel covariance")
    # R and X are Hermitian, so R X^-1 = (X^-1 R)^H
    return LmmseWeights(np.linalg.solve(X, R).conj().T)


# -- CE-NET -----------------------------------------------------------------


@dataclass
class CeNetParams:
    weight: np.ndarray
    bias: np.ndarray

    @property
    def N(self) -> int:
        return self.weight.shape[0] // 2

    def copy(self) -> "CeNetParams":
        return CeNetParams(self.weight.copy(), self.bias.copy())


def ce_net_init(W: LmmseWeights) -> CeNetParams:
    Wr = np.array(W.W_real, dtype=float)
    return CeNetParams(Wr, np.zeros(Wr.shape[0]))


def ce_net_forward(p: CeNetParams, H_ls_real: np.ndarray) -> np.ndarray:
    x = np.asarray(H_ls_real, dtype=float)
    if x.shape[-1] != p.weight.shape[1]:
        raise ValueError(f"input length {x.shape[-1]} does not match CE-NET width {p.weight.shape[1]}")
    return x @ p.weight.T + p.bias


def ce_net_loss(p: CeNetParams, x: np.ndarray, t: np.ndarray) -> float:
    e = ce_net_forward(p, x) - t
    return float(np.mean(e * e))


def ce_net_loss_grad(p: CeNetParams, x: np.ndarray, t: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error over all entries and its gradient w.r.t. weight and bias."""
    e = ce_net_forward(p, x) - t
    scale = 2.0 / e.size
    return float(np.mean(e * e)), {"weight": scale * (e.T @ x), "bias": scale * e.sum(axis=0)}


@dataclass
class CeNetTrainConfig:
    lr: float = 0.001
    batch_size: int = 50
    epochs: int = 50
    seed: int = 0
    divergence_factor: float = 10.0
    divergence_patience: int = 3


@dataclass
class TrainResult:
    params: object
    history: list[dict] = field(default_factory=list)
    initial_val_loss: float = float("nan")
    best_val_loss: float = float("nan")


def ce_net_train(train_x: np.ndarray, train_t: np.ndarray, val_x: np.ndarray, val_t: np.ndarray,
                 init: CeNetParams, cfg: CeNetTrainConfig | None = None) -> TrainResult:
    """Adam on mini-batches; returns the parameters with the lowest validation loss
    seen (the initialization included), so the result never does worse than the start."""
    cfg = cfg or CeNetTrainConfig()
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    p = init.copy()
    params = {"weight": p.weight, "bias": p.bias}
    opt = Adam(lr=cfg.lr)
    val0 = ce_net_loss(p, val_x, val_t)
    best, best_loss = init.copy(), val0
    monitor = DivergenceMonitor(val0, cfg.divergence_factor, cfg.divergence_patience)
    history = [{"epoch": 0, "train": ce_net_loss(p, train_x, train_t), "val": val0}]
    n = len(train_x)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            loss, grads = ce_net_loss_grad(p, train_x[b], train_t[b])
            opt.step(params, grads)
            total += loss * len(b)
        val = ce_net_loss(p, val_x, val_t)
        history.append({"epoch": epoch, "train": total / n, "val": val})
        log.info("ce-net epoch %d train %.4e val %.4e", epoch, total / n, val)
        if val < best_loss:
            best, best_loss = p.copy(), val
        monitor.update(val, epoch)
    return TrainResult(best, history, val0, best_loss)


def save_ce_net(p: CeNetParams, path: str | Path) -> None:
    """Text format: ``CENET v1 N=<N>``, ``weight`` + 2N rows, ``bias`` + one row."""
    fmt = lambda row: " ".join(format(float(v), ".17g") for v in row)
    lines = [f"CENET v1 N={p.N}", "weight"]
    lines += [fmt(row) for row in p.weight]
    lines += ["bias", fmt(p.bias)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_ce_net(path: str | Path) -> CeNetParams:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[:2] != ["CENET", "v1"] or not head[2].startswith("N="):
        raise ValueError(f"{path}: not a CE-NET v1 parameter file")
    N = int(head[2][2:])
    if lines[1].strip() != "weight" or lines[2 + 2 * N].strip() != "bias":
        raise ValueError(f"{path}: malformed CE-NET file")
    weight = np.array([[float(v) for v in ln.split()] for ln in lines[2:2 + 2 * N]])
    bias = np.array([float(v) for v in lines[3 + 2 * N].split()])
    if weight.shape != (2 * N, 2 * N) or bias.shape != (2 * N,):
        raise ValueError(f"{path}: shape mismatch for N={N}")
    return CeNetParams(weight, bias)


def freq_to_taps(H_out, I_max: int) -> np.ndarray:
    """First ``I_max`` samples of the inverse DFT of the frequency estimate.

    With numpy's convention (``fft`` unscaled, ``ifft`` scaled by 1/N), the flat
    response ``H = 1`` maps to the unit impulse ``(1, 0, ..., 0)``.
    """
    H = H_out.H_hat if isinstance(H_out, FreqChannelEstimate) else np.asarray(H_out)
    N = H.shape[-1]
    if I_max - 1 >= N or I_max < 1:
        raise ValueError(f"I_max={I_max} must satisfy 1 <= I_max <= N={N}")
    return np.fft.ifft(H, axis=-1)[..., :I_max]


def mse(H_hat: np.ndarray, H: np.ndarray) -> float:
    """Mean squared error per subcarrier, averaged over everything given."""
    d = np.asarray(H_hat) - np.asarray(H)
    return float(np.mean(d.real ** 2 + d.imag ** 2))
