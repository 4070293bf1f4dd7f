"""IBI cancellation, OAMP detection and its unfolded, trainable form (OAMP-NET).

Both detectors run the same layer recursion on a real system ``y = H u + w``
with ``m`` rows and ``n`` unknowns (``n = 2N`` when every subcarrier carries
data). Per layer ``l``:

    r_l   = u_l + lam_l * P_l (y - H u_l)
    v2_l  = max((||y - H u_l||^2 - m * s) / tr(H^T H), eps)
    tau2  = max(tr(D D^T) / n * v2 + gam_l^2 / (2 n) * tr(P P^T) * sigma2, eps)
    u_l+1 = posterior_mean(r_l, tau2)

with ``P_l = n / tr(P_hat H) * P_hat``,
``P_hat = v2 H^T (v2 H H^T + sigma2/2 I)^-1`` and ``D = I - gam_l P_l H``.
``s`` is ``sigma2`` for the ``verbatim`` noise convention and ``sigma2 / 2``
for ``per_real``. OAMP uses ``lam = gam = 1`` and feeds a damped variance
``(1 - beta) v2_{l-1} + beta v2_l`` into ``P_hat`` and ``tau2``; OAMP-NET
learns ``(lam_l, gam_l)`` and uses ``v2_l`` directly.

The linear stage is evaluated through one thin SVD ``H = U diag(s) V^T`` per
system, which turns every per-layer matrix inverse into a diagonal scaling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from cpfree_ofdm.channel import toeplitz_matrices
from cpfree_ofdm.estimation import TrainResult
from cpfree_ofdm.numerics import (
    Constellation,
    DftOperator,
    RealLinearSystem,
    complex_to_real,
    hard_decide_real,
    posterior_mean,
    real_decompose,
)
from cpfree_ofdm.optim import Adam, DivergenceMonitor

log = logging.getLogger(__name__)

NOISE_CONVENTIONS = ("verbatim", "per_real")


class DetectorDivergence(FloatingPointError):
    def __init__(self, layer: int, what: str = "state"):
        super().__init__(f"non-finite {what} at layer {layer}")
        self.layer = layer


@dataclass(frozen=True)
class OampConfig:
    layers: int = 10
    beta: float = 0.5
    eps: float = 1e-9
    noise_convention: str = "verbatim"

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one layer")
        if not 0 < self.beta <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.eps <= 0:
            raise ValueError("variance floor must be positive")
        if self.noise_convention not in NOISE_CONVENTIONS:
            raise ValueError(f"noise_convention must be one of {NOISE_CONVENTIONS}")


@dataclass
class OampNetParams:
    lambdas: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.gammas = np.asarray(self.gammas, dtype=float)
        if self.lambdas.shape != self.gammas.shape or self.lambdas.ndim != 1:
            raise ValueError("lambdas and gammas must be 1-D and of equal length")
        if not (np.all(np.isfinite(self.lambdas)) and np.all(np.isfinite(self.gammas))):
            raise ValueError("parameters must be finite")

    @property
    def layers(self) -> int:
        return len(self.lambdas)

    @classmethod
    def ones(cls, layers: int) -> "OampNetParams":
        return cls(np.ones(layers), np.ones(layers))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.lambdas, self.gammas])

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "OampNetParams":
        L = len(theta) // 2
        return cls(np.array(theta[:L]), np.array(theta[L:]))


@dataclass
class OampTrace:
    """Per-layer diagnostics; each entry has the system batch shape."""

    v2: list = field(default_factory=list)
    v2_smooth: list = field(default_factory=list)
    tau2: list = field(default_factory=list)
    trace_PH: list = field(default_factory=list)


# -- IBI cancellation -------------------------------------------------------


def reconstruct_prev_block(u_prev: np.ndarray, dft: DftOperator) -> np.ndarray:
    """Time-domain previous block ``F^H u_prev`` from decisions or known pilots."""
    return dft.ofdm_modulate(np.asarray(u_prev))


def cancel_ibi(y: np.ndarray, h_hat: np.ndarray, q_prev_hat: np.ndarray, sigma2, dft: DftOperator,
               data_indices: np.ndarray | None = None, known_freq: np.ndarray | None = None,
               extra_noise=0.0) -> RealLinearSystem:
    """Subtract ``A_hat q_prev_hat`` and form the real system ``y_hat = (J_hat F^H) u + w'``.

    When ``data_indices`` is given only those subcarriers stay unknown; the
    contribution of ``known_freq`` on the remaining subcarriers is removed
    from the observation. ``extra_noise`` is added to ``sigma2`` for residual
    interference (zero when the previous block is known).
    """
    J, A = toeplitz_matrices(np.asarray(h_hat), dft.N)
    y_hat = np.asarray(y) - np.einsum("...ij,...j->...i", A, np.asarray(q_prev_hat))
    H = J @ dft.FH
    if data_indices is not None:
        known = np.setdiff1d(np.arange(dft.N), data_indices)
        if known.size:
            if known_freq is None:
                raise ValueError("known subcarrier values are required with data_indices")
            kf = np.asarray(known_freq)[..., known]
            y_hat = y_hat - np.einsum("...ij,...j->...i", H[..., known], kf)
        H = H[..., data_indices]
    return real_decompose(H, y_hat, np.asarray(sigma2, dtype=float) + extra_noise)


# -- linear stage -----------------------------------------------------------


def lmmse_matrix(H: np.ndarray, v2: float, sigma2: float, eps: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """``(P_hat, P)`` for one real system, by a direct ``m x m`` solve.

    ``sigma2 = 0`` is regularized by ``eps`` on the diagonal.
    """
    H = np.asarray(H, dtype=float)
    m, n = H.shape
    noise = sigma2 / 2.0 if sigma2 > 0 else eps
    G = v2 * (H @ H.T) + noise * np.eye(m)
    P_hat = v2 * np.linalg.solve(G, H).T  # G symmetric
    P = (n / np.trace(P_hat @ H)) * P_hat
    return P_hat, P


@dataclass(frozen=True)
class PreparedSystem:
    """A real system with its thin SVD cached, reusable across detector runs."""

    y: np.ndarray
    H: np.ndarray
    sigma2: np.ndarray
    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray

    @property
    def rows(self) -> int:
        return self.H.shape[-2]

    @property
    def unknowns(self) -> int:
        return self.H.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.y.shape[:-1]

    def __getitem__(self, idx) -> "PreparedSystem":
        return PreparedSystem(self.y[idx], self.H[idx], self.sigma2[idx], self.U[idx], self.s[idx], self.Vt[idx])

    def __len__(self) -> int:
        return len(self.y)


def prepare_system(sys: RealLinearSystem | PreparedSystem) -> PreparedSystem:
    if isinstance(sys, PreparedSystem):
        return sys
    H = np.asarray(sys.H_re, dtype=float)
    if H.shape[-2] < H.shape[-1]:
        raise ValueError("detector needs at least as many observations as unknowns")
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    sigma2 = np.broadcast_to(np.asarray(sys.sigma2_eff, dtype=float), H.shape[:-2]).copy()
    return PreparedSystem(np.asarray(sys.y_re, dtype=float), H, sigma2, U, s, Vt)


def _matvec(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.matmul(M, x[..., None])[..., 0]


def _rmatvec(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.matmul(x[..., None, :], M)[..., 0, :]


@dataclass
class _LayerState:
    u: np.ndarray
    v2_prev: np.ndarray


def _initial_state(ps: PreparedSystem) -> _LayerState:
    return _LayerState(np.zeros(ps.y.shape[:-1] + (ps.unknowns,)), np.zeros(ps.batch_shape))


def _run_layers(ps: PreparedSystem, lambdas, gammas, beta: float, cfg: OampConfig,
                alphabet: np.ndarray, state: _LayerState | None = None, start: int = 0,
                trace: OampTrace | None = None, keep_states: list | None = None) -> np.ndarray:
    m, n = ps.rows, ps.unknowns
    sigma2 = ps.sigma2
    noise_sub = m * (sigma2 if cfg.noise_convention == "verbatim" else sigma2 / 2.0)
    noise_lin = np.where(sigma2 > 0, sigma2 / 2.0, cfg.eps)[..., None]
    frob2 = np.sum(ps.s ** 2, axis=-1)
    s = ps.s
    st = state or _initial_state(ps)
    u, v2_prev = st.u, st.v2_prev
    for l in range(start, len(lambdas)):
        lam, gam = lambdas[l], gammas[l]
        e = ps.y - _matvec(ps.H, u)
        v2 = np.maximum((np.sum(e * e, axis=-1) - noise_sub) / frob2, cfg.eps)
        v2s = (1.0 - beta) * v2_prev + beta * v2
        v2_prev = v2
        w = v2s[..., None]
        den = w * s * s + noise_lin
        g = w * s * s / den
        c = n / np.sum(g, axis=-1)
        pdiag = c[..., None] * w * s / den
        Pe = _rmatvec(ps.Vt, pdiag * _rmatvec(ps.U, e))
        tr_pp = np.sum(pdiag * pdiag, axis=-1)
        tr_dd = np.sum((1.0 - gam * c[..., None] * g) ** 2, axis=-1)
        tau2 = np.maximum(tr_dd / n * v2s + gam * gam / (2.0 * n) * tr_pp * sigma2, cfg.eps)
        r = u + lam * Pe
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(tau2))):
            raise DetectorDivergence(l + 1)
        u = posterior_mean(r, tau2[..., None], alphabet)
        if trace is not None:
            trace.v2.append(v2)
            trace.v2_smooth.append(v2s)
            trace.tau2.append(tau2)
            trace.trace_PH.append(c * np.sum(g, axis=-1))
        if keep_states is not None:
            keep_states.append(_LayerState(u, v2_prev))
    return u


def oamp_detect(sys, cfg: OampConfig, c: Constellation) -> tuple[np.ndarray, OampTrace]:
    """OAMP with damping ``cfg.beta``; returns the soft estimate ``u_{L+1}`` and the trace."""
    ps = prepare_system(sys)
    ones = np.ones(cfg.layers)
    trace = OampTrace()
    u = _run_layers(ps, ones, ones, cfg.beta, cfg, c.real_alphabet, trace=trace)
    return u, trace


def oamp_net_forward(sys, params: OampNetParams, cfg: OampConfig, c: Constellation) -> tuple[np.ndarray, OampTrace]:
    """Unfolded OAMP with per-layer ``(lambda, gamma)``; no damping. ``cfg.layers`` is ignored."""
    ps = prepare_system(sys)
    trace = OampTrace()
    u = _run_layers(ps, params.lambdas, params.gammas, 1.0, cfg, c.real_alphabet, trace=trace)
    return u, trace


def hard_decision(u_re: np.ndarray, c: Constellation) -> np.ndarray:
    """Nearest real-alphabet value per dimension, ties toward the smaller value."""
    return c.real_alphabet[hard_decide_real(u_re, c.real_alphabet)]


# -- training ---------------------------------------------------------------


@dataclass
class OampNetTrainConfig:
    lr: float = 0.001
    batch_size: int = 200
    epochs: int = 300
    fd_step: float = 1e-4
    eval_every: int = 10
    seed: int = 0
    gradient: str = "fd"  # or "autograd" (needs torch)
    divergence_factor: float = 10.0
    divergence_patience: int = 3


def net_loss(ps: PreparedSystem, u_true: np.ndarray, params: OampNetParams, cfg: OampConfig,
             c: Constellation) -> float:
    u = _run_layers(ps, params.lambdas, params.gammas, 1.0, cfg, c.real_alphabet)
    d = u - u_true
    return float(np.mean(d * d))


def _dataset_loss(data, u_true: np.ndarray, params: OampNetParams, cfg: OampConfig, c: Constellation,
                  chunk: int = 1000) -> float:
    # anything indexable that yields PreparedSystem batches is evaluated chunk by chunk
    if isinstance(data, PreparedSystem):
        return net_loss(data, u_true, params, cfg, c)
    total = 0.0
    for i in range(0, len(data), chunk):
        sl = slice(i, min(i + chunk, len(data)))
        total += net_loss(data[sl], u_true[sl], params, cfg, c) * (sl.stop - sl.start)
    return total / len(data)


def fd_gradient(ps: PreparedSystem, u_true: np.ndarray, params: OampNetParams, cfg: OampConfig,
                c: Constellation, step: float = 1e-4) -> tuple[float, np.ndarray]:
    """Central finite differences over the 2L scalars on a fixed batch.

    Layers before the perturbed one are reused from the unperturbed pass.
    """
    lam, gam = params.lambdas, params.gammas
    L = len(lam)
    states: list[_LayerState] = []
    u = _run_layers(ps, lam, gam, 1.0, cfg, c.real_alphabet, keep_states=states)
    base = float(np.mean((u - u_true) ** 2))
    init = _initial_state(ps)
    grad = np.zeros(2 * L)
    for j in range(2 * L):
        layer = j % L
        prior = init if layer == 0 else states[layer - 1]
        vals = []
        for sgn in (1.0, -1.0):
            th = np.concatenate([lam, gam])
            th[j] += sgn * step
            out = _run_layers(ps, th[:L], th[L:], 1.0, cfg, c.real_alphabet, state=prior, start=layer)
            vals.append(float(np.mean((out - u_true) ** 2)))
        grad[j] = (vals[0] - vals[1]) / (2.0 * step)
    return base, grad


def autograd_gradient(ps: PreparedSystem, u_true: np.ndarray, params: OampNetParams, cfg: OampConfig,
                      c: Constellation) -> tuple[float, np.ndarray]:
    """Reverse-mode gradient of the same loss through a torch mirror of the layer recursion."""
    import torch

    t = lambda a: torch.tensor(np.asarray(a), dtype=torch.float64)
    theta = torch.tensor(params.vector(), dtype=torch.float64, requires_grad=True)
    L = params.layers
    y, H, U, s, Vt, sigma2 = t(ps.y), t(ps.H), t(ps.U), t(ps.s), t(ps.Vt), t(ps.sigma2)
    a = t(c.real_alphabet)
    m, n = ps.rows, ps.unknowns
    noise_sub = m * (sigma2 if cfg.noise_convention == "verbatim" else sigma2 / 2.0)
    noise_lin = torch.where(sigma2 > 0, sigma2 / 2.0, torch.full_like(sigma2, cfg.eps))[..., None]
    frob2 = (s * s).sum(-1)
    u = torch.zeros(y.shape[:-1] + (n,), dtype=torch.float64)
    for l in range(L):
        lam, gam = theta[l], theta[L + l]
        e = y - (H @ u[..., None])[..., 0]
        v2 = torch.clamp(((e * e).sum(-1) - noise_sub) / frob2, min=cfg.eps)
        w = v2[..., None]
        den = w * s * s + noise_lin
        g = w * s * s / den
        cc = n / g.sum(-1)
        pdiag = cc[..., None] * w * s / den
        Pe = ((pdiag * (e[..., None, :] @ U)[..., 0, :])[..., None, :] @ Vt)[..., 0, :]
        tr_pp = (pdiag * pdiag).sum(-1)
        tr_dd = ((1.0 - gam * cc[..., None] * g) ** 2).sum(-1)
        tau2 = torch.clamp(tr_dd / n * v2 + gam * gam / (2.0 * n) * tr_pp * sigma2, min=cfg.eps)
        r = u + lam * Pe
        expo = -((r[..., None] - a) ** 2) / (2.0 * tau2[..., None, None])
        u = (torch.softmax(expo, dim=-1) * a).sum(-1)
    loss = ((u - t(u_true)) ** 2).mean()
    loss.backward()
    return float(loss.detach()), theta.grad.numpy().copy()


def oamp_net_train(train, train_u: np.ndarray, val, val_u: np.ndarray,
                   cfg: OampConfig, c: Constellation, hyper: OampNetTrainConfig | None = None,
                   init: OampNetParams | None = None) -> TrainResult:
    """Adam over ``(lambda, gamma)`` on random mini-batches of the training systems.

    The returned parameters have the lowest validation loss seen, the all-ones
    start included. ``train`` and ``val`` are ``PreparedSystem`` batches or any
    object with ``len`` and index access returning one.
    """
    hyper = hyper or OampNetTrainConfig()
    if len(train) == 0 or len(val) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(hyper.seed)
    p = init or OampNetParams.ones(cfg.layers)
    theta = {"theta": p.vector()}
    opt = Adam(lr=hyper.lr)
    val0 = _dataset_loss(val, val_u, p, cfg, c)
    best, best_loss = OampNetParams.from_vector(theta["theta"].copy()), val0
    monitor = DivergenceMonitor(val0, hyper.divergence_factor, hyper.divergence_patience)
    history = [{"epoch": 0, "val": val0, "params": theta["theta"].tolist()}]
    for epoch in range(1, hyper.epochs + 1):
        b = rng.choice(len(train), size=min(hyper.batch_size, len(train)), replace=False)
        cur = OampNetParams.from_vector(theta["theta"])
        if hyper.gradient == "autograd":
            loss, grad = autograd_gradient(train[b], train_u[b], cur, cfg, c)
        else:
            loss, grad = fd_gradient(train[b], train_u[b], cur, cfg, c, hyper.fd_step)
        opt.step(theta, {"theta": grad})
        if epoch % hyper.eval_every == 0 or epoch == hyper.epochs:
            cur = OampNetParams.from_vector(theta["theta"])
            vloss = _dataset_loss(val, val_u, cur, cfg, c)
            history.append({"epoch": epoch, "train": loss, "val": vloss, "params": theta["theta"].tolist()})
            log.info("oamp-net epoch %d train %.4e val %.4e", epoch, loss, vloss)
            if vloss < best_loss:
                best, best_loss = OampNetParams.from_vector(theta["theta"].copy()), vloss
            monitor.update(vloss, epoch)
    return TrainResult(best, history, val0, best_loss)


def save_oamp_net(p: OampNetParams, path: str | Path) -> None:
    fmt = lambda xs: " ".join(format(float(v), ".17g") for v in xs)
    Path(path).write_text(f"OAMPNET v1 L={p.layers}\nlambda: {fmt(p.lambdas)}\ngamma: {fmt(p.gammas)}\n")


def load_oamp_net(path: str | Path) -> OampNetParams:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[:2] != ["OAMPNET", "v1"] or not head[2].startswith("L="):
        raise ValueError(f"{path}: not an OAMP-NET v1 parameter file")
    L = int(head[2][2:])
    fields = {}
    for ln in lines[1:3]:
        key, _, rest = ln.partition(":")
        fields[key.strip()] = np.array([float(v) for v in rest.split()])
    if set(fields) != {"lambda", "gamma"} or any(len(v) != L for v in fields.values()):
        raise ValueError(f"{path}: malformed OAMP-NET file")
    return OampNetParams(fields["lambda"], fields["gamma"])


def with_layers(cfg: OampConfig, layers: int) -> OampConfig:
    return replace(cfg, layers=layers)


def stack_real(u: np.ndarray) -> np.ndarray:
    return complex_to_real(np.asarray(u))
