"""Deterministic training-set files (``.npz``) and the two trainers' harness entry points."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from cpfree_ofdm.detection import (
    OampNetTrainConfig,
    oamp_net_train,
    prepare_system,
    save_oamp_net,
)
from cpfree_ofdm.estimation import CeNetTrainConfig, ce_net_init, ce_net_train, load_ce_net, save_ce_net
from cpfree_ofdm.harness.config import RunConfig
from cpfree_ofdm.harness.link import DetectionSet, LazySystems, Link, channel_pairs, detection_pairs
from cpfree_ofdm.harness.sweep import param_path

log = logging.getLogger(__name__)

KINDS = ("channel_pairs", "detection_pairs")

# stream tags keep training, validation and sweep randomness apart
TRAIN_TAG, VAL_TAG = 101, 202


def _rng(cfg: RunConfig, snr_db: float, tag: int, seed: int | None = None) -> np.random.Generator:
    return np.random.default_rng([cfg.seed if seed is None else seed, tag, int(round(snr_db * 1000))])


def _cenet_for(cfg: RunConfig, snr_db: float):
    path = param_path(cfg.cenet_params, snr_db)
    if not cfg.cenet_params or not Path(path).exists():
        raise FileNotFoundError(f"CE-NET parameter file missing: {path!r}")
    return load_ce_net(path)


def make_dataset(kind: str, cfg: RunConfig, snr_db: float, count: int, rng: np.random.Generator) -> dict:
    if count <= 0:
        raise ValueError("count must be positive")
    link = Link(cfg)
    meta = {"kind": kind, "snr_db": snr_db, "config": cfg.canonical()}
    if kind == "channel_pairs":
        x, t, taps = channel_pairs(link, snr_db, count, rng)
        return {"h_ls": x, "h_true": t, "taps": taps, "meta": np.array(json.dumps(meta))}
    if kind == "detection_pairs":
        cenet = _cenet_for(cfg, snr_db) if cfg.train_csi == "estimated" else None
        ds = detection_pairs(link, snr_db, count, rng, csi=cfg.train_csi, cenet=cenet)
        arrays = {k: getattr(ds, k) for k in DetectionSet.__dataclass_fields__}
        arrays["meta"] = np.array(json.dumps(meta))
        return arrays
    raise ValueError(f"dataset kind must be one of {KINDS}")


def gen_dataset(kind: str, cfg: RunConfig, count: int, seed: int, path: str | Path, snr_db: float | None = None) -> Path:
    """Write a dataset file; identical arguments give identical bytes."""
    snr = cfg.snr_db[0] if snr_db is None else snr_db
    arrays = make_dataset(kind, cfg, snr, count, _rng(cfg, snr, TRAIN_TAG, seed))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_dataset(path: str | Path) -> dict:
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


def as_detection_set(arrays: dict) -> DetectionSet:
    return DetectionSet(**{k: arrays[k] for k in DetectionSet.__dataclass_fields__})


def _training_snrs(cfg: RunConfig, snr_db: float | None) -> list[float]:
    if cfg.train_snr_db:
        return list(cfg.train_snr_db)
    if snr_db is None:
        raise ValueError("no training SNR given")
    return [snr_db]


def _shares(count: int, parts: int) -> list[int]:
    base, extra = divmod(count, parts)
    return [base + (i < extra) for i in range(parts)]


def _channel_data(cfg: RunConfig, link: Link, snrs: list[float], count: int, tag: int):
    parts = [channel_pairs(link, snr, n, _rng(cfg, snr, tag)) for snr, n in zip(snrs, _shares(count, len(snrs))) if n]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _detection_data(cfg: RunConfig, link: Link, snrs: list[float], count: int, tag: int) -> DetectionSet:
    parts = []
    for snr, n in zip(snrs, _shares(count, len(snrs))):
        if n:
            cenet = _cenet_for(cfg, snr) if cfg.train_csi == "estimated" else None
            parts.append(detection_pairs(link, snr, n, _rng(cfg, snr, tag), cfg.train_csi, cenet))
    if len(parts) == 1:
        return parts[0]
    cat = {k: np.concatenate([getattr(p, k) for p in parts]) for k in DetectionSet.__dataclass_fields__}
    cat["data_indices"] = parts[0].data_indices
    return DetectionSet(**cat)


def train_cenet(cfg: RunConfig, snr_db: float | None, out: str | Path, dataset: str | Path | None = None):
    """Matched-SNR training at ``snr_db``, or mixed-SNR training when ``train_snr_db`` is set.

    The mixed network starts from the LMMSE weights of the median training SNR.
    """
    link = Link(cfg)
    snrs = _training_snrs(cfg, snr_db)
    if dataset:
        d = load_dataset(dataset)
        x, t = d["h_ls"], d["h_true"]
    else:
        x, t = _channel_data(cfg, link, snrs, cfg.train_count, TRAIN_TAG)
    vx, vt = _channel_data(cfg, link, snrs, cfg.val_count, VAL_TAG)
    init = ce_net_init(link.lmmse(float(np.median(snrs))))
    hyper = CeNetTrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.epochs, seed=cfg.seed)
    res = ce_net_train(x, t, vx, vt, init, hyper)
    save_ce_net(res.params, out)
    log.info("CE-NET %s dB: val loss %.4e -> %.4e", snrs, res.initial_val_loss, res.best_val_loss)
    return res


# cached SVD factors above this size are recomputed per mini-batch instead
PREPARED_BUDGET_BYTES = 2 << 30


def _prepared(ds: DetectionSet, link: Link):
    rows = 2 * link.N
    if 3 * len(ds) * rows * rows * 8 > PREPARED_BUDGET_BYTES:
        return LazySystems(ds, link)
    return prepare_system(ds.systems(link))


def train_oampnet(cfg: RunConfig, snr_db: float | None, out: str | Path, dataset: str | Path | None = None):
    link = Link(cfg)
    snrs = _training_snrs(cfg, snr_db)
    train = as_detection_set(load_dataset(dataset)) if dataset else _detection_data(cfg, link, snrs, cfg.train_count, TRAIN_TAG)
    val = _detection_data(cfg, link, snrs, cfg.val_count, VAL_TAG)
    tr_ps, va_ps = _prepared(train, link), _prepared(val, link)
    hyper = OampNetTrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.epochs,
                               eval_every=cfg.eval_every, seed=cfg.seed, gradient=cfg.gradient)
    res = oamp_net_train(tr_ps, train.u_real(), va_ps, val.u_real(), link.oamp_config(), link.const, hyper)
    save_oamp_net(res.params, out)
    log.info("OAMP-NET %s dB: val loss %.4e -> %.4e", snrs, res.initial_val_loss, res.best_val_loss)
    return res
