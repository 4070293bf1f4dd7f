"""Monte-Carlo BER/MSE sweeps with deterministic, order-independent seeding.

Trials are simulated in chunks of ``chunk_frames``. Chunk ``k`` always uses the
generator ``default_rng([seed, k])`` (independent of the SNR point and of the
worker that runs it), and chunk results are folded in index order until the
stopping rule holds, so the output does not depend on ``workers``.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cpfree_ofdm.detection import DetectorDivergence, load_oamp_net
from cpfree_ofdm.estimation import load_ce_net
from cpfree_ofdm.harness.config import RunConfig
from cpfree_ofdm.harness.link import CHAIN_PARTS, Link, Receiver, draw, simulate

log = logging.getLogger(__name__)


@dataclass
class MetricsRecord:
    config: str
    snr_db: float
    ber: float
    mse: float
    bits: int
    errors: int
    seconds: float
    seed: int
    capped: bool = False
    failed: str = ""

    def __post_init__(self):
        if self.errors > self.bits:
            raise ValueError("error count exceeds bit count")


def param_path(template: str, snr_db: float) -> str:
    """Expand ``{snr}`` in a parameter-file path (matched-SNR sets use one file per grid point)."""
    return template.replace("{snr}", format(snr_db, "g"))


def load_receiver(cfg: RunConfig, snr_db: float, link: Link | None = None) -> Receiver:
    link = link or Link(cfg)
    est, det = CHAIN_PARTS[cfg.chain]
    cenet = oampnet = None
    if est == "cenet" and cfg.csi != "perfect":
        path = param_path(cfg.cenet_params, snr_db)
        if not cfg.cenet_params or not Path(path).exists():
            raise FileNotFoundError(f"CE-NET parameter file missing: {path!r}")
        cenet = load_ce_net(path)
    if det == "oampnet":
        path = param_path(cfg.oampnet_params, snr_db)
        if not cfg.oampnet_params or not Path(path).exists():
            raise FileNotFoundError(f"OAMP-NET parameter file missing: {path!r}")
        oampnet = load_oamp_net(path)
    return Receiver(link, cfg.chain, snr_db, cenet=cenet, oampnet=oampnet)


def run_chunk(rx: Receiver, chunk: int):
    cfg = rx.link.cfg
    rng = np.random.default_rng([cfg.seed, chunk])
    return simulate(rx, draw(rx.link, cfg.chunk_frames, rng))


def _chunk_job(args):
    cfg, snr_db, chunk = args
    return run_chunk(load_receiver(cfg, snr_db), chunk)


def _done(cfg: RunConfig, bits: int, errors: int) -> tuple[bool, bool]:
    if errors >= cfg.min_errors and bits >= cfg.min_bits:
        return True, False
    if bits >= cfg.max_bits:
        return True, True
    return False, False


def run_point(cfg: RunConfig, snr_db: float, rx: Receiver | None = None, pool=None) -> MetricsRecord:
    t0 = time.perf_counter()
    rx = rx or load_receiver(cfg, snr_db)
    bits = errors = mse_count = 0
    mse_sum = 0.0
    chunk = 0
    capped = False
    failed = ""
    try:
        while True:
            if pool is None:
                results = [run_chunk(rx, chunk)]
            else:
                jobs = [(cfg, snr_db, chunk + i) for i in range(cfg.workers)]
                results = list(pool.map(_chunk_job, jobs))
            stop = False
            for res in results:
                chunk += 1
                bits += res.bits
                errors += res.errors
                mse_sum += res.mse_sum
                mse_count += res.mse_count
                stop, capped = _done(cfg, bits, errors)
                if stop:
                    break
            if stop:
                break
    except DetectorDivergence as exc:
        failed = str(exc)
        log.error("SNR %g dB failed: %s", snr_db, exc)
    seconds = time.perf_counter() - t0
    if capped:
        log.warning("SNR %g dB hit the %d-bit cap with %d errors", snr_db, cfg.max_bits, errors)
    ber = errors / bits if bits and not failed else math.nan
    mse = mse_sum / mse_count if mse_count and not failed else math.nan
    return MetricsRecord(cfg.digest(), float(snr_db), ber, mse, bits, errors,
                         round(seconds, 3) if cfg.timing else 0.0, cfg.seed, capped, failed)


def run_sweep(cfg: RunConfig) -> list[MetricsRecord]:
    link = Link(cfg)
    records = []
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for snr in cfg.snr_db:
            rx = load_receiver(cfg, snr, link)
            rec = run_point(cfg, snr, rx, pool)
            log.info("%s %5.1f dB  BER %.3e  MSE %.3e  (%d errors / %d bits)",
                     cfg.chain, snr, rec.ber, rec.mse, rec.errors, rec.bits)
            records.append(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return records
