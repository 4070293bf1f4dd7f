"""Run configurations and trained-parameter artifacts behind the acceptance experiments.

Every artifact is produced by the ordinary trainers from a fixed configuration,
so deleting a file and calling the matching ``ensure_*`` function regenerates
it bit for bit (given the same numpy/torch builds).
"""

from __future__ import annotations

import importlib.util
import logging
from pathlib import Path

from cpfree_ofdm.harness.config import RunConfig
from cpfree_ofdm.harness.datasets import train_cenet, train_oampnet

log = logging.getLogger(__name__)

ARTIFACTS = Path(__file__).resolve().parents[3] / "artifacts"

# 16-QAM over urban16 with continuous pilots and estimated CSI
LINK = dict(channel="urban16", modulation="qam16", pilots="continuous", csi="estimated", subcarriers=64, seed=1)

CENET_TRAIN = dict(train_count=20000, val_count=2000, epochs=20, lr=1e-3, batch_size=50)

# "epochs" counts Adam steps for OAMP-NET; 4000 systems keep the cached SVDs near 1.6 GB
OAMPNET_TRAIN = dict(train_count=4000, val_count=1000, epochs=5000, batch_size=200, lr=0.02, eval_every=20,
                     train_csi="estimated")

# N = 4 QPSK instance small enough for exhaustive joint ML
SMALL_ML = dict(subcarriers=4, channel="exp", exp_taps=4, exp_decay=2.0, modulation="qpsk", csi="perfect",
                train_csi="perfect", layers=5, seed=1)


def gradient_method() -> str:
    return "autograd" if importlib.util.find_spec("torch") else "fd"


def link_config(**kw) -> RunConfig:
    return RunConfig(**{**LINK, **kw})


def cenet_path(pilots: str, snr_db: float, root: Path = ARTIFACTS) -> Path:
    return Path(root) / f"cenet_{pilots}_{snr_db:g}.txt"


def cenet_template(pilots: str, root: Path = ARTIFACTS) -> str:
    return str(Path(root) / f"cenet_{pilots}_{{snr}}.txt")


def oampnet_path(modulation: str, layers: int, snr_db: float, root: Path = ARTIFACTS) -> Path:
    return Path(root) / f"oampnet_{modulation}_L{layers}_{snr_db:g}.txt"


def oampnet_template(modulation: str, layers: int, root: Path = ARTIFACTS) -> str:
    return str(Path(root) / f"oampnet_{modulation}_L{layers}_{{snr}}.txt")


def small_ml_oampnet_path(snr_db: float, root: Path = ARTIFACTS) -> Path:
    return Path(root) / f"oampnet_small_ml_{snr_db:g}.txt"


def ensure_cenet(pilots: str, snr_db: float, root: Path = ARTIFACTS) -> Path:
    """CE-NET trained at ``snr_db``; pilots do not depend on the modulation."""
    out = cenet_path(pilots, snr_db, root)
    if not out.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
        log.info("training %s", out.name)
        train_cenet(link_config(pilots=pilots, **CENET_TRAIN), snr_db, out)
    return out


def ensure_oampnet(modulation: str, layers: int, snr_db: float, root: Path = ARTIFACTS) -> Path:
    """OAMP-NET trained on CE-NET estimated CSI at a matched SNR."""
    out = oampnet_path(modulation, layers, snr_db, root)
    if not out.exists():
        ensure_cenet("continuous", snr_db, root)
        cfg = link_config(modulation=modulation, layers=layers, cenet_params=cenet_template("continuous", root),
                          gradient=gradient_method(), **OAMPNET_TRAIN)
        log.info("training %s", out.name)
        train_oampnet(cfg, snr_db, out)
    return out


def ensure_small_ml_oampnet(snr_db: float = 30.0, root: Path = ARTIFACTS) -> Path:
    out = small_ml_oampnet_path(snr_db, root)
    if not out.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
        cfg = RunConfig(**{**OAMPNET_TRAIN, **SMALL_ML, "epochs": 2000, "gradient": gradient_method()})
        log.info("training %s", out.name)
        train_oampnet(cfg, snr_db, out)
    return out


def ensure_all(root: Path = ARTIFACTS) -> list[Path]:
    """Every artifact the acceptance suite reads."""
    paths = [ensure_cenet(p, float(s), root) for p in ("continuous", "comb") for s in range(5, 45, 5)]
    paths += [ensure_oampnet("qam16", L, 25.0, root) for L in (1, 3, 5)]
    paths += [ensure_oampnet("qam16", 5, 40.0, root), ensure_oampnet("qam64", 5, 40.0, root)]
    paths.append(ensure_small_ml_oampnet(30.0, root))
    return paths
