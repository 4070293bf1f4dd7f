"""Flat ``key = value`` run configuration shared by every CLI subcommand.

Lists are comma separated, ``#`` starts a comment. Every key can also be given
on the command line as ``--key value`` (underscores may be written as dashes),
and the flag wins over the file.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

CHAINS = ("ls_ofdm", "lmmse_ofdm", "ls_oamp", "lmmse_oamp", "cenet_oamp", "ai_receiver", "lowbound_cp")

# keys that never change simulated output
_NON_SEMANTIC = {"workers", "output", "timing"}


@dataclass
class RunConfig:
    # link
    channel: str = "urban16"
    urban_decay: float = 4.0
    exp_taps: int = 8
    exp_decay: float = 2.0
    subcarriers: int = 64
    modulation: str = "qam16"
    pilots: str = "continuous"
    blocks_per_frame: int = 4
    taps_max: int = 0  # 0: the channel model's own length
    cyclic_prefix: bool = False
    # receiver
    chain: str = "ai_receiver"
    csi: str = "estimated"
    layers: int = 10
    beta: float = 0.5
    eps: float = 1e-9
    noise_convention: str = "verbatim"
    cenet_params: str = ""
    oampnet_params: str = ""
    cov_samples: int = 10000
    # sweep
    snr_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0])
    min_errors: int = 1000
    min_bits: int = 100000
    max_bits: int = 10_000_000
    chunk_frames: int = 64
    seed: int = 1
    workers: int = 1
    timing: bool = False
    output: str = "results/sweep.csv"
    # training
    train_count: int = 100000
    val_count: int = 10000
    epochs: int = 50
    batch_size: int = 50
    lr: float = 0.001
    eval_every: int = 10
    train_csi: str = "perfect"
    gradient: str = "fd"
    # non-empty: one network trained on samples spread evenly over these SNRs
    train_snr_db: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.snr_db:
            raise ValueError("snr_db must not be empty")
        if self.chain not in CHAINS:
            raise ValueError(f"chain must be one of {CHAINS}, got {self.chain!r}")
        if self.csi not in ("estimated", "perfect"):
            raise ValueError("csi must be 'estimated' or 'perfect'")
        if self.train_csi not in ("perfect", "estimated"):
            raise ValueError("train_csi must be 'perfect' or 'estimated'")
        if min(self.min_errors, self.max_bits, self.chunk_frames) <= 0:
            raise ValueError("budgets must be positive")

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def canonical(self) -> str:
        items = []
        for f in fields(self):
            if f.name in _NON_SEMANTIC:
                continue
            items.append(f"{f.name}={format_value(getattr(self, f.name))}")
        return ";".join(items)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]

    def dump(self) -> str:
        return "\n".join(f"{f.name} = {format_value(getattr(self, f.name))}" for f in fields(self)) + "\n"


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _field_kind(f: dataclasses.Field) -> str:
    t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    return t.replace(" ", "")


def parse_value(f: dataclasses.Field, text: str):
    kind = _field_kind(f)
    text = text.strip()
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{f.name}: not a boolean: {text!r}")
    if kind == "int":
        return int(float(text)) if "e" in text.lower() else int(text)
    if kind == "float":
        return float(text)
    if kind.startswith("list"):
        return [float(x) for x in text.split(",") if x.strip()]
    return text


_FIELDS = {f.name: f for f in fields(RunConfig)}


def from_mapping(values: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    kw = {}
    for key, text in values.items():
        name = key.strip().replace("-", "_")
        if name not in _FIELDS:
            raise KeyError(f"unknown config key {key!r}")
        kw[name] = parse_value(_FIELDS[name], text)
    return dataclasses.replace(base or RunConfig(), **kw)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    parser.read_string("[run]\n" + Path(path).read_text())
    return from_mapping(dict(parser["run"]), base)


def add_config_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    group = p.add_argument_group("configuration keys (override the file)")
    for f in fields(RunConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar=_field_kind(f).upper())


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {name[4:]: v for name, v in vars(args).items() if name.startswith("cfg_") and v is not None}
    return from_mapping(overrides, cfg)
