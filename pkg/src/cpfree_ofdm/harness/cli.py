"""Command line entry point: ``python -m cpfree_ofdm <command> [--config FILE] [--key value ...]``.

Commands: ``gen``, ``train-ce``, ``train-oamp``, ``sweep``, ``report``.
Exit status is 0 only when every requested SNR point completed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from cpfree_ofdm.harness.config import add_config_arguments, config_from_args
from cpfree_ofdm.harness.datasets import KINDS, gen_dataset, train_cenet, train_oampnet
from cpfree_ofdm.harness.report import emit_report, parse_csv, write_plot_data
from cpfree_ofdm.harness.sweep import param_path, run_sweep

log = logging.getLogger("cpfree_ofdm")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpfree_ofdm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a training dataset (.npz)")
    g.add_argument("--kind", choices=KINDS, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--dataset-seed", type=int, default=0)
    g.add_argument("--snr", type=float, help="SNR in dB (default: first snr_db entry)")

    for name, what in (("train-ce", "CE-NET"), ("train-oamp", "OAMP-NET")):
        t = sub.add_parser(name, help=f"train {what} at each SNR of snr_db (or once over train_snr_db)")
        t.add_argument("--out", required=True, help="parameter file path; '{snr}' expands per SNR point")
        t.add_argument("--dataset", help="npz from 'gen' (otherwise generated in memory)")

    sub.add_parser("sweep", help="BER/MSE sweep over snr_db, written to 'output'")

    r = sub.add_parser("report", help="regenerate plot data from a sweep CSV")
    r.add_argument("csv")

    for sp in sub.choices.values():
        add_config_arguments(sp)
    return p


def _train(args, cfg, fn) -> int:
    if cfg.train_snr_db:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        fn(cfg, None, out, args.dataset)
        print(out)
        return 0
    if len(cfg.snr_db) > 1 and "{snr}" not in args.out:
        log.error("--out must contain '{snr}' when training at several SNR points")
        return 2
    if args.dataset and len(cfg.snr_db) > 1:
        log.error("--dataset can only be used with a single SNR point")
        return 2
    for snr in cfg.snr_db:
        out = Path(param_path(args.out, snr))
        out.parent.mkdir(parents=True, exist_ok=True)
        fn(cfg, snr, out, args.dataset)
        print(out)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "gen":
            print(gen_dataset(args.kind, cfg, args.count, args.dataset_seed, args.out, args.snr))
            return 0
        if args.command == "train-ce":
            return _train(args, cfg, train_cenet)
        if args.command == "train-oamp":
            return _train(args, cfg, train_oampnet)
        if args.command == "sweep":
            records = run_sweep(cfg)
            for path in emit_report(records, cfg.output):
                print(path)
            failed = [r for r in records if r.failed]
            return 1 if failed else 0
        if args.command == "report":
            records = parse_csv(Path(args.csv).read_text())
            for path in write_plot_data(records, Path(args.csv).with_suffix("")):
                print(path)
            return 0
    except (FileNotFoundError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
