"""BER of OAMP and OAMP-NET against the number of layers (16-QAM, urban16, CE-NET CSI).

    python scripts/layer_study.py [--snr 25 40] [--layers 1 3 5] [--out results/layers.csv]

Uses the trained files in artifacts/ and trains any that are missing.
"""

import argparse
import logging

from cpfree_ofdm.harness import recipes
from cpfree_ofdm.harness.report import emit_report
from cpfree_ofdm.harness.sweep import run_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--snr", type=float, nargs="+", default=[25.0])
    p.add_argument("--layers", type=int, nargs="+", default=[1, 3, 5])
    p.add_argument("--out", default="results/layers.csv")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    records = []
    print(f"{'snr':>5} {'L':>3} {'OAMP':>10} {'OAMP-NET':>10}")
    for snr in args.snr:
        for L in args.layers:
            recipes.ensure_oampnet("qam16", L, snr)
            row = {}
            for chain in ("cenet_oamp", "ai_receiver"):
                cfg = recipes.link_config(chain=chain, layers=L, snr_db=[snr], workers=args.workers,
                                          cenet_params=recipes.cenet_template("continuous"),
                                          oampnet_params=recipes.oampnet_template("qam16", L))
                rec = run_sweep(cfg)[0]
                records.append(rec)
                row[chain] = rec.ber
            print(f"{snr:5g} {L:3d} {row['cenet_oamp']:10.2e} {row['ai_receiver']:10.2e}")
    for path in emit_report(records, args.out):
        print(path)


if __name__ == "__main__":
    main()
