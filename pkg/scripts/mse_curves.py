"""Channel-estimate MSE against SNR for LS, LMMSE and matched-SNR CE-NET.

    python scripts/mse_curves.py [--pilots continuous comb] [--out-dir results]

Writes one CSV (and x/y plot-data files) per pilot arrangement and estimator.
"""

import argparse
import logging
from pathlib import Path

from cpfree_ofdm.harness import recipes
from cpfree_ofdm.harness.report import emit_report
from cpfree_ofdm.harness.sweep import run_sweep

GRID = [float(s) for s in range(5, 45, 5)]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--pilots", nargs="+", default=["continuous", "comb"])
    p.add_argument("--out-dir", default="results")
    p.add_argument("--bits", type=int, default=200_000, help="data bits simulated per SNR point")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    for pilots in args.pilots:
        for snr in GRID:
            recipes.ensure_cenet(pilots, snr)
        for chain in ("ls_oamp", "lmmse_oamp", "cenet_oamp"):
            cfg = recipes.link_config(chain=chain, pilots=pilots, layers=5, snr_db=GRID, min_errors=1,
                                      min_bits=args.bits, max_bits=args.bits,
                                      cenet_params=recipes.cenet_template(pilots))
            records = run_sweep(cfg)
            print(pilots, chain, " ".join(f"{r.mse:.2e}" for r in records))
            emit_report(records, Path(args.out_dir) / f"mse_{pilots}_{chain.split('_')[0]}.csv")


if __name__ == "__main__":
    main()
