"""Train every parameter file the acceptance suite reads into artifacts/ (skips existing files).

    python scripts/train_artifacts.py [--root DIR] [-v]

Takes a few hours on one core; most of it is the five OAMP-NET runs.
"""

import argparse
import logging

from cpfree_ofdm.harness.recipes import ARTIFACTS, ensure_all


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--root", default=str(ARTIFACTS))
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    for path in ensure_all(args.root):
        print(path)


if __name__ == "__main__":
    main()
