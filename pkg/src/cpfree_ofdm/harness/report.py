"""CSV and plot-data output for sweep records."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from cpfree_ofdm.harness.sweep import MetricsRecord

HEADER = ["snr_db", "ber", "mse", "bits", "errors", "seconds", "seed", "config"]


def _num(x: float) -> str:
    return repr(float(x))


def to_csv(records: list[MetricsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow([_num(r.snr_db), _num(r.ber), _num(r.mse), r.bits, r.errors, _num(r.seconds), r.seed, r.config])
    return buf.getvalue()


def parse_csv(text: str) -> list[MetricsRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != HEADER:
        raise ValueError("unexpected CSV header")
    out = []
    for row in rows[1:]:
        snr, ber, mse, bits, errors, seconds, seed, config = row
        out.append(MetricsRecord(config, float(snr), float(ber), float(mse), int(bits), int(errors),
                                 float(seconds), int(seed)))
    return out


def write_plot_data(records: list[MetricsRecord], stem: str | Path) -> list[Path]:
    """``<stem>.ber.dat`` and ``<stem>.mse.dat`` with ``x y`` columns; points without a value are skipped."""
    stem = Path(stem)
    written = []
    for metric in ("ber", "mse"):
        pts = [(r.snr_db, getattr(r, metric)) for r in records if not math.isnan(getattr(r, metric))]
        if not pts:
            continue
        path = stem.with_name(stem.name + f".{metric}.dat")
        path.write_text("# snr_db " + metric + "\n" + "".join(f"{_num(x)} {_num(y)}\n" for x, y in pts))
        written.append(path)
    return written


def emit_report(records: list[MetricsRecord], csv_path: str | Path) -> list[Path]:
    if not records:
        raise ValueError("no records to report")
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(to_csv(records))
    return [csv_path] + write_plot_data(records, csv_path.with_suffix(""))
