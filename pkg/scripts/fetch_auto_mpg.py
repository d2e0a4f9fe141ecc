#!/usr/bin/env python3
"""Download the UCI Auto MPG data and write src/e2tree/data/auto_mpg.csv.

The six cars with unknown horsepower are dropped (392 rows remain). Pass
``--source FILE`` to convert a local copy instead: either the raw
``auto-mpg.data`` file or a CSV with a header (e.g. ISLR's ``Auto``, whose
``year`` column is taken as ``model_year``).
"""

from __future__ import annotations

import argparse
import csv
import io
import shlex
import sys
import urllib.request
from pathlib import Path

URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/auto-mpg/auto-mpg.data"
COLUMNS = ["mpg", "cylinders", "displacement", "horsepower", "weight", "acceleration", "model_year", "origin"]
DEST = Path(__file__).resolve().parents[1] / "src" / "e2tree" / "data" / "auto_mpg.csv"


def parse(text: str) -> list[list[str]]:
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        fields = shlex.split(line)  # car name is double-quoted
        values = fields[: len(COLUMNS)]
        if "?" in values:
            continue
        rows.append(values)
    return rows


def parse_csv(text: str) -> list[list[str]]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rec = {k.strip().strip('"'): v.strip() for k, v in rec.items() if k is not None}
        if "model_year" not in rec and "year" in rec:
            rec["model_year"] = rec["year"]
        values = [rec[c] for c in COLUMNS]
        if "?" in values or "NA" in values or "" in values:
            continue
        rows.append(values)
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--source", help="local auto-mpg.data file")
    ap.add_argument("--dest", default=str(DEST))
    args = ap.parse_args(argv)
    if args.source:
        text = Path(args.source).read_text()
    else:
        try:
            with urllib.request.urlopen(URL, timeout=60) as resp:
                text = resp.read().decode("utf-8")
        except OSError as e:
            print(f"download failed: {e}", file=sys.stderr)
            return 2
    first = text.split("\n", 1)[0]
    rows = parse_csv(text) if "mpg" in first and "," in first else parse(text)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    w.writerows(rows)
    Path(args.dest).write_text(buf.getvalue())
    print(f"wrote {len(rows)} rows to {args.dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
