#!/usr/bin/env python3
"""Render table CSVs written by `bbmmi table` as markdown.

Usage: python3 scripts/tables.py table1.csv [table2.csv ...]
"""

import csv
import sys

ALGORITHMS = {"nmin-nmax": "Nmin-Nmax", "fv": "Fleming-Viot"}


def fmt(value, digits):
    try:
        return f"{float(value):.{digits}f}"
    except ValueError:
        return value


def render(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        return f"{path}: no rows\n"
    out = [f"### {path} (N = {rows[0]['N']}, {rows[0]['replicas']} replicas)", ""]
    out.append("| M | algorithm | bias | std | events / unit time |")
    out.append("|---|---|---|---|---|")
    for r in rows:
        out.append(
            "| {} | {} | {} | {} | {} |".format(
                r["M"],
                ALGORITHMS.get(r["algorithm"], r["algorithm"]),
                fmt(r["bias"], 2),
                fmt(r["std"], 2),
                fmt(r["event_rate"], 1),
            )
        )
    return "\n".join(out) + "\n"


def main(argv):
    if len(argv) < 2:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    print("\n".join(render(p) for p in argv[1:]))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
