#!/usr/bin/env python3
"""Direct evaluation of the demo query over the demo catalog.

Prints the matching provider ids, one per line, sorted. Independent of the
compiled pipeline: it reads the CSV and applies the comparisons itself.
"""

import csv
import sys
from pathlib import Path

QUERY = "patient_centered >= 100 & clinical_standards >= 60 & tied_up_with_insurance"


def matches(row):
    return (
        int(row["patient_centered"]) >= 100
        and int(row["clinical_standards"]) >= 60
        and int(row["tied_up_with_insurance"]) == 1
    )


def main():
    path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).with_name("demo_catalog.csv")
    with path.open(newline="") as f:
        ids = sorted(row["provider_id"] for row in csv.DictReader(f) if matches(row))
    for i in ids:
        print(i)


if __name__ == "__main__":
    main()
