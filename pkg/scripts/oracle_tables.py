"""Exact sensitivities of the sparse and frequent rule predictors for the table1/table2 oracle settings.

Two semantics are listed: the default one (ties predict +1, vocabulary 2m+2+7)
and the fitted one (ties abstain, vocabulary size chosen per setting).
"""

import argparse

from lowsens.presets import TABLE1, TABLE2, oracle_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--table", choices=("1", "2"), default="2")
    ap.add_argument("--semantics", choices=("default", "fitted", "both"), default="both")
    args = ap.parse_args()
    rows = oracle_rows(TABLE1 if args.table == "1" else TABLE2, args.semantics)
    print(f"{'setting':14s} {'M':>3s} {'tie':5s} {'rule':18s} {'exact':>8s} {'published':>9s}")
    for r in rows:
        print(f"{r['setting']:14s} {r['M']:3d} {r['tie']:5s} {r['rule']:18s} {r['sensitivity']:8.4f} {r['paper_value']:9.4f}")


if __name__ == "__main__":
    main()
