"""Vanilla vs regularized vs augmented training: sensitivity and sharpness per seed."""

import argparse

from lowsens.config import read_csv
from lowsens.presets import run_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs")
    args = ap.parse_args()
    m = run_preset("sharpness-compare", args.out_dir)
    print("seed variant  train  S_token  S_gauss  ShOp     ShPred")
    for r in read_csv(m.outputs["sharpness"]):
        print(f"{int(r['seed']):4d} {r['variant']:7s}  {r['train_acc']:.3f}  {r['sensitivity']:.4f}   "
              f"{r['sensitivity_gauss']:.4f}   {r['sh_op']:.4f}   {r['sh_pred']:.4f}")
    print(f"{m.wall_clock_seconds:.0f}s -> {m.outputs['sharpness']}")


if __name__ == "__main__":
    main()
