"""Train the attention model on both fig2 presets and summarize the final epoch per seed."""

import argparse

from lowsens.config import read_csv
from lowsens.presets import run_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--case", choices=("1", "2", "both"), default="both")
    args = ap.parse_args()
    names = {"1": ["fig2-case1"], "2": ["fig2-case2"], "both": ["fig2-case1", "fig2-case2"]}[args.case]
    print("preset      seed  train  test_id  test_ood  align_sp  align_freq  sens     secs")
    for name in names:
        for seed in args.seeds:
            m = run_preset(name, args.out_dir, seed)
            r = read_csv(m.outputs["diagnostics"])[-1]
            print(f"{name}  {seed:4d}  {r['train_acc']:.3f}  {r['test_id_acc']:.3f}    {r['test_ood_acc']:.3f}     "
                  f"{r['align_sp']:+.3f}    {r['align_freq']:+.3f}      {r['sensitivity']:.4f}  {m.wall_clock_seconds:.0f}")


if __name__ == "__main__":
    main()
