"""Eigenvalue profiles mu_k of CK/NTK kernels on the cube and the even/odd ordering check."""

import argparse
import itertools

from lowsens.kernels import compose_ck, compose_ntk, parse_layers, spectrum, verify_weak_spectral_bias

KINDS = ("identity", "relu", "erf", "attn")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--layers", help="one stack, e.g. relu,attn; omitted: sweep every stack up to --depth")
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--d", type=int, nargs="+", default=[8, 16, 24])
    args = ap.parse_args()
    if args.layers:
        stack = parse_layers(args.layers)
        for name, psi in (("ck", compose_ck(stack)), ("ntk", compose_ntk(stack))):
            for d in args.d:
                s = spectrum(psi, d)
                ok, where = verify_weak_spectral_bias(s)
                print(f"{name} d={d} ordered={ok}" + (f" at {where}" if where else ""))
                print("  " + " ".join(f"{mu:.3e}" for mu in s.mu))
        return
    total = bad = 0
    for depth in range(1, args.depth + 1):
        for stack in itertools.product(KINDS, repeat=depth):
            for psi in (compose_ck(stack), compose_ntk(stack)):
                for d in args.d:
                    total += 1
                    if not verify_weak_spectral_bias(spectrum(psi, d))[0]:
                        bad += 1
                        print("unordered:", ",".join(stack), d)
    print(f"{total} spectra checked, {bad} unordered")


if __name__ == "__main__":
    main()
