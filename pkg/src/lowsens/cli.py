"""Command-line entry point: ``lowsens <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attention import load_params, save_params
from .boolean import (BUILTINS, BooleanFunction, average_sensitivity, degree, fourier_transform, huang_bound_holds,
                      max_sensitivity, normalized_sensitivity)
from .config import ExperimentConfig, emit_csv, parse_config
from .errors import ConfigError, NumericError
from .interventions import AugmentSpec, RegSpec, SharpnessSpec, sharpness
from .kernels import compose_ck, compose_ntk, gram_eigencheck, parse_layers, spectrum, verify_weak_spectral_bias
from .presets import PRESETS, make_datasets, run_preset, train_variant
from .sensitivity import CorruptionSpec, measure_sensitivity
from .synthetic import KINDS, SyntheticParams, generate_dataset, read_dataset, write_dataset
from .training import DiagnosticsRecord

log = logging.getLogger("lowsens")


def _pair(text: str, names: tuple, types: tuple):
    parts = text.split(",")
    if len(parts) != len(names):
        raise argparse.ArgumentTypeError(f"expected {','.join(names)}, got {text!r}")
    try:
        return tuple(t(p) for t, p in zip(types, parts))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number in {text!r}") from None


def _load_config(args) -> ExperimentConfig | None:
    return parse_config(args.config) if args.config else None


def _out(args, name: str) -> Path:
    return Path(args.out_dir) / name


# subcommands --------------------------------------------------------------------

def _read_table(path) -> BooleanFunction:
    values = [float(v) for v in Path(path).read_text(encoding="utf-8").split()]
    d = len(values).bit_length() - 1
    if len(values) < 1 or 1 << d != len(values):
        raise ConfigError(f"{path}: truth table length {len(values)} is not a power of two")
    return BooleanFunction(d, values)


def cmd_fourier(args) -> int:
    if args.table:
        f = _read_table(args.table)
    else:
        f = BUILTINS[args.function](args.d)
    path = Path(args.out) if args.out else _out(args, f"fourier_{args.report}.csv")
    if args.report == "coeffs":
        c = fourier_transform(f)
        rows = [{"subset_mask": mask, "coefficient": float(v)} for mask, v in enumerate(c.coeffs)]
        emit_csv(rows, path, ["subset_mask", "coefficient"])
    else:
        metrics = {
            "sensitivity": [("average_sensitivity", average_sensitivity(f)),
                            ("normalized_sensitivity", normalized_sensitivity(f)),
                            ("max_sensitivity", max_sensitivity(f))],
            "degree": [("degree", degree(f))],
            "huang": [("degree", degree(f)), ("max_sensitivity", max_sensitivity(f)),
                      ("bound_holds", huang_bound_holds(f))],
        }[args.report]
        emit_csv([{"metric": k, "value": v} for k, v in metrics], path, ["metric", "value"])
    print(f"d={f.d} degree={degree(f)} avg_sensitivity={average_sensitivity(f):.6g} "
          f"max_sensitivity={max_sensitivity(f)} -> {path}")
    return 0


def cmd_spectra(args) -> int:
    layers = parse_layers(args.layers)
    psi = compose_ck(layers) if args.kernel == "ck" else compose_ntk(layers)
    s = spectrum(psi, args.d)
    rows = [{"k": k, "mu_k": mu} for k, mu in enumerate(s.mu)]
    path = Path(args.out) if args.out else _out(args, "spectrum.csv")
    emit_csv(rows, path, ["k", "mu_k"])
    verdict = [f"{args.kernel} {','.join(layers)} d={args.d} -> {path}"]
    if args.check_ordering:
        ok, where = verify_weak_spectral_bias(s)
        verdict.append(f"ordering: {'ok' if ok else f'violated at degrees {where}'}")
    if args.gram_check:
        verdict.append(f"gram residual: {gram_eigencheck(psi, args.d):.3g}")
    print("; ".join(verdict))
    return 0


def _synthetic_from(args, cfg: ExperimentConfig | None) -> SyntheticParams:
    given = [getattr(args, k) for k in ("T", "m", "n_s", "n_f", "n_d")]
    if all(v is not None for v in given):
        return SyntheticParams(*given, M=args.M).validate()
    if cfg is not None and cfg.synthetic is not None:
        return cfg.synthetic
    raise ConfigError("synthetic parameters needed: pass --T --m --n-s --n-f --n-d or a config with a 'synthetic' block")


def cmd_synth_gen(args) -> int:
    p = _synthetic_from(args, _load_config(args))
    data = generate_dataset(p, args.n, args.kind, args.seed)
    path = Path(args.out) if args.out else _out(args, f"{args.kind}.tsv")
    path.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(data, path)
    print(f"{len(data)} {args.kind} sequences -> {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args) or ExperimentConfig()
    if args.preset:
        from .presets import preset_config
        cfg = preset_config(args.preset, cfg if args.config else None)
    p = _synthetic_from(args, cfg)
    tcfg = dataclasses.replace(cfg.train, seed=args.seed)
    if args.epochs is not None:
        tcfg = dataclasses.replace(tcfg, epochs=args.epochs)
    if args.lr is not None:
        tcfg = dataclasses.replace(tcfg, lr=args.lr)
    variant, augment, reg = "vanilla", cfg.augment, cfg.reg
    if args.augment and args.reg:
        raise ConfigError("--augment and --reg are mutually exclusive")
    if args.augment:
        variant, augment = "aug", AugmentSpec(variance=args.augment[0], copies=args.augment[1])
    elif args.reg:
        variant, reg = "reg", RegSpec(strength=args.reg[0], variance=args.reg[1])
    data = make_datasets(p, cfg.data, args.seed)
    theta, records = train_variant(data["train"], tcfg, variant, augment, reg,
                                   data["test_id"], data["test_ood"], diagnose=True)
    diag = Path(args.out_diagnostics) if args.out_diagnostics else _out(args, "diagnostics.csv")
    emit_csv(records, diag, DiagnosticsRecord.columns())
    outputs = {"diagnostics": str(diag)}
    if args.save_params:
        Path(args.save_params).parent.mkdir(parents=True, exist_ok=True)
        save_params(theta, args.save_params)
        outputs["params"] = args.save_params
    if args.save_data:
        write_dataset(data["train"], args.save_data)
        outputs["train_data"] = args.save_data
    last = records[-1]
    print(f"epoch {last.epoch}: train {last.train_acc:.3f} id {last.test_id_acc:.3f} ood {last.test_ood_acc:.3f} "
          f"sens {last.sensitivity:.4g} -> {diag}")
    return 0


def cmd_sensitivity(args) -> int:
    theta = load_params(args.model_params)
    data = read_dataset(args.data)
    kind = {"token": "token_uniform", "gauss": "gaussian_noise"}[args.kind]
    spec = CorruptionSpec(kind, sigma2=args.sigma2 if kind == "gaussian_noise" else None,
                          repeats=args.repeats, seed=args.seed)
    rep = measure_sensitivity(theta, data, spec)
    rows = [{"position": str(t), "sensitivity": float(v), "stderr": float(e)}
            for t, (v, e) in enumerate(zip(rep.per_position, rep.stderr))]
    rows.append({"position": "mean", "sensitivity": rep.normalized, "stderr": rep.normalized_stderr})
    path = Path(args.out) if args.out else _out(args, "sensitivity.csv")
    emit_csv(rows, path, ["position", "sensitivity", "stderr"])
    print(f"normalized sensitivity {rep.normalized:.6g} +- {rep.normalized_stderr:.2g} -> {path}")
    return 0


def cmd_sharpness(args) -> int:
    theta = load_params(args.model_params)
    data = read_dataset(args.data)
    res = sharpness(theta, data, SharpnessSpec(sigma=args.sigma, repeats=args.repeats), args.seed)
    path = Path(args.out) if args.out else _out(args, "sharpness.csv")
    emit_csv([res], path, ["sh_op", "sh_pred"])
    print(f"ShOp {res['sh_op']:.6g} ShPred {res['sh_pred']:.6g} -> {path}")
    return 0


def cmd_preset(args) -> int:
    cfg = _load_config(args)
    name = args.name or (cfg.preset if cfg else None)
    if not name:
        raise ConfigError("preset name required (positional or 'preset' key in --config)")
    m = run_preset(name, args.out_dir, args.seed, cfg)
    print(json.dumps(dataclasses.asdict(m), indent=2, sort_keys=True))
    return 0


# parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def globals_parser(suppress: bool):
        # subcommands repeat the global flags; SUPPRESS keeps their defaults from
        # overwriting values given before the subcommand name
        g = argparse.ArgumentParser(add_help=False)
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g.add_argument("--seed", type=int, default=dflt(0))
        g.add_argument("--out-dir", default=dflt("runs"))
        g.add_argument("--config", default=dflt(None), help="JSON experiment config")
        return g

    common = globals_parser(suppress=True)
    ap = argparse.ArgumentParser(prog="lowsens", description=__doc__.splitlines()[0],
                                 parents=[globals_parser(suppress=False)])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fourier", parents=[common], help="Fourier coefficients of a Boolean function")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--function", choices=sorted(BUILTINS))
    g.add_argument("--table", help="file of 2^d whitespace-separated values; bit j of the index is x_(j+1), set = +1")
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--report", choices=("coeffs", "sensitivity", "degree", "huang"), default="coeffs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fourier)

    p = sub.add_parser("spectra", parents=[common], help="eigenvalues mu_k of a dot-product kernel on the cube")
    p.add_argument("--layers", required=True, help="comma-separated stack, e.g. relu,attn,erf")
    p.add_argument("--kernel", choices=("ck", "ntk"), default="ck")
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--check-ordering", action="store_true")
    p.add_argument("--gram-check", action="store_true", help="eigenfunction residual of the 2^d Gram matrix (d <= 12)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectra)

    def synth_args(p):
        p.add_argument("--T", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--ns", "--n-s", dest="n_s", type=int)
        p.add_argument("--nf", "--n-f", dest="n_f", type=int)
        p.add_argument("--nd", "--n-d", dest="n_d", type=int)
        p.add_argument("--M", type=int)

    p = sub.add_parser("synth-gen", parents=[common], help="generate a synthetic token dataset")
    synth_args(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--kind", choices=KINDS, default="train")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("train", parents=[common], help="train the attention model")
    synth_args(p)
    p.add_argument("--preset", choices=sorted(k for k in PRESETS if PRESETS[k]().synthetic is not None))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--augment", type=lambda s: _pair(s, ("sigma2", "copies"), (float, int)),
                   metavar="SIGMA2,COPIES")
    p.add_argument("--reg", type=lambda s: _pair(s, ("lambda", "sigma2"), (float, float)),
                   metavar="LAMBDA,SIGMA2")
    p.add_argument("--out-diagnostics")
    p.add_argument("--save-params", help=".npz file with W_Q, W_K, W_V, U and activation")
    p.add_argument("--save-data", help="also write the training set in text form")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sensitivity", parents=[common], help="measure sensitivity of saved parameters")
    p.add_argument("--model-params", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=("token", "gauss"), default="token")
    p.add_argument("--sigma2", type=float)
    p.add_argument("--repeats", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("sharpness", parents=[common], help="ShOp / ShPred of saved parameters")
    p.add_argument("--model-params", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sigma", type=float, default=SharpnessSpec.sigma)
    p.add_argument("--repeats", type=int, default=SharpnessSpec.repeats)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sharpness)

    p = sub.add_parser("preset", parents=[common], help="run a named experiment preset")
    p.add_argument("name", nargs="?", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_preset)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:       # argparse usage errors are configuration errors
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
