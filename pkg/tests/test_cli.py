import json
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lowsens.cli import main
from lowsens.config import (RunManifest, config_from_dict, config_hash, csv_text, emit_csv,
                            parse_config, read_csv)
from lowsens.errors import ConfigError
from lowsens.presets import PRESETS, preset_config, run_preset
from lowsens.training import DiagnosticsRecord

SMALL_SYNTH = {"T": 8, "m": 4, "n_s": 1, "n_f": 3, "n_d": 1}
SMALL_RUN = {"synthetic": SMALL_SYNTH, "data": {"n_train": 60, "n_test": 30},
             "train": {"epochs": 2, "lr": 0.5, "init_scale": 0.1, "sens_examples": 10}}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


# configuration -------------------------------------------------------------------

def test_unknown_key_is_named(tmp_path):
    with pytest.raises(ConfigError, match="foo"):
        parse_config(write_json(tmp_path / "c.json", {"synthetic": SMALL_SYNTH, "foo": 1}))
    with pytest.raises(ConfigError, match="foo"):
        config_from_dict({"synthetic": dict(SMALL_SYNTH, foo=2)})


def test_empty_config_names_missing_block(tmp_path):
    (tmp_path / "c.json").write_text("")
    with pytest.raises(ConfigError, match="synthetic"):
        parse_config(tmp_path / "c.json")
    with pytest.raises(ConfigError, match="synthetic"):
        config_from_dict({})


def test_malformed_json_reports_position(tmp_path):
    (tmp_path / "c.json").write_text('{\n  "synthetic": {"T": 8,,}\n}')
    with pytest.raises(ConfigError, match=r"c\.json:2:\d+"):
        parse_config(tmp_path / "c.json")


def test_invalid_synthetic_block_rejected():
    with pytest.raises(ConfigError, match="n_s < n_f"):
        config_from_dict({"synthetic": dict(SMALL_SYNTH, n_s=3)})


def test_config_blocks_are_built(tmp_path):
    cfg = parse_config(write_json(tmp_path / "c.json", dict(SMALL_RUN, reg={"strength": 0.5}, seeds=[1, 2])))
    assert cfg.synthetic.T == 8 and cfg.train.epochs == 2 and cfg.reg.strength == 0.5 and cfg.seeds == (1, 2)
    assert cfg.augment is None and cfg.data.n_train == 60


@settings(max_examples=30)
@given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers() | st.floats(allow_nan=False, allow_infinity=False) | st.text(max_size=5),
                       max_size=6), st.randoms())
def test_hash_stable_under_key_reordering(d, rnd):
    items = list(d.items())
    rnd.shuffle(items)
    assert config_hash(d) == config_hash(dict(items))
    assert config_hash({"outer": d}) == config_hash({"outer": dict(items)})


def test_hash_rejects_non_finite():
    with pytest.raises(ValueError):
        config_hash({"lr": float("inf")})


def test_config_hash_tracks_content():
    a = config_from_dict(SMALL_RUN)
    b = config_from_dict(json.loads(json.dumps(SMALL_RUN)))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != config_from_dict(dict(SMALL_RUN, seed=1)).config_hash()


# CSV / manifest -------------------------------------------------------------------

@settings(max_examples=50)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=10))
def test_csv_round_trip_full_precision(values):
    with tempfile.TemporaryDirectory() as tmp:
        path = emit_csv([{"i": i, "x": v} for i, v in enumerate(values)], Path(tmp) / "o.csv", ["i", "x"])
        back = [r["x"] for r in read_csv(path)]
    assert back == values
    assert all(float(f"{b:.17g}") == v for b, v in zip(back, values))


def test_csv_format():
    text = csv_text([{"a": 1.5, "b": True, "c": np.float64(0.1)}], ["a", "b", "c"])
    assert text == "a,b,c\n1.5,1,0.1\n"
    with pytest.raises(ConfigError):
        csv_text([{"a": 1}], ["a", "b"])


def test_manifest_written(tmp_path):
    m = RunManifest("abc", 3, {"x": "y.csv"}, 1.25)
    data = json.loads(m.write(tmp_path / "manifest.json").read_text())
    assert data == {"config_hash": "abc", "seed": 3, "outputs": {"x": "y.csv"}, "wall_clock_seconds": 1.25,
                    "version": m.version}


# presets ---------------------------------------------------------------------------

def test_preset_names():
    assert set(PRESETS) == {"fig2-case1", "fig2-case2", "table1-oracle", "table2-oracle", "spectra-demo",
                            "sharpness-compare"}
    with pytest.raises(ConfigError, match="unknown preset"):
        run_preset("fig3")


def test_table1_oracle_preset(tmp_path):
    m = run_preset("table1-oracle", tmp_path)
    rows = read_csv(m.outputs["oracle"])
    default = [r for r in rows if r["tie"] == "plus"]
    assert {(r["setting"], r["rule"]) for r in default} == {
        (s, k) for s in ("(3,5,1,16)", "(1,17,7,20)") for k in ("sparse_rule", "frequent_majority")}
    again = run_preset("table1-oracle", tmp_path / "again")
    assert again.config_hash == m.config_hash
    assert open(again.outputs["oracle"], "rb").read() == open(m.outputs["oracle"], "rb").read()


def test_fig2_schema_with_small_override(tmp_path):
    over = config_from_dict(dict(SMALL_RUN, preset="fig2-case1"))
    m = run_preset("fig2-case1", tmp_path, overrides=over)
    header = open(m.outputs["diagnostics"]).readline().strip().split(",")
    assert header == ["epoch", "train_acc", "test_id_acc", "test_ood_acc", "align_sp", "align_freq", "align_irrel",
                      "mass_sp", "mass_freq", "mass_irrel", "sensitivity"]
    assert header == DiagnosticsRecord.columns()
    assert len(read_csv(m.outputs["diagnostics"])) == 3
    assert json.loads((tmp_path / "fig2-case1" / "seed0" / "manifest.json").read_text())["config_hash"] == m.config_hash


def test_preset_override_keeps_other_blocks():
    base = preset_config("fig2-case1")
    over = preset_config("fig2-case1", config_from_dict({"preset": "fig2-case1", "data": {"n_train": 10, "n_test": 5}}))
    assert over.data.n_train == 10 and over.train == base.train and over.synthetic == base.synthetic


def test_unwritable_out_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError):
        run_preset("table1-oracle", blocker / "sub")


# command line ------------------------------------------------------------------------

def test_cli_fourier(tmp_path, capsys):
    out = tmp_path / "f.csv"
    assert main(["--seed", "3", "fourier", "--function", "majority", "--d", "3", "--out", str(out)]) == 0
    coeffs = {int(r["subset_mask"]): r["coefficient"] for r in read_csv(out)}
    assert coeffs == {0: 0.0, 1: 0.5, 2: 0.5, 3: 0.0, 4: 0.5, 5: 0.0, 6: 0.0, 7: -0.5}
    table = tmp_path / "t.txt"
    table.write_text("1 -1 -1 1")
    assert main(["fourier", "--table", str(table), "--report", "huang", "--out", str(out)]) == 0
    assert {r["metric"]: r["value"] for r in read_csv(out)} == {"degree": 2.0, "max_sensitivity": 2.0,
                                                                "bound_holds": 1.0}
    table.write_text("1 -1 1")
    assert main(["fourier", "--table", str(table), "--out", str(out)]) == 2


def test_cli_spectra(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["spectra", "--layers", "relu,attn", "--kernel", "ntk", "--d", "8", "--check-ordering",
                 "--gram-check", "--out", str(out)]) == 0
    assert "ordering: ok" in capsys.readouterr().out
    assert len(read_csv(out)) == 9
    assert main(["spectra", "--layers", "tanh"]) == 2


def test_cli_pipeline(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", SMALL_RUN)
    params, data = tmp_path / "p.npz", tmp_path / "train.tsv"
    rc = main(["--config", cfg, "--out-dir", str(tmp_path), "train", "--save-params", str(params),
               "--save-data", str(data)])
    assert rc == 0
    assert len(read_csv(tmp_path / "diagnostics.csv")) == 3
    assert main(["--out-dir", str(tmp_path), "sensitivity", "--model-params", str(params), "--data", str(data),
                 "--kind", "gauss", "--sigma2", "0.5", "--repeats", "2"]) == 0
    rows = read_csv(tmp_path / "sensitivity.csv")
    assert len(rows) == 9 and rows[-1]["position"] == "mean"
    assert main(["--out-dir", str(tmp_path), "sharpness", "--model-params", str(params), "--data", str(data)]) == 0
    assert set(read_csv(tmp_path / "sharpness.csv")[0]) == {"sh_op", "sh_pred"}
    assert main(["--out-dir", str(tmp_path), "train", "--config", cfg, "--reg", "0.25,1", "--augment", "0.1,1"]) == 2
    assert main(["--out-dir", str(tmp_path), "train", "--config", cfg, "--reg", "0.25"]) == 2


def test_cli_synth_gen(tmp_path):
    out = tmp_path / "d.tsv"
    assert main(["--seed", "4", "synth-gen", "--T", "8", "--m", "4", "--ns", "1", "--nf", "3", "--nd", "1",
                 "--n", "5", "--kind", "test_ood", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3 + 5
    assert main(["synth-gen", "--T", "8", "--m", "2", "--ns", "1", "--nf", "3", "--nd", "1", "--out", str(out)]) == 2


def test_cli_exit_codes(tmp_path):
    assert main(["--version"]) == 0
    assert main(["no-such-command"]) == 2
    assert main(["--config", str(tmp_path / "missing.json"), "preset"]) == 2
    bad = write_json(tmp_path / "bad.json", {"synthetic": SMALL_SYNTH, "foo": 1})
    assert main(["--config", bad, "preset", "table1-oracle"]) == 2
    diverge = write_json(tmp_path / "div.json", dict(SMALL_RUN, train={"epochs": 3, "lr": 1e300, "init_scale": 1.0,
                                                                       "activation": "relu"}))
    with np.errstate(all="ignore"):
        assert main(["--config", diverge, "--out-dir", str(tmp_path), "train"]) == 3


def test_cli_preset_from_config(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"preset": "table1-oracle"})
    assert main(["--config", cfg, "--out-dir", str(tmp_path), "preset"]) == 0
    manifest = json.loads(capsys.readouterr().out)
    assert set(manifest) == {"config_hash", "seed", "outputs", "wall_clock_seconds", "version"}
    assert (tmp_path / "table1-oracle" / "seed0" / "oracle.csv").exists()
