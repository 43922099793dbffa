"""Experiment configuration: strict JSON parsing, hashing, CSV and manifest output."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .attention import TrainConfig
from .errors import ConfigError
from .interventions import AugmentSpec, RegSpec, SharpnessSpec
from .sensitivity import CorruptionSpec
from .synthetic import SyntheticParams


@dataclass(frozen=True)
class DataSpec:
    n_train: int = 1000
    n_test: int = 500

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("dataset sizes must be >= 1")


# block name -> dataclass; "synthetic" is the only block without defaults
BLOCKS = {
    "synthetic": SyntheticParams,
    "train": TrainConfig,
    "data": DataSpec,
    "corruption": CorruptionSpec,
    "augment": AugmentSpec,
    "reg": RegSpec,
    "sharpness": SharpnessSpec,
}
TOP_LEVEL = set(BLOCKS) | {"preset", "seed", "out_dir", "seeds"}
OPTIONAL_BLOCKS = ("augment", "reg")


@dataclass
class ExperimentConfig:
    synthetic: SyntheticParams | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataSpec = field(default_factory=DataSpec)
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    augment: AugmentSpec | None = None
    reg: RegSpec | None = None
    sharpness: SharpnessSpec = field(default_factory=SharpnessSpec)
    preset: str | None = None
    seed: int = 0
    seeds: tuple = (0,)
    out_dir: str = "runs"

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = dataclasses.asdict(v) if dataclasses.is_dataclass(v) else (list(v) if isinstance(v, tuple) else v)
        return out

    def config_hash(self) -> str:
        return config_hash(self.to_dict())


def config_hash(obj) -> str:
    """SHA-256 of the canonical JSON form; insensitive to key order."""
    canon = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _build_block(name: str, raw) -> object:
    cls = BLOCKS[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"block {name!r} must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in block {name!r}: {', '.join(unknown)}")
    try:
        obj = cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"block {name!r}: {exc}") from None
    return obj


def config_from_dict(raw: dict, source: str = "<config>") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    unknown = sorted(set(raw) - TOP_LEVEL)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
    if "synthetic" not in raw and "preset" not in raw:
        raise ConfigError(f"{source}: missing required block 'synthetic' (or a 'preset' name)")
    kwargs = {}
    for name in BLOCKS:
        if name in raw:
            try:
                kwargs[name] = _build_block(name, raw[name])
            except ConfigError as exc:
                raise ConfigError(f"{source}: {exc}") from None
    for key in ("preset", "seed", "out_dir"):
        if key in raw:
            kwargs[key] = raw[key]
    if "seeds" in raw:
        kwargs["seeds"] = tuple(int(s) for s in raw["seeds"])
    cfg = ExperimentConfig(**kwargs)
    if cfg.synthetic is not None:
        try:
            cfg.synthetic.validate()
        except ConfigError as exc:
            raise ConfigError(f"{source}: synthetic: {exc}") from None
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise ConfigError(f"{path}: empty config; missing required block 'synthetic'")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    return config_from_dict(raw, str(path))


# output -----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):        # includes np.float64, whose repr is not a plain number
        return repr(float(v))
    if hasattr(v, "item"):  # numpy scalars
        return _fmt(v.item())
    return str(v)


def csv_text(records, columns=None) -> str:
    rows = [r.as_dict() if hasattr(r, "as_dict") else dict(r) for r in records]
    if columns is None:
        if not rows:
            raise ConfigError("no records and no columns given")
        columns = list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for i, row in enumerate(rows):
        if set(row) != set(columns):
            raise ConfigError(f"record {i} keys {sorted(row)} do not match columns {columns}")
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_csv(records, path, columns=None) -> Path:
    atomic_write(path, csv_text(records, columns))
    return Path(path)


def read_csv(path) -> list[dict]:
    """Numeric CSV back into dicts of floats (non-numeric cells kept as strings)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
            out.append(parsed)
    return out


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    outputs: dict
    wall_clock_seconds: float
    version: str = __version__

    def write(self, path) -> Path:
        atomic_write(path, json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")
        return Path(path)
