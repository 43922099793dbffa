"""Sparse / frequent / irrelevant token datasets.

Token id ``j`` (0-based) is the basis vector ``e_{j+1}``:

* id 0 -> sparse token of class +1, id 1 -> sparse token of class -1
* ids 2, 4, ..., 2m   -> frequent tokens of class +1
* ids 3, 5, ..., 2m+1 -> frequent tokens of class -1
* ids 2m+2 .. M-1     -> irrelevant tokens
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

# role codes stored per position
SPARSE, FREQ_SAME, FREQ_OPP, IRRELEVANT = 0, 1, 2, 3
ROLE_LETTERS = "sfoi"
KINDS = ("train", "test_id", "test_ood")


def default_vocab_size(m: int) -> int:
    base = 2 * m + 2
    return base + math.ceil(0.2 * base)


@dataclass(frozen=True)
class SyntheticParams:
    T: int
    m: int
    n_s: int
    n_f: int
    n_d: int
    M: int | None = None
    d_tok: int | None = None

    def __post_init__(self):
        if self.M is None:
            object.__setattr__(self, "M", default_vocab_size(self.m))
        if self.d_tok is None:
            # the attention head reads the first T rows of a d_tok x d_tok matrix
            object.__setattr__(self, "d_tok", max(self.M, self.T))

    @property
    def n_same(self) -> int:
        """Frequent positions carrying a token of the label's own class."""
        return (self.n_f + self.n_d) // 2

    @property
    def n_opp(self) -> int:
        return self.n_f - self.n_same

    @property
    def n_irrel(self) -> int:
        return self.T - self.n_f - self.n_s

    def structural_problems(self) -> list[str]:
        """Violations that make generation impossible."""
        out = []
        for name in ("T", "m", "M", "d_tok"):
            if getattr(self, name) < 1:
                out.append(f"{name} >= 1")
        if min(self.n_s, self.n_f, self.n_d) < 0:
            out.append("n_s, n_f, n_d >= 0")
        if self.n_d > self.n_f:
            out.append(f"n_d <= n_f ({self.n_d} > {self.n_f})")
        if self.n_s + self.n_f > self.T:
            out.append(f"n_s + n_f <= T ({self.n_s + self.n_f} > {self.T})")
        if not 2 * self.m + 2 < self.M:
            out.append(f"2m+2 < M ({2 * self.m + 2} >= {self.M})")
        if self.d_tok < self.M:
            out.append(f"d_tok >= M ({self.d_tok} < {self.M})")
        return out

    def problems(self) -> list[str]:
        """All violated constraints, including n_s < n_f < min(m, T - n_s)."""
        out = self.structural_problems()
        if not self.n_s < self.n_f:
            out.append(f"n_s < n_f ({self.n_s} >= {self.n_f})")
        if not self.n_f < min(self.m, self.T - self.n_s):
            out.append(f"n_f < min(m, T - n_s) ({self.n_f} >= {min(self.m, self.T - self.n_s)})")
        return out

    def validate(self, strict: bool = True) -> "SyntheticParams":
        bad = self.problems() if strict else self.structural_problems()
        if bad:
            raise ConfigError("invalid synthetic parameters: " + "; ".join(bad))
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Vocabulary:
    sparse_pos: tuple
    sparse_neg: tuple
    freq_pos: tuple
    freq_neg: tuple
    irrelevant: tuple
    M: int
    d_tok: int

    def freq(self, y: int) -> tuple:
        return self.freq_pos if y > 0 else self.freq_neg

    def sparse(self, y: int) -> tuple:
        return self.sparse_pos if y > 0 else self.sparse_neg

    def basis(self, ids) -> np.ndarray:
        """Rows of e_{id+1} in R^d_tok."""
        out = np.zeros((len(ids), self.d_tok))
        out[np.arange(len(ids)), list(ids)] = 1.0
        return out


def build_vocab(p: SyntheticParams, strict: bool = True) -> Vocabulary:
    p.validate(strict)
    return Vocabulary(
        sparse_pos=(0,),
        sparse_neg=(1,),
        freq_pos=tuple(range(2, 2 * p.m + 1, 2)),
        freq_neg=tuple(range(3, 2 * p.m + 2, 2)),
        irrelevant=tuple(range(2 * p.m + 2, p.M)),
        M=p.M,
        d_tok=p.d_tok,
    )


@dataclass
class TokenSequence:
    label: int
    tokens: np.ndarray
    roles: np.ndarray


def generate_example(p: SyntheticParams, y: int, rng: np.random.Generator, ood: bool = False,
                     vocab: Vocabulary | None = None) -> TokenSequence:
    """One labeled sequence; positions of the three roles form a uniform random partition."""
    v = vocab or build_vocab(p)
    order = rng.permutation(p.T)
    roles = np.empty(p.T, dtype=np.int8)
    tokens = np.empty(p.T, dtype=np.int64)
    cuts = np.cumsum([p.n_s, p.n_same, p.n_opp])
    sp, same, opp, irr = np.split(order, cuts)
    sparse_vocab = v.sparse(-y if ood else y)
    roles[sp], roles[same], roles[opp], roles[irr] = SPARSE, FREQ_SAME, FREQ_OPP, IRRELEVANT
    tokens[sp] = rng.choice(sparse_vocab, size=len(sp))
    tokens[same] = rng.choice(v.freq(y), size=len(same))
    tokens[opp] = rng.choice(v.freq(-y), size=len(opp))
    tokens[irr] = rng.choice(v.irrelevant, size=len(irr))
    return TokenSequence(int(y), tokens, roles)


@dataclass
class Dataset:
    """A batch of sequences stored as arrays.

    ``noise`` (optional, shape (n, T, d_tok)) is added to the one-hot inputs;
    it is only set for Gaussian-augmented copies.
    """

    params: SyntheticParams
    tokens: np.ndarray
    labels: np.ndarray
    roles: np.ndarray
    seed: int | None = None
    kind: str = "train"
    noise: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.labels)

    def inputs(self, idx=None) -> np.ndarray:
        """Float inputs of shape (n, T, d_tok)."""
        toks = self.tokens if idx is None else self.tokens[idx]
        x = one_hot(toks, self.params.d_tok)
        if self.noise is not None:
            x += self.noise if idx is None else self.noise[idx]
        return x

    def subset(self, idx) -> "Dataset":
        return Dataset(self.params, self.tokens[idx], self.labels[idx], self.roles[idx],
                       self.seed, self.kind, None if self.noise is None else self.noise[idx])

    def sequence(self, i: int) -> TokenSequence:
        return TokenSequence(int(self.labels[i]), self.tokens[i], self.roles[i])


def one_hot(tokens: np.ndarray, dim: int) -> np.ndarray:
    tokens = np.asarray(tokens)
    out = np.zeros(tokens.shape + (dim,))
    np.put_along_axis(out, tokens[..., None], 1.0, axis=-1)
    return out


def generate_dataset(p: SyntheticParams, n: int, kind: str = "train", seed: int = 0,
                     strict: bool = True) -> Dataset:
    """``n`` i.i.d. sequences with uniform labels.  ``strict=False`` only
    enforces the constraints generation needs, not n_s < n_f < min(m, T - n_s)."""
    if kind not in KINDS:
        raise ConfigError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
    if n < 1:
        raise ConfigError("dataset size must be >= 1")
    v = build_vocab(p, strict)
    rng = np.random.default_rng(seed)
    labels = rng.choice(np.array([-1, 1]), size=n)
    seqs = [generate_example(p, int(y), rng, ood=(kind == "test_ood"), vocab=v) for y in labels]
    return Dataset(
        params=p,
        tokens=np.stack([s.tokens for s in seqs]),
        labels=labels.astype(np.int64),
        roles=np.stack([s.roles for s in seqs]),
        seed=seed,
        kind=kind,
    )


def reference_vectors(p: SyntheticParams, sparse_minus: int = 2):
    """Directions (v_sp, v_freq, v_irrel) in R^d_tok.

    ``v_sp = e_1 - e_{sparse_minus}``.  The default contrasts the two sparse
    tokens, which is the direction a sparse-token predictor actually learns;
    ``sparse_minus=3`` gives ``e_1 - e_3`` instead.
    """
    v = build_vocab(p, strict=False)
    v_sp = np.zeros(p.d_tok)
    v_sp[0] = 1.0
    v_sp[sparse_minus - 1] -= 1.0
    v_freq = np.zeros(p.d_tok)
    v_freq[list(v.freq_pos)] = 1.0
    v_freq[list(v.freq_neg)] = -1.0
    v_irrel = np.zeros(p.d_tok)
    v_irrel[list(v.irrelevant)] = 1.0
    return v_sp, v_freq, v_irrel


# text format ------------------------------------------------------------------

HEADER = "#columns label\ttokens\troles  (token id j is basis vector e_(j+1); roles s=sparse f=frequent-same o=frequent-opposite i=irrelevant)"


def write_dataset(data: Dataset, path) -> None:
    if data.noise is not None:
        raise ConfigError("noisy datasets have no integer-token text form")
    lines = [
        "#params " + json.dumps(data.params.to_dict(), sort_keys=True),
        "#meta " + json.dumps({"kind": data.kind, "seed": data.seed, "n": len(data)}, sort_keys=True),
        HEADER,
    ]
    for y, toks, roles in zip(data.labels, data.tokens, data.roles):
        lines.append(f"{int(y):+d}\t{','.join(map(str, toks))}\t{','.join(ROLE_LETTERS[r] for r in roles)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    params = meta = None
    labels, tokens, roles = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#params "):
                params = SyntheticParams(**json.loads(line[8:]))
            elif line.startswith("#meta "):
                meta = json.loads(line[6:])
            elif line.startswith("#"):
                continue
            else:
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ConfigError(f"{path}:{lineno}: expected 3 tab-separated fields")
                labels.append(int(parts[0]))
                tokens.append([int(t) for t in parts[1].split(",")])
                roles.append([ROLE_LETTERS.index(r) for r in parts[2].split(",")])
    if params is None:
        raise ConfigError(f"{path}: missing #params header")
    meta = meta or {}
    return Dataset(params, np.array(tokens, dtype=np.int64), np.array(labels, dtype=np.int64),
                   np.array(roles, dtype=np.int8), meta.get("seed"), meta.get("kind", "train"))
