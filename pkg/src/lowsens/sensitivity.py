"""Sensitivity of sequence models to single-position corruption.

For a model with prediction sign(Phi(X)) (sign(0) = +1), the normalized
sensitivity is the probability, averaged over examples and positions, that
replacing one position changes the prediction.  Two corruptions are
supported: replacing the token with one drawn uniformly from the vocabulary,
or adding Gaussian noise to the token vector.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .attention import AttentionParams, forward, replacement_scores
from .errors import CapacityError, ConfigError
from .synthetic import SPARSE, FREQ_SAME, FREQ_OPP, IRRELEVANT, Dataset, SyntheticParams, build_vocab, generate_dataset, one_hot

CORRUPTIONS = ("token_uniform", "gaussian_noise")
MAX_EXACT_CASES = 10**7


@dataclass(frozen=True)
class CorruptionSpec:
    """``repeats=None`` means: all M tokens for token replacement on the
    attention model (exact over the replacement draw), ``min(M, 32)``
    distinct tokens for other models, and 5 noise draws for Gaussian noise.
    """

    kind: str = "token_uniform"
    sigma2: float | None = None
    repeats: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTIONS:
            raise ConfigError(f"unknown corruption kind {self.kind!r}; expected one of {CORRUPTIONS}")
        if self.kind == "gaussian_noise" and not (self.sigma2 is not None and self.sigma2 > 0):
            raise ConfigError("gaussian_noise needs sigma2 > 0")
        if self.repeats is not None and self.repeats < 1:
            raise ConfigError("repeats must be >= 1")


@dataclass
class SensitivityReport:
    normalized: float
    per_position: np.ndarray
    stderr: np.ndarray
    n_examples: int
    draws_per_position: int
    spec: CorruptionSpec
    per_example: np.ndarray = field(repr=False, default=None)

    @property
    def normalized_stderr(self) -> float:
        """Standard error of the aggregate, from per-example averages."""
        per_ex = self.per_example.mean(axis=1)
        if len(per_ex) < 2:
            return 0.0
        return float(per_ex.std(ddof=1) / np.sqrt(len(per_ex)))

    def summary(self) -> dict:
        return {
            "normalized": self.normalized,
            "stderr": self.normalized_stderr,
            "n_examples": self.n_examples,
            "draws_per_position": self.draws_per_position,
            **{f"spec_{k}": v for k, v in asdict(self.spec).items()},
        }


def _sign(x):
    return np.where(np.asarray(x) >= 0, 1, -1)


def _scorer(model):
    if isinstance(model, AttentionParams):
        return lambda X: forward(model, X)
    if callable(model):
        return model
    raise ConfigError("model must be AttentionParams or a callable scoring (B, T, D) inputs")


def _report(flips: np.ndarray, draws: int, spec: CorruptionSpec) -> SensitivityReport:
    n = flips.shape[0]
    per_pos = flips.mean(axis=0)
    err = flips.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(flips.shape[1])
    return SensitivityReport(
        normalized=float(per_pos.mean()),
        per_position=per_pos,
        stderr=err,
        n_examples=n,
        draws_per_position=draws,
        spec=spec,
        per_example=flips,
    )


def _draw_tokens(rng, M: int, T: int, R: int) -> np.ndarray:
    return np.stack([rng.choice(M, size=R, replace=False) for _ in range(T)])


def measure_sensitivity(model, data: Dataset, spec: CorruptionSpec = CorruptionSpec()) -> SensitivityReport:
    """Per-example, per-position flip rates under the given corruption.

    Draws for example ``i`` come from ``default_rng([spec.seed, i])`` so the
    result does not depend on batching.
    """
    if len(data) == 0:
        raise ConfigError("empty dataset")
    p = data.params
    n, T = data.tokens.shape
    M = p.M
    if spec.kind == "token_uniform":
        fast = isinstance(model, AttentionParams) and data.noise is None
        R = spec.repeats if spec.repeats is not None else (M if fast else min(M, 32))
        R = min(R, M)
        flips = np.empty((n, T))
        if fast:
            base = _sign(forward(model, data.inputs()))
            table = _sign(replacement_scores(model, data.tokens, M)) != base[:, None, None]
            if R == M:
                flips[:] = table.mean(axis=2)
            else:
                for i in range(n):
                    picks = _draw_tokens(np.random.default_rng([spec.seed, i]), M, T, R)
                    flips[i] = np.take_along_axis(table[i], picks, axis=1).mean(axis=1)
            return _report(flips, R, spec)
        score = _scorer(model)
        for i in range(n):
            picks = _draw_tokens(np.random.default_rng([spec.seed, i]), M, T, R)
            x = data.inputs([i])[0]
            batch = np.repeat(x[None], T * R, axis=0)
            pos = np.repeat(np.arange(T), R)
            batch[np.arange(T * R), pos] = one_hot(picks.ravel(), p.d_tok)
            s0 = _sign(score(x[None]))[0]
            flips[i] = (_sign(score(batch)) != s0).reshape(T, R).mean(axis=1)
        return _report(flips, R, spec)

    R = spec.repeats if spec.repeats is not None else 5
    score = _scorer(model)
    sd = float(np.sqrt(spec.sigma2))
    flips = np.empty((n, T))
    for i in range(n):
        rng = np.random.default_rng([spec.seed, i])
        x = data.inputs([i])[0]
        batch = np.repeat(x[None], T * R, axis=0)
        pos = np.repeat(np.arange(T), R)
        batch[np.arange(T * R), pos] += rng.normal(0.0, sd, (T * R, p.d_tok))
        s0 = _sign(score(x[None]))[0]
        flips[i] = (_sign(score(batch)) != s0).reshape(T, R).mean(axis=1)
    return _report(flips, R, spec)


def per_position_profile(report: SensitivityReport, data: Dataset | None = None):
    """Per-position sensitivities as (position, value) pairs.

    With ``data`` given, positions are re-indexed per example after sorting by
    role (sparse, frequent same-class, frequent opposite-class, irrelevant) so
    that a permutation-equivariant model gets a meaningful profile.  The
    returned positions are then role ranks and each entry carries its role.
    """
    if data is None:
        return [(t, float(v)) for t, v in enumerate(report.per_position)]
    order = np.argsort(data.roles, axis=1, kind="stable")
    sorted_flips = np.take_along_axis(report.per_example, order, axis=1).mean(axis=0)
    sorted_roles = np.take_along_axis(data.roles, order, axis=1)[0]
    names = {SPARSE: "sparse", FREQ_SAME: "frequent_same", FREQ_OPP: "frequent_opp", IRRELEVANT: "irrelevant"}
    return [(t, float(v), names[int(r)]) for t, (v, r) in enumerate(zip(sorted_flips, sorted_roles))]


def role_sensitivity(report: SensitivityReport, data: Dataset) -> dict:
    """Mean flip rate at positions of each role."""
    out = {}
    for code, name in ((SPARSE, "sparse"), (FREQ_SAME, "frequent_same"), (FREQ_OPP, "frequent_opp"), (IRRELEVANT, "irrelevant")):
        mask = data.roles == code
        out[name] = float(report.per_example[mask].mean()) if mask.any() else float("nan")
    return out


# rule-based reference predictors --------------------------------------------

RULES = ("sparse_rule", "frequent_majority")
TIE_POLICIES = ("plus", "zero")


@dataclass(frozen=True)
class RulePredictor:
    """Count-based predictors on token ids.

    ``sparse_rule``: sign(#e_1 - #e_2); ``frequent_majority``: sign of the
    count of class +1 frequent tokens minus class -1 frequent tokens.
    A zero count difference predicts +1 (``tie="plus"``) or an abstaining 0
    that differs from both labels (``tie="zero"``).
    """

    kind: str = "sparse_rule"
    tie: str = "plus"
    m: int | None = None

    def __post_init__(self):
        if self.kind not in RULES:
            raise ConfigError(f"unknown rule {self.kind!r}; expected one of {RULES}")
        if self.tie not in TIE_POLICIES:
            raise ConfigError(f"unknown tie policy {self.tie!r}; expected one of {TIE_POLICIES}")

    def margin(self, tokens: np.ndarray, m: int) -> np.ndarray:
        """Count difference per sequence; ``tokens`` has shape (..., T)."""
        tokens = np.asarray(tokens)
        if self.kind == "sparse_rule":
            return (tokens == 0).sum(axis=-1) - (tokens == 1).sum(axis=-1)
        freq = (tokens >= 2) & (tokens <= 2 * m + 1)
        return (freq & (tokens % 2 == 0)).sum(axis=-1) - (freq & (tokens % 2 == 1)).sum(axis=-1)

    def decide(self, margin):
        margin = np.asarray(margin)
        tie = 1 if self.tie == "plus" else 0
        return np.where(margin > 0, 1, np.where(margin < 0, -1, tie))

    def predict(self, tokens: np.ndarray, m: int) -> np.ndarray:
        return self.decide(self.margin(tokens, m))

    def as_scorer(self, m: int):
        """Scoring function on one-hot inputs (B, T, D), usable with ``measure_sensitivity``.

        Only faithful for ``tie="plus"`` since scores are read through sign(0)=+1.
        """
        def score(X):
            counts = np.asarray(X).sum(axis=1)
            if self.kind == "sparse_rule":
                return counts[:, 0] - counts[:, 1]
            return counts[:, 2:2 * m + 2:2].sum(axis=1) - counts[:, 3:2 * m + 2:2].sum(axis=1)
        return score


def _role_token_counts(p: SyntheticParams, y: int) -> list[tuple[int, int]]:
    """(representative token id, number of positions) for each role of a label-y sequence."""
    v = build_vocab(p, strict=False)
    out = [
        (v.sparse(y)[0], p.n_s),
        (v.freq(y)[0], p.n_same),
        (v.freq(-y)[0], p.n_opp),
    ]
    if p.n_irrel:
        out.append((v.irrelevant[0], p.n_irrel))
    return out


def rule_sensitivity_exact(rule: RulePredictor, p: SyntheticParams, exact: bool = False):
    """Normalized sensitivity of a rule predictor on the synthetic distribution.

    Enumerates both labels, every position role and every one of the M
    replacement tokens.  The rule only sees count differences, which are
    fixed by the role counts, so no sampling is involved.  Only structural
    feasibility of ``p`` is required (some published settings have n_s = n_f).
    Returns a float, or a ``Fraction`` when ``exact`` is set.
    """
    p.validate(strict=False)
    if p.T * p.M * 2 > MAX_EXACT_CASES:
        raise CapacityError(f"exact enumeration of {2 * p.T * p.M} cases exceeds {MAX_EXACT_CASES}")
    total = Fraction(0)
    for y in (1, -1):
        base_tokens = []
        for tok, count in _role_token_counts(p, y):
            base_tokens += [tok] * count
        base_tokens = np.array(base_tokens)
        base_margin = int(rule.margin(base_tokens, p.m))
        base_pred = int(rule.decide(base_margin))
        # margin change for swapping token a out and token v in
        v_contrib = rule.margin(np.arange(p.M)[:, None], p.m)          # (M,)
        flips_y = 0
        for tok, count in _role_token_counts(p, y):
            if count == 0:
                continue
            a_contrib = int(rule.margin(np.array([tok]), p.m))
            preds = rule.decide(base_margin - a_contrib + v_contrib)
            flips_y += count * int(np.count_nonzero(preds != base_pred))
        total += Fraction(flips_y, p.M)
    value = total / 2 / p.T
    return value if exact else float(value)


def rule_sensitivity_mc(rule: RulePredictor, p: SyntheticParams, n_examples: int,
                        repeats: int = 1, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of the same quantity: (mean, standard error).

    Samples ``n_examples`` sequences and ``repeats`` uniform replacement
    tokens per position.
    """
    data = generate_dataset(p, n_examples, seed=seed, strict=False)
    rng = np.random.default_rng([seed, 1])
    n, T = data.tokens.shape
    base = rule.predict(data.tokens, p.m)
    per_example = np.zeros(n)
    for r in range(repeats):
        draws = rng.integers(0, p.M, size=(n, T))
        # token arrays with one position replaced: (n, T, T)
        toks = np.repeat(data.tokens[:, None, :], T, axis=1)
        idx = np.arange(T)
        toks[:, idx, idx] = draws
        per_example += (rule.predict(toks, p.m) != base[:, None]).mean(axis=1)
    per_example /= repeats
    return float(per_example.mean()), float(per_example.std(ddof=1) / np.sqrt(n))

