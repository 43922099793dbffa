"""Sensitivity-lowering training interventions and sharpness of the trained minimum.

Both interventions act on token vectors: augmentation appends Gaussian-noised
copies of each training sequence, and the regularizer penalizes the squared
change of the model output when one random position is noised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionParams, forward, score_gradients
from .errors import ConfigError
from .synthetic import Dataset
from .training import base_loss_and_gradients, scores


@dataclass(frozen=True)
class AugmentSpec:
    variance: float = 0.1
    copies: int = 1

    def __post_init__(self):
        if not self.variance > 0:
            raise ConfigError("augmentation variance must be > 0")
        if self.copies < 0:
            raise ConfigError("copies must be >= 0")


@dataclass(frozen=True)
class RegSpec:
    strength: float = 0.25
    variance: float = 1.0
    patches: int = 1

    def __post_init__(self):
        if self.strength < 0:
            raise ConfigError("regularization strength must be >= 0")
        if not self.variance > 0:
            raise ConfigError("regularization noise variance must be > 0")
        if self.patches < 1:
            raise ConfigError("patches must be >= 1")


@dataclass(frozen=True)
class SharpnessSpec:
    sigma: float = 0.005
    repeats: int = 5

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sharpness sigma must be > 0")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")


def augment_dataset(data: Dataset, spec: AugmentSpec, rng: np.random.Generator) -> Dataset:
    """Originals followed by ``spec.copies`` noisy duplicates of every example."""
    if data.kind != "train":
        raise ConfigError(f"augmentation applies to training data, got kind {data.kind!r}")
    n, T = data.tokens.shape
    D = data.params.d_tok
    base_noise = data.noise if data.noise is not None else np.zeros((n, T, D))
    sd = np.sqrt(spec.variance)
    extra = [base_noise + rng.normal(0.0, sd, (n, T, D)) for _ in range(spec.copies)]
    rep = spec.copies + 1
    return Dataset(
        params=data.params,
        tokens=np.tile(data.tokens, (rep, 1)),
        labels=np.tile(data.labels, rep),
        roles=np.tile(data.roles, (rep, 1)),
        seed=data.seed,
        kind=data.kind,
        noise=np.concatenate([base_noise] + extra, axis=0),
    )


def regularized_loss_and_gradients(theta: AttentionParams, batch: Dataset, spec: RegSpec,
                                   rng: np.random.Generator):
    """Logistic loss + strength * mean_b (Phi(X_b) - Phi(X~_b))^2.

    ``X~`` adds N(0, variance I) to ``spec.patches`` uniformly chosen positions
    of each sequence.  The noise is drawn even when the strength is 0 so the
    random stream advances identically.
    """
    loss, grads = base_loss_and_gradients(theta, batch)
    X = batch.inputs()
    B, T, D = X.shape
    noisy = X.copy()
    for _ in range(spec.patches):
        pos = rng.integers(0, T, size=B)
        noisy[np.arange(B), pos] += rng.normal(0.0, np.sqrt(spec.variance), (B, D))
    if spec.strength == 0:
        return loss, grads
    s_clean, c_clean = forward(theta, X, return_cache=True)
    s_noisy, c_noisy = forward(theta, noisy, return_cache=True)
    diff = s_clean - s_noisy
    penalty = float(np.mean(diff**2))
    coef = 2.0 * spec.strength * diff / B
    g_clean = score_gradients(theta, X, coef, c_clean)
    g_noisy = score_gradients(theta, noisy, coef, c_noisy)
    total = tuple(g + a - b for g, a, b in zip(grads, g_clean, g_noisy))
    return loss + spec.strength * penalty, total


def regularized_objective(spec: RegSpec):
    def objective(theta, batch, rng):
        return regularized_loss_and_gradients(theta, batch, spec, rng)
    return objective


def _perturbed_scores(theta: AttentionParams, data: Dataset, spec: SharpnessSpec, rng):
    base = scores(theta, data)
    flat = theta.flat()
    for _ in range(spec.repeats):
        noisy = theta.with_flat(flat + rng.normal(0.0, spec.sigma, flat.shape))
        yield base, scores(noisy, data)


def sh_op(theta: AttentionParams, data: Dataset, spec: SharpnessSpec, rng: np.random.Generator) -> float:
    """E |Phi(theta; x) - Phi(theta + xi; x)| with xi ~ N(0, sigma^2 I) on all parameters."""
    return float(np.mean([np.abs(b - p).mean() for b, p in _perturbed_scores(theta, data, spec, rng)]))


def sh_pred(theta: AttentionParams, data: Dataset, spec: SharpnessSpec, rng: np.random.Generator) -> float:
    """Fraction of predictions (sign, sign(0)=+1) that flip under the same weight noise."""
    flips = [np.mean((b >= 0) != (p >= 0)) for b, p in _perturbed_scores(theta, data, spec, rng)]
    return float(np.mean(flips))


def sharpness(theta: AttentionParams, data: Dataset, spec: SharpnessSpec, seed: int = 0) -> dict:
    """Both metrics from a shared stream of weight perturbations."""
    rng = np.random.default_rng(seed)
    op, pred = [], []
    for b, p in _perturbed_scores(theta, data, spec, rng):
        op.append(np.abs(b - p).mean())
        pred.append(np.mean((b >= 0) != (p >= 0)))
    return {"sh_op": float(np.mean(op)), "sh_pred": float(np.mean(pred))}


def input_to_weight_perturbation(theta: np.ndarray, x: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """Weight change that reproduces an input change for the linear model theta^T x."""
    x = np.asarray(x, dtype=float)
    nx2 = float(x @ x)
    if nx2 == 0:
        raise ConfigError("input must be non-zero")
    return (float(np.asarray(theta) @ np.asarray(dx)) / nx2) * x


def linear_equivalence_check(theta, x, dx) -> float:
    """|Phi(theta; x + dx) - Phi(theta + dtheta; x)| for the linear model."""
    theta, x, dx = (np.asarray(a, dtype=float) for a in (theta, x, dx))
    dtheta = input_to_weight_perturbation(theta, x, dx)
    return abs(float(theta @ (x + dx)) - float((theta + dtheta) @ x))
