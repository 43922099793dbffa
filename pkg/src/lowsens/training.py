"""Mini-batch SGD for the attention model plus per-epoch diagnostics."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from .attention import (AttentionParams, TrainConfig, attention_matrix, forward, forward_tokens, init_params,
                        loss_and_gradients, loss_and_gradients_tokens, sgd_step)
from .errors import NumericError
from .sensitivity import CorruptionSpec, measure_sensitivity
from .synthetic import FREQ_OPP, FREQ_SAME, IRRELEVANT, SPARSE, Dataset, SyntheticParams, reference_vectors

log = logging.getLogger(__name__)


@dataclass
class DiagnosticsRecord:
    epoch: int
    train_acc: float
    test_id_acc: float
    test_ood_acc: float
    align_sp: float
    align_freq: float
    align_irrel: float
    mass_sp: float
    mass_freq: float
    mass_irrel: float
    sensitivity: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


def scores(theta: AttentionParams, data: Dataset) -> np.ndarray:
    if data.noise is None:
        return forward_tokens(theta, data.tokens)
    return forward(theta, data.inputs())


def accuracy(theta: AttentionParams, data: Dataset | None) -> float:
    if data is None:
        return float("nan")
    pred = np.where(scores(theta, data) >= 0, 1, -1)
    return float(np.mean(pred == data.labels))


def readout_rows(theta: AttentionParams, T: int) -> np.ndarray:
    """Rows of U W_V^T that the head actually uses (the first T)."""
    return theta.U[:T] @ theta.W_V.T


def alignment_metrics(theta: AttentionParams, p: SyntheticParams, rows: int | None = None,
                      sparse_minus: int = 2) -> dict:
    """Mean cosine similarity between readout rows and (v_sp, v_freq, v_irrel).

    Zero-norm rows are skipped and counted in ``excluded``.
    """
    R = readout_rows(theta, rows or p.T)
    norms = np.linalg.norm(R, axis=1)
    keep = norms > 0
    out = {"excluded": int(np.count_nonzero(~keep))}
    for name, v in zip(("sp", "freq", "irrel"), reference_vectors(p, sparse_minus)):
        if not keep.any():
            out[name] = float("nan")
            continue
        cos = R[keep] @ v / (norms[keep] * np.linalg.norm(v))
        out[name] = float(np.mean(cos))
    return out


def attention_mass(theta: AttentionParams, data: Dataset) -> dict:
    """Average total attention placed on positions of each role.

    Sums over all T query rows, so with softmax the three masses add up to T.
    """
    A = attention_matrix(theta, data.inputs())          # (n, t, s)
    col = A.sum(axis=1)                                  # mass received by each key position
    freq = (data.roles == FREQ_SAME) | (data.roles == FREQ_OPP)
    return {
        "sp": float(np.mean(np.sum(col * (data.roles == SPARSE), axis=1))),
        "freq": float(np.mean(np.sum(col * freq, axis=1))),
        "irrel": float(np.mean(np.sum(col * (data.roles == IRRELEVANT), axis=1))),
    }


def diagnostics(theta, epoch, train, test_id=None, test_ood=None, sens_examples=200, sens_seed=0) -> DiagnosticsRecord:
    p = train.params
    al = alignment_metrics(theta, p)
    mass = attention_mass(theta, train)
    sens_data = train.subset(np.arange(min(sens_examples, len(train))))
    sens = measure_sensitivity(theta, sens_data, CorruptionSpec("token_uniform", seed=sens_seed)).normalized
    return DiagnosticsRecord(
        epoch=epoch,
        train_acc=accuracy(theta, train),
        test_id_acc=accuracy(theta, test_id),
        test_ood_acc=accuracy(theta, test_ood),
        align_sp=al["sp"],
        align_freq=al["freq"],
        align_irrel=al["irrel"],
        mass_sp=mass["sp"],
        mass_freq=mass["freq"],
        mass_irrel=mass["irrel"],
        sensitivity=sens,
    )


def base_loss_and_gradients(theta: AttentionParams, batch: Dataset):
    """Logistic loss on a batch, through the token path when inputs are exactly one-hot."""
    y = batch.labels.astype(float)
    if batch.noise is None:
        return loss_and_gradients_tokens(theta, batch.tokens, y)
    return loss_and_gradients(theta, batch.inputs(), y)


def default_objective(theta, batch, rng):
    return base_loss_and_gradients(theta, batch)


def train(data: Dataset, cfg: TrainConfig, test_id: Dataset | None = None, test_ood: Dataset | None = None,
          objective=None, theta0: AttentionParams | None = None, diagnose: bool = True):
    """Train with fixed-step mini-batch SGD.

    ``objective(theta, batch, rng) -> (loss, grads)`` defaults to the logistic
    loss.  Initialization, shuffling and objective noise use independent
    streams derived from ``cfg.seed``.  Returns ``(theta, records)``.
    """
    cfg.validate()
    objective = objective or default_objective
    init_rng = np.random.default_rng([cfg.seed, 0])
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    noise_rng = np.random.default_rng([cfg.seed, 2])
    theta = theta0.copy() if theta0 is not None else init_params(cfg, data.params.d_tok, init_rng)
    n = len(data)
    records = []

    def record(epoch):
        if diagnose:
            records.append(diagnostics(theta, epoch, data, test_id, test_ood, cfg.sens_examples, cfg.seed))

    record(0)
    for epoch in range(1, cfg.epochs + 1):
        perm = shuffle_rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            loss, grads = objective(theta, data.subset(perm[lo:lo + cfg.batch_size]), noise_rng)
            if not np.isfinite(loss):
                raise NumericError(f"loss became non-finite at epoch {epoch}")
            losses.append(loss)
            theta = sgd_step(theta, grads, cfg.lr)
        if not theta.is_finite():
            raise NumericError(f"parameters became non-finite at epoch {epoch}")
        log.debug("epoch %d loss %.5f", epoch, np.mean(losses))
        if epoch % cfg.diag_every == 0 or epoch == cfg.epochs:
            record(epoch)
    return theta, records
