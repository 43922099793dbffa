"""Single-head self-attention with a linear head, trained by SGD with hand-written gradients.

Score of a sequence X (T x D):

    Phi(theta; X) = <U[:T], act(X W_Q W_K^T X^T) X W_V>

The head ``U`` is D x D; only its first T rows meet the T x D attention
output, so sequences must satisfy T <= D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError

ACTIVATIONS = ("softmax", "relu", "linear_scaled")
PARAM_NAMES = ("W_Q", "W_K", "W_V", "U")


@dataclass
class AttentionParams:
    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    U: np.ndarray
    activation: str = "softmax"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        D = self.W_Q.shape[0]
        if self.W_K.shape != self.W_Q.shape:
            raise ConfigError(f"W_K shape {self.W_K.shape} != W_Q shape {self.W_Q.shape}")
        if self.W_V.shape[0] != D or self.U.shape != (D, self.W_V.shape[1]):
            raise ConfigError("inconsistent W_V / U shapes")

    @property
    def d_tok(self) -> int:
        return self.W_Q.shape[0]

    def arrays(self) -> tuple:
        return self.W_Q, self.W_K, self.W_V, self.U

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "AttentionParams":
        parts, i = [], 0
        for a in self.arrays():
            parts.append(np.asarray(vec[i:i + a.size], dtype=float).reshape(a.shape))
            i += a.size
        return AttentionParams(*parts, activation=self.activation)

    def copy(self) -> "AttentionParams":
        return AttentionParams(*(a.copy() for a in self.arrays()), activation=self.activation)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 100
    epochs: int = 50
    init_scale: float = 1e-2
    seed: int = 0
    loss: str = "logistic"
    activation: str = "softmax"
    d_h: int | None = None
    # diagnostics: sensitivity is measured on the first `sens_examples` training sequences
    sens_examples: int = 200
    diag_every: int = 1

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.init_scale > 0:
            raise ConfigError("init_scale must be > 0")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.loss != "logistic":
            raise ConfigError(f"unsupported loss {self.loss!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        return self


def init_params(cfg: TrainConfig, d_tok: int, rng: np.random.Generator | None = None) -> AttentionParams:
    cfg.validate()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    d_h = cfg.d_h or d_tok
    s = cfg.init_scale
    return AttentionParams(
        W_Q=rng.normal(0.0, s, (d_tok, d_h)),
        W_K=rng.normal(0.0, s, (d_tok, d_h)),
        W_V=rng.normal(0.0, s, (d_tok, d_tok)),
        U=rng.normal(0.0, s, (d_tok, d_tok)),
        activation=cfg.activation,
    )


def _check(stage: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values at stage {stage!r}")
    return arr


def linear_attention_scale(T: int, d_tok: int) -> float:
    return 1.0 / math.sqrt(T * d_tok)


def _attend(logits: np.ndarray, activation: str, T: int, D: int) -> np.ndarray:
    if activation == "softmax":
        z = np.exp(logits - logits.max(axis=-1, keepdims=True))
        return z / z.sum(axis=-1, keepdims=True)
    if activation == "relu":
        return np.maximum(logits, 0.0)
    return logits * linear_attention_scale(T, D)


def _as_batch(X) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        return X[None], True
    if X.ndim != 3:
        raise ConfigError(f"inputs must be (T, D) or (B, T, D), got shape {X.shape}")
    return X, False


def forward(theta: AttentionParams, X, return_cache: bool = False):
    """Scores for a batch (B, T, D) or a single sequence (T, D)."""
    X, single = _as_batch(X)
    B, T, D = X.shape
    if D != theta.d_tok:
        raise ConfigError(f"token dimension {D} != model dimension {theta.d_tok}")
    if T > D:
        raise ConfigError(f"sequence length {T} exceeds head rows {D}")
    X2 = X.reshape(B * T, D)
    Q = (X2 @ theta.W_Q).reshape(B, T, -1)
    K = (X2 @ theta.W_K).reshape(B, T, -1)
    logits = _check("logits", Q @ K.transpose(0, 2, 1))
    A = _check("attention", _attend(logits, theta.activation, T, D))
    V = (X2 @ theta.W_V).reshape(B, T, -1)
    O = _check("attention output", A @ V)
    scores = _check("score", O.reshape(B, -1) @ theta.U[:T].ravel())
    if single:
        scores = scores[0]
    if return_cache:
        return scores, dict(X=X, Q=Q, K=K, logits=logits, A=A, V=V, O=O)
    return scores


def attention_matrix(theta: AttentionParams, X) -> np.ndarray:
    X, single = _as_batch(X)
    _, cache = forward(theta, X, return_cache=True)
    return cache["A"][0] if single else cache["A"]


def predict(theta: AttentionParams, X) -> np.ndarray:
    return np.where(forward(theta, X) >= 0, 1, -1)


def score_gradients(theta: AttentionParams, X, dscore, cache: dict | None = None) -> tuple:
    """Gradients of sum_b dscore[b] * Phi(theta; X_b) w.r.t. (W_Q, W_K, W_V, U)."""
    c = cache if cache is not None else forward(theta, X, return_cache=True)[1]
    X, A, V, O, Q, K = c["X"], c["A"], c["V"], c["O"], c["Q"], c["K"]
    B, T, D = X.shape
    g = np.asarray(dscore, dtype=float).reshape(-1)
    Uh = theta.U[:T]

    dU = np.zeros_like(theta.U)
    dU[:T] = (g @ O.reshape(B, -1)).reshape(T, -1)
    dO = g[:, None, None] * Uh[None]
    dA = dO @ V.transpose(0, 2, 1)
    dV = A.transpose(0, 2, 1) @ dO
    if theta.activation == "softmax":
        dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True))
    elif theta.activation == "relu":
        dS = dA * (c["logits"] > 0)
    else:
        dS = dA * linear_attention_scale(T, D)
    dQ = dS @ K
    dK = dS.transpose(0, 2, 1) @ Q
    X2t = X.reshape(B * T, D).T
    dWQ = X2t @ dQ.reshape(B * T, -1)
    dWK = X2t @ dK.reshape(B * T, -1)
    dWV = X2t @ dV.reshape(B * T, -1)
    return dWQ, dWK, dWV, dU


def logistic_loss(scores: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, -y * scores)))


def loss_and_gradients(theta: AttentionParams, X, y) -> tuple[float, tuple]:
    """Mean logistic loss log(1 + exp(-y Phi)) and its exact gradient."""
    X, _ = _as_batch(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) == 0:
        raise ConfigError("empty batch")
    scores, cache = forward(theta, X, return_cache=True)
    # d/ds log(1 + e^{-ys}) = -y * sigmoid(-ys)
    dscore = -y * _sigmoid(-y * scores) / len(y)
    return logistic_loss(scores, y), score_gradients(theta, X, dscore, cache)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sgd_step(theta: AttentionParams, grads: tuple, lr: float) -> AttentionParams:
    return AttentionParams(*(a - lr * g for a, g in zip(theta.arrays(), grads)), activation=theta.activation)


# fast single-token replacement scores ----------------------------------------

def replacement_scores(theta: AttentionParams, tokens: np.ndarray, vocab_size: int,
                       chunk: int = 16) -> np.ndarray:
    """Scores after replacing position p with token v, for every p and every v < vocab_size.

    ``tokens`` is an (n, T) array of one-hot token ids; the result has shape
    (n, T, vocab_size).  Exact: a one-hot replacement changes one attention row
    (the query at p) and one column (the key/value at p), so each candidate
    costs O(T) per row instead of a full forward pass.
    """
    tokens = np.asarray(tokens)
    n, T = tokens.shape
    L = theta.W_Q @ theta.W_K.T              # L[a, b]: logit of query token a on key token b
    R = theta.W_V @ theta.U[:T].T            # R[a, t]: readout of value token a at output row t
    vs = np.arange(vocab_size)
    Rv = R[vs].T                             # (t, v)
    Lvv = L[vs, vs]
    rows = np.arange(T)
    act = theta.activation
    scale = linear_attention_scale(T, theta.d_tok)

    def weights(logits, shift):
        if act == "softmax":
            return np.exp(logits - shift)
        if act == "relu":
            return np.maximum(logits, 0.0)
        return logits * scale

    out = np.empty((n, T, vocab_size))
    for lo in range(0, n, chunk):
        tok = tokens[lo:lo + chunk]
        Lx = L[tok[:, :, None], tok[:, None, :]]         # (b, t, s)
        Lv = L[tok][:, :, vs]                             # (b, t, v)
        Rx = R[tok]                                       # (b, s, t) = R[tok_s, t]

        # rows t != p keep their query; key/value at p becomes v
        shift = np.maximum(Lx.max(axis=2), Lv.max(axis=2))[:, :, None] if act == "softmax" else 0.0
        wx, wv = weights(Lx, shift), weights(Lv, shift)
        num = (np.einsum("bts,bst->bt", wx, Rx)[:, :, None, None]
               - (wx * Rx.transpose(0, 2, 1))[..., None]
               + (wv * Rv[None])[:, :, None, :])          # (b, t, p, v)
        if act == "softmax":
            den = wx.sum(axis=2)[:, :, None, None] - wx[..., None] + wv[:, :, None, :]
            num = num / den
        others = num.sum(axis=1) - num[:, rows, rows, :]  # (b, p, v)

        # row p: query v over keys tok_s (s != p) and v itself at s = p
        Lq = L[vs][:, tok].transpose(1, 0, 2)             # (b, v, s)
        shq = np.maximum(Lq.max(axis=2), Lvv[None, :]) if act == "softmax" else np.zeros(Lq.shape[:2])
        wq = weights(Lq, shq[:, :, None])                 # (b, v, s)
        wself = weights(Lvv[None, :], shq)                # (b, v)
        wq_p = wq.transpose(0, 2, 1)                      # (b, p, v)
        num_p = (np.einsum("bvs,bsp->bpv", wq, Rx)
                 - wq_p * Rx[:, rows, rows][:, :, None]
                 + wself[:, None, :] * Rv[None])
        if act == "softmax":
            num_p = num_p / (wq.sum(axis=2)[:, None, :] - wq_p + wself[:, None, :])
        out[lo:lo + chunk] = others + num_p
    return out


# token-indexed path -----------------------------------------------------------
# For one-hot inputs every product with X is a row gather, so the score only
# needs the D x D logit table W_Q W_K^T and the D x T readout table W_V U[:T]^T.

def _token_weights(theta: AttentionParams, tokens: np.ndarray):
    tokens = np.asarray(tokens)
    B, T = tokens.shape
    if T > theta.d_tok:
        raise ConfigError(f"sequence length {T} exceeds head rows {theta.d_tok}")
    L = theta.W_Q @ theta.W_K.T
    R = theta.W_V @ theta.U[:T].T
    logits = _check("logits", L[tokens[:, :, None], tokens[:, None, :]])     # (b, t, s)
    A = _check("attention", _attend(logits, theta.activation, T, theta.d_tok))
    Rg = R[tokens].transpose(0, 2, 1)                                        # (b, t, s) = R[tok_s, t]
    return logits, A, Rg


def forward_tokens(theta: AttentionParams, tokens: np.ndarray) -> np.ndarray:
    """Same as ``forward`` on the one-hot encoding of ``tokens`` (shape (B, T))."""
    _, A, Rg = _token_weights(theta, tokens)
    return _check("score", np.einsum("bts,bts->b", A, Rg))


def loss_and_gradients_tokens(theta: AttentionParams, tokens: np.ndarray, y) -> tuple[float, tuple]:
    tokens = np.asarray(tokens)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) == 0:
        raise ConfigError("empty batch")
    B, T = tokens.shape
    D = theta.d_tok
    logits, A, Rg = _token_weights(theta, tokens)
    scores = _check("score", np.einsum("bts,bts->b", A, Rg))
    g = -y * _sigmoid(-y * scores) / B
    dA = g[:, None, None] * Rg
    # dR[tok_s, t] += g_b A[b, t, s]
    idx_R = (tokens[:, None, :] * T + np.arange(T)[None, :, None]).ravel()
    dR = np.bincount(idx_R, weights=(g[:, None, None] * A).ravel(), minlength=D * T).reshape(D, T)
    if theta.activation == "softmax":
        dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True))
    elif theta.activation == "relu":
        dS = dA * (logits > 0)
    else:
        dS = dA * linear_attention_scale(T, D)
    idx_L = (tokens[:, :, None] * D + tokens[:, None, :]).ravel()
    dL = np.bincount(idx_L, weights=dS.ravel(), minlength=D * D).reshape(D, D)
    dWQ = dL @ theta.W_K
    dWK = dL.T @ theta.W_Q
    dWV = dR @ theta.U[:T]
    dU = np.zeros_like(theta.U)
    dU[:T] = dR.T @ theta.W_V
    return logistic_loss(scores, y), (dWQ, dWK, dWV, dU)


# parameter files ----------------------------------------------------------------
# A .npz archive with one float64 array per matrix (W_Q, W_K, W_V, U; row-major,
# shapes stored by numpy) and a 0-d string array ``activation``.

def save_params(theta: AttentionParams, path) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, **dict(zip(PARAM_NAMES, theta.arrays())), activation=np.array(theta.activation))


def load_params(path) -> AttentionParams:
    try:
        with np.load(path, allow_pickle=False) as z:
            missing = [k for k in PARAM_NAMES + ("activation",) if k not in z.files]
            if missing:
                raise ConfigError(f"{path}: parameter file lacks {', '.join(missing)}")
            return AttentionParams(*(np.array(z[k], dtype=float) for k in PARAM_NAMES), activation=str(z["activation"]))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: unreadable parameter file ({exc})") from None
