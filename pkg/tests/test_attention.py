import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lowsens.attention import (ACTIVATIONS, AttentionParams, TrainConfig, attention_matrix, forward, forward_tokens,
                               init_params, load_params, loss_and_gradients, loss_and_gradients_tokens, predict,
                               replacement_scores, save_params)
from lowsens.errors import ConfigError, NumericError
from lowsens.synthetic import SyntheticParams, generate_dataset, one_hot
from lowsens.training import train


def rand_params(D, act, scale=0.5, seed=0, d_h=None):
    rng = np.random.default_rng(seed)
    d_h = d_h or D
    return AttentionParams(rng.normal(0, scale, (D, d_h)), rng.normal(0, scale, (D, d_h)),
                           rng.normal(0, scale, (D, D)), rng.normal(0, scale, (D, D)), activation=act)


def fd_gradient(f, theta, h=1e-6):
    flat = theta.flat()
    g = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        g[i] = (f(theta.with_flat(flat + e)) - f(theta.with_flat(flat - e))) / (2 * h)
    return g


def flatten(grads):
    return np.concatenate([g.ravel() for g in grads])


# forward pass ----------------------------------------------------------------

def test_zero_params_give_log2_loss():
    D, T = 6, 4
    zero = AttentionParams(*(np.zeros((D, D)) for _ in range(4)))
    X = one_hot(np.random.default_rng(0).integers(0, D, (3, T)), D)
    loss, grads = loss_and_gradients(zero, X, [1, -1, 1])
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    assert np.all(forward(zero, X) == 0)
    assert np.all(predict(zero, X) == 1)                         # sign(0) = +1


def test_zero_query_key_gives_uniform_softmax():
    D, T = 5, 4
    th = rand_params(D, "softmax", seed=1)
    th = AttentionParams(np.zeros((D, D)), np.zeros((D, D)), th.W_V, th.U)
    X = np.random.default_rng(2).normal(size=(T, D))
    np.testing.assert_allclose(attention_matrix(th, X), np.full((T, T), 1 / T), atol=1e-15)
    expected = np.sum(np.outer(np.ones(T), X.mean(axis=0) @ th.W_V) * th.U[:T])
    assert forward(th, X) == pytest.approx(expected, abs=1e-12)


def test_single_token_closed_form():
    # T = 1: softmax weight is 1, so Phi = <u_1, W_V^T x>
    D = 4
    th = rand_params(D, "softmax", seed=3)
    x = np.random.default_rng(4).normal(size=(1, D))
    assert forward(th, x) == pytest.approx(float(th.U[0] @ (th.W_V.T @ x[0])), abs=1e-12)


@pytest.mark.parametrize("act", ACTIVATIONS)
def test_superposition_in_readout(act):
    D, T = 5, 3
    a, b = rand_params(D, act, seed=5), rand_params(D, act, seed=6)
    X = np.random.default_rng(7).normal(size=(2, T, D))
    mixed = AttentionParams(a.W_Q, a.W_K, a.W_V, 2.0 * a.U - 0.5 * b.U, activation=act)
    with_b = AttentionParams(a.W_Q, a.W_K, a.W_V, b.U, activation=act)
    np.testing.assert_allclose(forward(mixed, X), 2.0 * forward(a, X) - 0.5 * forward(with_b, X), atol=1e-12)


def test_softmax_rows_sum_to_one():
    th = rand_params(8, "softmax", scale=2.0, seed=8)
    A = attention_matrix(th, np.random.default_rng(9).normal(size=(3, 6, 8)))
    np.testing.assert_allclose(A.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(A >= 0)


@pytest.mark.parametrize("act", ACTIVATIONS)
def test_permutation_equivariance_of_attention_output(act):
    # permuting tokens permutes attention rows and columns; the score changes only through U rows
    D, T = 6, 5
    th = rand_params(D, act, seed=10)
    X = np.random.default_rng(11).normal(size=(T, D))
    perm = np.random.default_rng(12).permutation(T)
    A, Ap = attention_matrix(th, X), attention_matrix(th, X[perm])
    np.testing.assert_allclose(Ap, A[np.ix_(perm, perm)], atol=1e-12)
    U_perm = th.U.copy()
    U_perm[:T] = th.U[:T][perm]
    permuted = AttentionParams(th.W_Q, th.W_K, th.W_V, U_perm, activation=act)
    assert forward(permuted, X[perm]) == pytest.approx(forward(th, X), abs=1e-12)


def test_shape_errors():
    th = rand_params(4, "softmax")
    with pytest.raises(ConfigError):
        forward(th, np.zeros((3, 5)))                            # wrong token dimension
    with pytest.raises(ConfigError):
        forward(th, np.zeros((5, 4)))                            # T > head rows
    with pytest.raises(ConfigError):
        AttentionParams(np.zeros((4, 4)), np.zeros((4, 3)), np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(ConfigError):
        AttentionParams(*(np.zeros((4, 4)) for _ in range(4)), activation="tanh")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_overflow_raises_numeric_error():
    D = 3
    big = AttentionParams(np.full((D, D), 1e200), np.full((D, D), 1e200), np.eye(D), np.eye(D), activation="relu")
    with pytest.raises(NumericError, match="logits"):
        forward(big, np.ones((2, D)))


# gradients -------------------------------------------------------------------

@pytest.mark.parametrize("act", ACTIVATIONS)
def test_gradients_match_finite_differences(act):
    D, T, B = 5, 4, 3
    th = rand_params(D, act, seed=13)
    X = np.random.default_rng(14).normal(size=(B, T, D))
    y = np.array([1.0, -1.0, 1.0])
    _, grads = loss_and_gradients(th, X, y)
    fd = fd_gradient(lambda t: loss_and_gradients(t, X, y)[0], th)
    np.testing.assert_allclose(flatten(grads), fd, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("act", ACTIVATIONS)
def test_token_path_matches_dense_path(act):
    D, T = 9, 6
    th = rand_params(D, act, seed=15)
    tokens = np.random.default_rng(16).integers(0, D, (7, T))
    y = np.where(np.random.default_rng(17).random(7) < 0.5, 1.0, -1.0)
    X = one_hot(tokens, D)
    np.testing.assert_allclose(forward_tokens(th, tokens), forward(th, X), atol=1e-12)
    l1, g1 = loss_and_gradients_tokens(th, tokens, y)
    l2, g2 = loss_and_gradients(th, X, y)
    assert l1 == pytest.approx(l2, abs=1e-13)
    np.testing.assert_allclose(flatten(g1), flatten(g2), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(ACTIVATIONS), st.integers(0, 10 ** 6), st.integers(2, 6))
def test_replacement_scores_match_forward(act, seed, T):
    D = T + 3
    th = rand_params(D, act, scale=0.8, seed=seed)
    tokens = np.random.default_rng(seed + 1).integers(0, D, (2, T))
    fast = replacement_scores(th, tokens, D)
    for b in range(2):
        for p in range(T):
            batch = np.repeat(tokens[b][None], D, axis=0)
            batch[:, p] = np.arange(D)
            np.testing.assert_allclose(fast[b, p], forward_tokens(th, batch), atol=1e-10)


# initialization and training ---------------------------------------------------

def test_init_statistics_and_shapes():
    th = init_params(TrainConfig(init_scale=0.01, seed=3), 50)
    assert all(a.shape == (50, 50) for a in th.arrays())
    assert np.std(th.flat()) == pytest.approx(0.01, rel=0.02)
    assert abs(np.mean(th.flat())) < 3 * 0.01 / math.sqrt(th.flat().size)
    assert init_params(TrainConfig(d_h=7), 10).W_Q.shape == (10, 7)


def test_train_config_validation():
    for bad in (dict(batch_size=0), dict(init_scale=0.0), dict(lr=-1.0), dict(loss="hinge"), dict(activation="gelu")):
        with pytest.raises(ConfigError):
            TrainConfig(**bad).validate()


def test_zero_learning_rate_leaves_parameters():
    p = SyntheticParams(T=8, m=4, n_s=1, n_f=3, n_d=1)
    data = generate_dataset(p, 40, seed=0)
    cfg = TrainConfig(lr=0.0, epochs=3, batch_size=10, seed=2)
    theta, records = train(data, cfg, diagnose=False)
    ref = init_params(cfg, p.d_tok, np.random.default_rng([cfg.seed, 0]))
    np.testing.assert_array_equal(theta.flat(), ref.flat())
    assert records == []


def test_training_is_deterministic_and_learns():
    p = SyntheticParams(T=10, m=4, n_s=1, n_f=3, n_d=1)
    data = generate_dataset(p, 200, seed=1)
    cfg = TrainConfig(lr=0.5, epochs=15, init_scale=0.1, seed=4, sens_examples=20)
    a, rec = train(data, cfg)
    b, _ = train(data, cfg, diagnose=False)
    np.testing.assert_array_equal(a.flat(), b.flat())
    assert rec[-1].train_acc == 1.0 and rec[0].epoch == 0 and len(rec) == 16


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_numeric_error():
    p = SyntheticParams(T=8, m=4, n_s=1, n_f=3, n_d=1)
    data = generate_dataset(p, 40, seed=0)
    with pytest.raises(NumericError):
        train(data, TrainConfig(lr=1e300, epochs=3, init_scale=1.0, activation="relu"), diagnose=False)


def test_params_round_trip(tmp_path):
    th = rand_params(6, "linear_scaled", seed=20, d_h=4)
    save_params(th, tmp_path / "p.npz")
    back = load_params(tmp_path / "p.npz")
    assert back.activation == "linear_scaled"
    np.testing.assert_array_equal(back.flat(), th.flat())
    (tmp_path / "bad.npz").write_bytes(b"not an archive")
    with pytest.raises(ConfigError):
        load_params(tmp_path / "bad.npz")
    np.savez(tmp_path / "partial.npz", W_Q=np.zeros((2, 2)))
    with pytest.raises(ConfigError, match="lacks"):
        load_params(tmp_path / "partial.npz")
