import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lowsens.boolean import cube_points
from lowsens.errors import CapacityError, ConfigError
from lowsens.kernels import (DUAL_MAPS, Spectrum, compose_ck, compose_ntk, constant_psi, eigenvalue_mu, gram_eigencheck,
                             identity_psi, mu_monte_carlo, parse_layers, power_psi, rayleigh_quotients, spectrum,
                             verify_weak_spectral_bias)

KINDS = ("identity", "relu", "erf", "attn")
stacks = st.lists(st.sampled_from(KINDS), min_size=1, max_size=4)


def brute_mu(psi, d, k):
    """E_x[x_1...x_k * Psi(mean(x))] over all 2^d points."""
    X = cube_points(d).astype(float)
    return float(np.mean(np.prod(X[:, :k], axis=1) * psi(X.mean(axis=1))))


# profiles ----------------------------------------------------------------------

def test_ck_examples():
    ident = compose_ck(["dense:identity"])
    assert ident(1.0) == 1.0 and ident(0.0) == 0.0
    attn = compose_ck(["linear_attention"])
    assert attn(-1.0) == -1.0
    assert attn(0.5) == pytest.approx(0.125)
    assert compose_ck(["dense:relu"])(0.0) == pytest.approx(1 / math.pi)


def test_ntk_examples():
    c = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(compose_ntk(["dense:identity"])(c), 2 * c, atol=1e-15)
    np.testing.assert_allclose(compose_ntk(["attn"])(c), 4 * c ** 3, atol=1e-15)


def test_relu_dual_monte_carlo():
    rng = np.random.default_rng(0)
    for c in (0.0, 0.4, -0.7):
        u = rng.normal(size=10 ** 6)
        v = c * u + math.sqrt(1 - c * c) * rng.normal(size=10 ** 6)
        est = 2 * np.mean(np.maximum(u, 0) * np.maximum(v, 0))
        assert est == pytest.approx(float(compose_ck(["relu"])(c)), abs=0.003)


def test_erf_dual_monte_carlo():
    rng = np.random.default_rng(1)
    erf = np.vectorize(math.erf)
    for c in (0.0, 0.5, 0.9):
        u = rng.normal(size=2 * 10 ** 5)
        v = c * u + math.sqrt(1 - c * c) * rng.normal(size=u.size)
        est = np.mean(erf(u) * erf(v))
        assert est == pytest.approx(float(compose_ck(["erf"])(c)), abs=0.005)


@pytest.mark.parametrize("kind", KINDS)
def test_dual_map_derivatives(kind):
    f, df = DUAL_MAPS[kind]
    c = np.linspace(-0.95, 0.95, 19)
    h = 1e-6
    np.testing.assert_allclose(df(c), (f(c + h) - f(c - h)) / (2 * h), rtol=1e-6, atol=1e-8)


def test_psi_algebra():
    c = np.linspace(-1, 1, 7)
    psi = 2.0 * identity_psi() + constant_psi(1.0) - power_psi(3)
    np.testing.assert_allclose(psi(c), 2 * c + 1 - c ** 3)
    np.testing.assert_allclose((identity_psi() ** 2)(c), c ** 2)


def test_layer_parsing():
    assert parse_layers("dense:relu, attn ,dense:erf") == ["relu", "attn", "erf"]
    with pytest.raises(ConfigError, match="tanh"):
        parse_layers("dense:tanh")
    with pytest.raises(ConfigError):
        parse_layers("")


# eigenvalues -------------------------------------------------------------------

def test_eigenvalue_examples():
    lin, sq = identity_psi(), power_psi(2)
    assert eigenvalue_mu(lin, 8, 1) == pytest.approx(0.125, abs=1e-15)
    assert all(eigenvalue_mu(lin, 8, k) == 0 for k in range(9) if k != 1)
    assert eigenvalue_mu(sq, 8, 0) == pytest.approx(1 / 8, abs=1e-15)
    assert eigenvalue_mu(sq, 8, 2) == pytest.approx(2 / 64, abs=1e-15)
    one = constant_psi(1.0)
    assert [eigenvalue_mu(one, 5, k) for k in range(6)] == [1, 0, 0, 0, 0, 0]


def test_spectrum_examples():
    assert spectrum(identity_psi(), 4).mu == (0, 0.25, 0, 0, 0)
    cube = spectrum(power_psi(3), 4).mu
    assert cube[1] >= cube[3] > 0 and cube[0] == cube[2] == cube[4] == 0
    np.testing.assert_allclose(spectrum(constant_psi(1.0) + identity_psi(), 3).mu, (1, 1 / 3, 0, 0), atol=1e-15)


def test_ordering_examples():
    assert verify_weak_spectral_bias(spectrum(compose_ck(["dense:relu", "attn", "dense:relu"]), 16)) == (True, None)
    assert verify_weak_spectral_bias(Spectrum(3, (1, 0.5, 0.2, 0.4))) == (True, None)
    assert verify_weak_spectral_bias(Spectrum(3, (0.1, 0, 0.2, 0))) == (False, (0, 2))


def test_eigenvalue_errors():
    with pytest.raises(ConfigError):
        eigenvalue_mu(identity_psi(), 4, 5)
    with pytest.raises(CapacityError):
        eigenvalue_mu(identity_psi(), 41, 1)
    with pytest.raises(ConfigError):
        Spectrum(2, (1.0, 0.0))


@settings(max_examples=40, deadline=None)
@given(stacks, st.booleans(), st.integers(1, 10))
def test_exact_mu_matches_brute_force(layers, ntk, d):
    psi = compose_ntk(layers) if ntk else compose_ck(layers)
    for k in range(d + 1):
        assert eigenvalue_mu(psi, d, k) == pytest.approx(brute_mu(psi, d, k), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(stacks, stacks, st.floats(-3, 3), st.floats(-3, 3), st.integers(1, 30))
def test_linearity(l1, l2, a, b, d):
    p1, p2 = compose_ck(l1), compose_ntk(l2)
    combo = a * p1 + b * p2
    for k in range(d + 1):
        expected = a * eigenvalue_mu(p1, d, k) + b * eigenvalue_mu(p2, d, k)
        assert eigenvalue_mu(combo, d, k) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(stacks, st.integers(1, 30))
def test_parity_of_spectrum(layers, d):
    # identity and attention maps are odd; a stack of only those yields an odd profile
    odd = compose_ck([k for k in layers if k in ("identity", "attn")] or ["attn"])
    even = odd * odd
    for k in range(d + 1):
        if k % 2 == 0:
            assert abs(eigenvalue_mu(odd, d, k)) < 1e-12
        else:
            assert abs(eigenvalue_mu(even, d, k)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(stacks, st.booleans(), st.integers(1, 40))
def test_completeness(layers, ntk, d):
    psi = compose_ntk(layers) if ntk else compose_ck(layers)
    s = spectrum(psi, d)
    total = math.fsum(math.comb(d, k) * mu for k, mu in enumerate(s.mu))
    assert total == pytest.approx(float(psi(1.0)), abs=1e-9)


@pytest.mark.parametrize("layers", [["relu"], ["attn", "relu"], ["erf", "attn"]])
def test_monte_carlo_agreement(layers):
    psi = compose_ntk(layers)
    rng = np.random.default_rng(7)
    d = 20
    for k in (0, 1, 2, 3):
        mean, err = mu_monte_carlo(psi, d, k, 200_000, rng)
        assert abs(mean - eigenvalue_mu(psi, d, k)) < 3 * err + 1e-12


def test_gram_examples():
    assert gram_eigencheck(identity_psi(), 6) < 1e-10
    assert gram_eigencheck(power_psi(3), 8) < 1e-8
    assert gram_eigencheck(constant_psi(2.5), 4) < 1e-15


@pytest.mark.parametrize("layers", [["relu", "attn"], ["erf"], ["attn", "attn", "relu"]])
def test_rayleigh_quotients_depend_only_on_degree(layers):
    psi = compose_ck(layers)
    d = 8
    q = rayleigh_quotients(psi, d)
    mu = spectrum(psi, d).mu
    for U in range(2 ** d):
        assert q[U] == pytest.approx(mu[bin(U).count("1")], abs=1e-10)


def test_full_ordering_sweep_small():
    """Every stack up to depth 2 is ordered at d = 8 (the full sweep lives in the acceptance suite)."""
    for depth in (1, 2):
        for layers in itertools.product(KINDS, repeat=depth):
            for psi in (compose_ck(layers), compose_ntk(layers)):
                assert verify_weak_spectral_bias(spectrum(psi, 8))[0], layers
