"""Infinite-width kernel profiles and their exact eigenvalues on the Boolean cube.

On {-1,+1}^d every input has the same norm, so the CK/NTK of a stack of
dense and linear-attention layers is a univariate profile ``Psi(c)`` of the
normalized inner product ``c = <x, y>/d``.  Such a kernel is diagonalized by
the characters ``chi_U`` with an eigenvalue that depends only on ``|U|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .boolean import character, cube_points, popcount
from .errors import CapacityError, ConfigError

MAX_EXACT_DIM = 40
MAX_GRAM_DIM = 12
ORDER_TOL = 1e-12


# dual activation maps ---------------------------------------------------------
# Each entry is (kernel map, derivative map) for unit-normalized inputs.

def _clip(c):
    return np.clip(c, -1.0, 1.0)


def _relu(c):
    c = _clip(c)
    return (np.sqrt(1.0 - c * c) + (np.pi - np.arccos(c)) * c) / np.pi


def _relu_deriv(c):
    return (np.pi - np.arccos(_clip(c))) / np.pi


def _erf(c):
    return (2.0 / np.pi) * np.arcsin(2.0 * np.asarray(c) / 3.0)


def _erf_deriv(c):
    c = np.asarray(c)
    return (4.0 / (3.0 * np.pi)) / np.sqrt(1.0 - 4.0 * c * c / 9.0)


DUAL_MAPS = {
    "identity": (lambda c: np.asarray(c, dtype=float), lambda c: np.ones_like(np.asarray(c, dtype=float))),
    "relu": (_relu, _relu_deriv),
    "erf": (_erf, _erf_deriv),
    "attn": (lambda c: np.asarray(c, dtype=float) ** 3, lambda c: 3.0 * np.asarray(c, dtype=float) ** 2),
}


@dataclass(frozen=True)
class KernelPsi:
    """Immutable expression tree for a univariate kernel profile.

    ``op`` is one of ``var``, ``const``, ``map``, ``dmap``, ``add``, ``mul``,
    ``scale`` or ``pow``.  Build trees with :func:`compose_ck`,
    :func:`compose_ntk`, the helpers below, or arithmetic operators.
    """

    op: str
    args: tuple = ()

    def __call__(self, c):
        c = np.asarray(c, dtype=float)
        op, a = self.op, self.args
        if op == "var":
            return c
        if op == "const":
            return np.full_like(c, a[0])
        if op == "map":
            return DUAL_MAPS[a[0]][0](a[1](c))
        if op == "dmap":
            return DUAL_MAPS[a[0]][1](a[1](c))
        if op == "add":
            return a[0](c) + a[1](c)
        if op == "mul":
            return a[0](c) * a[1](c)
        if op == "scale":
            return a[0] * a[1](c)
        if op == "pow":
            return a[1](c) ** a[0]
        raise ConfigError(f"unknown kernel node {op!r}")

    def __add__(self, other):
        return KernelPsi("add", (self, _lift(other)))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, KernelPsi):
            return KernelPsi("mul", (self, other))
        return KernelPsi("scale", (float(other), self))

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * _lift(other)

    def __pow__(self, n: int):
        return KernelPsi("pow", (int(n), self))

    def __repr__(self):
        op, a = self.op, self.args
        if op == "var":
            return "c"
        if op == "const":
            return repr(a[0])
        if op in ("map", "dmap"):
            return f"{op}[{a[0]}]({a[1]!r})"
        if op == "scale":
            return f"{a[0]!r}*({a[1]!r})"
        if op == "pow":
            return f"({a[1]!r})**{a[0]}"
        sym = "+" if op == "add" else "*"
        return f"({a[0]!r} {sym} {a[1]!r})"


def _lift(x):
    return x if isinstance(x, KernelPsi) else KernelPsi("const", (float(x),))


def identity_psi() -> KernelPsi:
    return KernelPsi("var")


def constant_psi(value: float) -> KernelPsi:
    return KernelPsi("const", (float(value),))


def power_psi(n: int) -> KernelPsi:
    return KernelPsi("var") ** n


# layer descriptors -----------------------------------------------------------

_LAYER_ALIASES = {
    "identity": "identity",
    "linear": "identity",
    "relu": "relu",
    "erf": "erf",
    "attn": "attn",
    "linear_attention": "attn",
    "dense:identity": "identity",
    "dense:linear": "identity",
    "dense:relu": "relu",
    "dense:erf": "erf",
}


def parse_layer(desc: str) -> str:
    key = desc.strip().lower()
    if key not in _LAYER_ALIASES:
        raise ConfigError(f"unknown layer kind {desc!r}; expected one of {sorted(_LAYER_ALIASES)}")
    return _LAYER_ALIASES[key]


def parse_layers(spec) -> list[str]:
    """Accepts ``"dense:relu,attn,dense:relu"`` or a list of descriptors."""
    if isinstance(spec, str):
        spec = [s for s in spec.split(",") if s.strip()]
    layers = [parse_layer(s) for s in spec]
    if not layers:
        raise ConfigError("layer list is empty")
    return layers


def compose_ck(layers) -> KernelPsi:
    psi = identity_psi()
    for kind in parse_layers(layers):
        psi = KernelPsi("map", (kind, psi))
    return psi


def compose_ntk(layers) -> KernelPsi:
    """NTK profile via Theta_l = Theta_{l-1} * dPsi_l(Psi_{l-1}) + Psi_l, starting from c."""
    psi = theta = identity_psi()
    for kind in parse_layers(layers):
        theta = theta * KernelPsi("dmap", (kind, psi)) + KernelPsi("map", (kind, psi))
        psi = KernelPsi("map", (kind, psi))
    return theta


# eigenvalues -----------------------------------------------------------------

@lru_cache(maxsize=None)
def krawtchouk_row(d: int, k: int) -> tuple:
    """Integer weights w_j = sum_a C(k,a) C(d-k, j-a) (-1)^(k-a), j = 0..d.

    ``w_j`` is the sum of x^U over inputs with exactly j coordinates equal to +1.
    """
    row = []
    for j in range(d + 1):
        total = 0
        for a in range(max(0, j - (d - k)), min(k, j) + 1):
            term = math.comb(k, a) * math.comb(d - k, j - a)
            total += -term if (k - a) % 2 else term
        row.append(total)
    return tuple(row)


def eigenvalue_mu(psi: KernelPsi, d: int, k: int) -> float:
    """Exact mu_k = E_x[x^U Psi(mean(x))] for |U| = k."""
    if d < 1:
        raise ConfigError("dimension must be >= 1")
    if d > MAX_EXACT_DIM:
        raise CapacityError(f"exact eigenvalue sum limited to d <= {MAX_EXACT_DIM}")
    if not 0 <= k <= d:
        raise ConfigError(f"degree k={k} outside 0..{d}")
    grid = (2.0 * np.arange(d + 1) - d) / d
    vals = np.asarray(psi(grid), dtype=float)
    w = krawtchouk_row(d, k)
    return math.fsum(float(wj) * float(v) for wj, v in zip(w, vals)) / 2.0**d


@dataclass(frozen=True)
class Spectrum:
    d: int
    mu: tuple

    def __post_init__(self):
        mu = tuple(float(v) for v in self.mu)
        if len(mu) != self.d + 1:
            raise ConfigError(f"spectrum needs {self.d + 1} entries, got {len(mu)}")
        if not all(math.isfinite(v) for v in mu):
            raise ConfigError("spectrum has non-finite entries")
        object.__setattr__(self, "mu", mu)


def spectrum(psi: KernelPsi, d: int) -> Spectrum:
    return Spectrum(d, tuple(eigenvalue_mu(psi, d, k) for k in range(d + 1)))


def verify_weak_spectral_bias(s, tol: float = ORDER_TOL):
    """Check mu_0 >= mu_2 >= ... and mu_1 >= mu_3 >= ....

    Returns ``(True, None)`` or ``(False, (i, i + 2))`` for the first violating
    pair in degree order.
    """
    mu = s.mu if isinstance(s, Spectrum) else tuple(s)
    for i in range(len(mu) - 2):
        if mu[i + 2] > mu[i] + tol:
            return False, (i, i + 2)
    return True, None


def gram_matrix(psi: KernelPsi, d: int) -> np.ndarray:
    if d > MAX_GRAM_DIM:
        raise CapacityError(f"Gram check limited to d <= {MAX_GRAM_DIM}")
    x = cube_points(d).astype(float)
    return np.asarray(psi(x @ x.T / d))


def gram_eigencheck(psi: KernelPsi, d: int) -> float:
    """max_U || 2^-d K chi_U - mu_|U| chi_U ||_inf using the dense Gram matrix."""
    g = gram_matrix(psi, d)
    n = 1 << d
    chars = np.stack([character(u, d) for u in range(n)], axis=1)
    mu = np.array(spectrum(psi, d).mu)
    resid = g @ chars / n - chars * mu[popcount(np.arange(n))][None, :]
    return float(np.abs(resid).max())


def rayleigh_quotients(psi: KernelPsi, d: int) -> np.ndarray:
    """chi_U^T K chi_U / 4^d for every subset mask U."""
    g = gram_matrix(psi, d)
    n = 1 << d
    chars = np.stack([character(u, d) for u in range(n)], axis=1)
    return np.einsum("iu,ij,ju->u", chars, g, chars) / n**2


def mu_monte_carlo(psi: KernelPsi, d: int, k: int, n: int, rng: np.random.Generator):
    """Sample estimate of mu_k with its standard error."""
    x = rng.choice([-1.0, 1.0], size=(n, d))
    samples = np.prod(x[:, :k], axis=1) * psi(x.mean(axis=1))
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(n))
