"""Fourier analysis and sensitivity for functions on the Boolean cube {-1,+1}^d.

Truth tables are indexed by integers: bit ``j`` of the index holds coordinate
``x_{j+1}``, and a set bit means ``+1``.  Fourier coefficients are indexed by
subset bitmasks using the same bit-to-coordinate map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigError

MAX_DIM = 24
ZERO_TOL = 1e-9


def _check_dim(d: int) -> None:
    if d < 0:
        raise ConfigError(f"dimension must be non-negative, got {d}")
    if d > MAX_DIM:
        raise CapacityError(f"dimension {d} exceeds the transform guard d <= {MAX_DIM}")


def _table(values, d: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != 1 << d:
        raise ConfigError(f"table must have length 2^{d} = {1 << d}, got shape {arr.shape}")
    return arr


def popcount(masks: np.ndarray) -> np.ndarray:
    """Number of set bits of each entry of an integer array."""
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros(masks.shape, dtype=np.int64)
    m = masks.copy()
    while np.any(m):
        out += m & 1
        m >>= 1
    return out


def sign(x):
    """Elementwise sign with sign(0) = +1."""
    return np.where(np.asarray(x) >= 0, 1, -1)


@dataclass(frozen=True)
class BooleanFunction:
    d: int
    values: np.ndarray

    def __post_init__(self):
        _check_dim(self.d)
        object.__setattr__(self, "values", _table(self.values, self.d))

    def points(self) -> np.ndarray:
        """All inputs as a (2^d, d) array of +-1 in index order."""
        return cube_points(self.d)

    def is_boolean(self) -> bool:
        return bool(np.all(np.abs(self.values) == 1.0))


@dataclass(frozen=True)
class FourierCoefficients:
    d: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_dim(self.d)
        object.__setattr__(self, "coeffs", _table(self.coeffs, self.d))

    def __getitem__(self, subset) -> float:
        """Coefficient for a subset given as a bitmask or an iterable of 1-based coordinates."""
        if isinstance(subset, (int, np.integer)):
            return float(self.coeffs[subset])
        return float(self.coeffs[subset_mask(subset)])

    def weights_by_degree(self) -> np.ndarray:
        """Fourier weight sum_{|U|=k} f^(U)^2 for k = 0..d."""
        deg = popcount(np.arange(1 << self.d))
        return np.bincount(deg, weights=self.coeffs**2, minlength=self.d + 1)


def subset_mask(coords) -> int:
    """Bitmask of a set of 1-based coordinates, e.g. {1, 3} -> 0b101."""
    mask = 0
    for i in coords:
        mask |= 1 << (int(i) - 1)
    return mask


def cube_points(d: int) -> np.ndarray:
    _check_dim(d)
    idx = np.arange(1 << d)[:, None]
    bits = (idx >> np.arange(d)[None, :]) & 1
    return 2 * bits - 1


def character(mask: int, d: int) -> np.ndarray:
    """Table of chi_U(x) = prod_{i in U} x_i over all inputs."""
    _check_dim(d)
    idx = np.arange(1 << d)
    missing = popcount(mask & ~idx)
    return np.where(missing % 2 == 0, 1.0, -1.0)


def walsh_hadamard(a: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis.

    Computes ``out[..., s] = sum_i (-1)^{popcount(s & i)} a[..., i]``.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[-1]
    if n & (n - 1):
        raise ConfigError(f"length {n} is not a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        v = a.reshape(*lead, n // (2 * h), 2, h)
        x = v[..., 0, :].copy()
        y = v[..., 1, :]
        v[..., 0, :] += y
        v[..., 1, :] = x - y
        h *= 2
    return a


def _degree_signs(d: int) -> np.ndarray:
    return np.where(popcount(np.arange(1 << d)) % 2 == 0, 1.0, -1.0)


def fourier_transform(f: BooleanFunction) -> FourierCoefficients:
    # chi_U at index i equals (-1)^{|U|} (-1)^{popcount(U & i)} under the set-bit = +1 convention.
    coeffs = walsh_hadamard(f.values) * _degree_signs(f.d) / (1 << f.d)
    return FourierCoefficients(f.d, coeffs)


def inverse_transform(c: FourierCoefficients) -> BooleanFunction:
    return BooleanFunction(c.d, walsh_hadamard(c.coeffs * _degree_signs(c.d)))


def fourier_transform_batch(tables: np.ndarray, d: int) -> np.ndarray:
    """Fourier coefficients of many tables stacked along axis 0."""
    _check_dim(d)
    return walsh_hadamard(tables) * _degree_signs(d) / (1 << d)


def neighbour_flips(values: np.ndarray, d: int) -> np.ndarray:
    """Boolean array (..., 2^d, d): does flipping coordinate j at input x change sign(f)?"""
    s = sign(values)
    idx = np.arange(1 << d)
    out = np.empty(s.shape + (d,), dtype=bool)
    for j in range(d):
        out[..., j] = s != s[..., idx ^ (1 << j)]
    return out


def sensitivity_at(f: BooleanFunction, x: int) -> int:
    """Number of coordinates whose flip changes sign(f) at input index ``x``."""
    if not 0 <= x < 1 << f.d:
        raise ConfigError(f"input index {x} out of range for d={f.d}")
    s = sign(f.values)
    return int(sum(s[x] != s[x ^ (1 << j)] for j in range(f.d)))


def sensitivities(f: BooleanFunction) -> np.ndarray:
    """S(f, x) for every input, in index order."""
    return neighbour_flips(f.values, f.d).sum(axis=-1)


def average_sensitivity(f: BooleanFunction) -> float:
    return float(sensitivities(f).mean())


def normalized_sensitivity(f: BooleanFunction) -> float:
    if f.d == 0:
        return 0.0
    return average_sensitivity(f) / f.d


def total_influence_from_fourier(c: FourierCoefficients) -> float:
    """sum_U |U| f^(U)^2."""
    return float(np.dot(popcount(np.arange(1 << c.d)), c.coeffs**2))


def degree(f: BooleanFunction, tol: float = ZERO_TOL) -> int:
    c = fourier_transform(f).coeffs
    nz = np.flatnonzero(np.abs(c) > tol)
    if nz.size == 0:
        return 0
    return int(popcount(nz).max())


def max_sensitivity(f: BooleanFunction) -> int:
    return int(sensitivities(f).max()) if f.d else 0


def huang_bound_holds(f: BooleanFunction) -> bool:
    return degree(f) <= max_sensitivity(f) ** 2


def all_boolean_tables(d: int) -> np.ndarray:
    """Every +-1 truth table on d inputs, shape (2^(2^d), 2^d).  Only sensible for d <= 4."""
    if d > 4:
        raise CapacityError(f"exhaustive function sweep limited to d <= 4, got {d}")
    n = 1 << d
    codes = np.arange(1 << n, dtype=np.int64)[:, None]
    return np.where((codes >> np.arange(n)[None, :]) & 1, 1.0, -1.0)


def huang_sweep(d: int) -> dict:
    """Check degree <= max_sensitivity^2 for every +-1 function on d inputs.

    Returns counts and the worst slack ``S_max^2 - degree`` seen.
    """
    tables = all_boolean_tables(d)
    coeffs = fourier_transform_batch(tables, d)
    deg_of_mask = popcount(np.arange(1 << d))
    nonzero = np.abs(coeffs) > ZERO_TOL
    degs = np.where(nonzero, deg_of_mask[None, :], 0).max(axis=1)
    smax = neighbour_flips(tables, d).sum(axis=-1).max(axis=1)
    slack = smax**2 - degs
    return {
        "n_functions": int(tables.shape[0]),
        "n_violations": int(np.count_nonzero(slack < 0)),
        "min_slack": int(slack.min()),
    }


# builtin functions -------------------------------------------------------

def parity(d: int) -> BooleanFunction:
    return BooleanFunction(d, character((1 << d) - 1, d))


def dictator(d: int, i: int = 1) -> BooleanFunction:
    if not 1 <= i <= d:
        raise ConfigError(f"dictator coordinate {i} outside 1..{d}")
    return BooleanFunction(d, character(1 << (i - 1), d))


def majority(d: int) -> BooleanFunction:
    """sign(sum x_i), ties broken to +1."""
    return BooleanFunction(d, sign(cube_points(d).sum(axis=1)).astype(float))


def constant(d: int, value: float = 1.0) -> BooleanFunction:
    return BooleanFunction(d, np.full(1 << d, float(value)))


BUILTINS = {"parity": parity, "dictator": dictator, "majority": majority}
